#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bproj/model.hpp"
#include "bproj/vec.hpp"

namespace bproj {

/// One point of an attack trajectory: the iterate, the true-class log
/// probability there, and whether the model misclassifies it.
struct TracePoint {
  ImageVec iterate;
  double loss = 0.0;
  bool adversarial = false;
};

struct AttackOutcome {
  ImageVec adversarial;        // returned image, always on the quantization grid
  bool success = false;        // predict(adversarial) != true label, recomputed at return
  double distortion_l2 = 0.0;  // |adversarial - x|, recomputed at return
  int grads_used = 0;          // input_gradient calls, from a counting wrapper
  std::optional<std::vector<TracePoint>> trace;
};

/// How an iterative attack interacts with the quantization grid.
enum class QuantMode {
  round_at_end,     // real-valued iterates, round once on return
  round_each_iter,  // plain rounding of every iterate
  adaptive,         // plain rounding in stage 1, q_out/q_in in stage 2
};

/// Boundary-walking attack parameters. `iters` is the total gradient budget
/// across both stages.
struct BpParams {
  double alpha = 2.0;      // stage-1 step multiplier
  double gamma_min = 0.7;  // distortion schedule start
  double gamma_max = 1.0;  // distortion schedule end (exclusive)
  int iters = 20;
  QuantMode quant_mode = QuantMode::adaptive;
  bool record_trace = false;
};

/// Decoupled-norm attack parameters: gradient step of size alpha, then
/// projection onto a sphere around x whose radius shrinks by gamma while the
/// iterate is adversarial and grows by gamma while it is not.
struct DdnParams {
  double eps0 = 1.0;   // first-step radius
  double gamma = 0.05;
  double alpha = 1.0;
  int iters = 20;
  bool record_trace = false;
};

/// Penalty-based attack parameters: Adam minimizes
/// |y - x|^2 + lambda * margin_loss(y) in logit (sigmoid-inverse) space,
/// with lambda adjusted between stages by bracketed geometric search.
struct CwParams {
  double lambda0 = 1.0;
  int search_steps = 5;
  int inner_iters = 20;
  double learning_rate = 0.5;
  double margin = 0.0;
  bool record_trace = false;
};

/// Adam optimizer state (beta1 0.9, beta2 0.999, eps 1e-8, bias correction).
struct AdamState {
  std::vector<double> m, v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(size_t dim) : m(dim, 0.0), v(dim, 0.0) {}
  void update(std::vector<double>& x, const std::vector<double>& grad, double lr);
};

/// Distortion schedule gamma_i = gamma_min + i (gamma_max - gamma_min)/(K+1),
/// so gamma rises toward (but never reaches) gamma_max across the budget K.
double gamma_schedule(int i, int iters, double gamma_min, double gamma_max);

/// OUT step: y is adversarial. Returns the point of the tangent hyperplane
/// {v : <v - y, g_hat> = 0} closest to distortion eps from x — the exact
/// minimizer of ||v - x| - eps| over the plane. Keeps the loss to first
/// order while pulling the distortion toward eps.
ImageVec bp_case_out(const ImageVec& x, const ImageVec& y, const ImageVec& g_hat, double eps);

/// IN step: y is not adversarial. Moves along -g_hat from y to the sphere
/// S[x; eps] — the exact minimizer of the linearized loss at distortion eps.
/// Requires eps >= |y - x|.
ImageVec bp_case_in(const ImageVec& x, const ImageVec& y, const ImageVec& g_hat, double eps);

struct Stage1Result {
  ImageVec iterate;    // first adversarial iterate, or the last iterate on failure
  int iters_used = 0;  // gradient calls consumed
  bool success = false;
  std::vector<TracePoint> trace;  // x and every produced iterate (when recorded)
};

/// Stage 1: normalized-gradient descent with step alpha * gamma_i, clipped to
/// [0,1]^n (and rounded to `grid` when given), until the prediction flips or
/// the budget runs out. A null grid keeps the iterates real-valued.
Stage1Result bp_stage1(const Classifier& m, const ImageVec& x, int t, const BpParams& p,
                       const QuantGrid* grid, bool record_trace = false);

struct Stage2Result {
  ImageVec best;   // minimal-distortion adversarial iterate seen (incl. y_start)
  ImageVec last;   // final iterate y_K
  bool found_adversarial = false;
  std::vector<TracePoint> trace;  // iterates produced by stage 2 (y_start excluded)
  std::vector<ImageVec> candidates;  // round_at_end only: adversarial real iterates
};

/// Stage 2: walk the decision boundary from y_start, spending the remaining
/// budget (iters - i_start) on alternating OUT/IN closed-form steps,
/// quantizing according to p.quant_mode.
Stage2Result bp_stage2(const Classifier& m, const ImageVec& x, int t, const ImageVec& y_start,
                       int i_start, const BpParams& p, const QuantGrid& grid,
                       bool record_trace = false);

/// Single signed-gradient step of size eps, clipped and rounded.
AttackOutcome fgsm(const Classifier& m, const ImageVec& x, int t, double eps,
                   const QuantGrid& g);

/// Iterated signed-gradient steps of size alpha, projected onto the linf ball
/// B[x; eps] and clipped each iteration; rounded once at the end.
AttackOutcome ifgsm(const Classifier& m, const ImageVec& x, int t, double eps, double alpha,
                    int iters, const QuantGrid& g, bool record_trace = false);

/// Projected gradient descent with normalized-gradient steps of size alpha on
/// the l2 ball B[x; eps]; rounded once at the end.
AttackOutcome pgd2(const Classifier& m, const ImageVec& x, int t, double eps, double alpha,
                   int iters, const QuantGrid& g, bool record_trace = false);

AttackOutcome cw(const Classifier& m, const ImageVec& x, int t, const CwParams& p,
                 const QuantGrid& g);

AttackOutcome ddn(const Classifier& m, const ImageVec& x, int t, const DdnParams& p,
                  const QuantGrid& g);

/// The two-stage boundary attack: stage 1 until the first misclassification,
/// stage 2 boundary refinement; returns the minimal-distortion adversarial
/// grid point found.
AttackOutcome bp(const Classifier& m, const ImageVec& x, int t, const BpParams& p,
                 const QuantGrid& g);

}  // namespace bproj
