#pragma once

#include <cstdint>
#include <vector>

#include "bproj/vec.hpp"

namespace bproj {

/// Class probabilities: nonnegative, summing to 1.
using ProbVector = std::vector<double>;

enum class LossKind { nll, margin };

/// Loss the attacks differentiate and descend.
///
/// nll is log p_t: driving it down erodes the true class probability.
/// margin is the hinge max(0, log p_t - max_{k != t} log p_k + margin): zero
/// exactly when some other class beats the true one by at least `margin`.
struct LossSpec {
  LossKind kind = LossKind::nll;
  double margin = 0.0;
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual int input_dim() const = 0;
  virtual int num_classes() const = 0;
  virtual ProbVector forward(const ImageVec& x) const = 0;
  /// Gradient of the loss w.r.t. the input at x, for true label t.
  virtual ImageVec input_gradient(const ImageVec& x, int t, const LossSpec& loss) const = 0;
};

/// Argmax class; ties resolve to the lowest index. Throws DimensionError when
/// x does not match the model input size.
int predict(const Classifier& m, const ImageVec& x);

/// log p_t; -infinity when p_t == 0. Throws InvalidTargetError for a bad t.
double nll_loss(const ProbVector& p, int t);

/// max(0, log p_t - max_{k != t} log p_k + margin).
double margin_loss(const ProbVector& p, int t, double margin = 0.0);

/// Fully connected net: affine layers with LeakyReLU(0.01) activations
/// between them and a softmax on top. 64-bit floats throughout.
class MlpModel final : public Classifier {
 public:
  struct Layer {
    int in = 0;
    int out = 0;
    std::vector<double> w;  // row-major: w[o * in + i]
    std::vector<double> b;  // size out
  };

  MlpModel() = default;

  /// Xavier-uniform initialization of all layers from the given seed.
  MlpModel(int input_dim, int num_classes, const std::vector<int>& hidden_sizes,
           uint64_t seed);

  int input_dim() const override { return input_dim_; }
  int num_classes() const override { return num_classes_; }
  ProbVector forward(const ImageVec& x) const override;
  ImageVec input_gradient(const ImageVec& x, int t, const LossSpec& loss) const override;

  std::vector<double> logits(const ImageVec& x) const;

  /// Forward pass keeping every layer input, for backprop.
  struct Trace {
    std::vector<std::vector<double>> pre;   // pre-activations per layer
    std::vector<std::vector<double>> acts;  // acts[0] = x, then post-activation outputs
    ProbVector probs;
  };
  Trace forward_trace(const ImageVec& x) const;

  /// Gradient of the loss at the softmax input (logits); shared by input- and
  /// parameter-space backprop. Returns all zeros when the hinge is inactive.
  std::vector<double> logit_gradient(const ProbVector& probs, int t,
                                     const LossSpec& loss) const;

  std::vector<Layer> layers;  // hidden layers, then the output layer
  double leaky_slope = 0.01;
  uint64_t init_seed = 0;     // recorded for reproducibility
  uint32_t epochs_trained = 0;

 private:
  int input_dim_ = 0;
  int num_classes_ = 0;

  friend struct MlpAccess;
};

/// Grants train/io code access to the private dimensions when rebuilding a
/// model from a file.
struct MlpAccess {
  static void set_dims(MlpModel& m, int input_dim, int num_classes) {
    m.input_dim_ = input_dim;
    m.num_classes_ = num_classes;
  }
};

/// Analytic two-class classifier on [0,1]^2. Class 1 lives inside the disk
/// |p - center| < r0: p1 = sigmoid(sharpness * (r0 - |p - center|)). Both the
/// forward pass and the input gradient are closed-form, which makes attack
/// behavior on it easy to reason about in tests and 2D traces.
class Toy2DModel final : public Classifier {
 public:
  Toy2DModel() = default;
  Toy2DModel(double cx_in, double cy_in, double r0_in, double sharpness_in)
      : cx(cx_in), cy(cy_in), r0(r0_in), sharpness(sharpness_in) {}

  int input_dim() const override { return 2; }
  int num_classes() const override { return 2; }
  ProbVector forward(const ImageVec& x) const override;
  ImageVec input_gradient(const ImageVec& x, int t, const LossSpec& loss) const override;

  double cx = 0.15;
  double cy = 0.15;
  double r0 = 0.35;
  double sharpness = 12.0;
};

/// Decorator that counts input_gradient calls. Attacks evaluate through it so
/// the gradient budget they report is the number of calls actually made.
class CountingClassifier final : public Classifier {
 public:
  explicit CountingClassifier(const Classifier& inner) : inner_(inner) {}
  int input_dim() const override { return inner_.input_dim(); }
  int num_classes() const override { return inner_.num_classes(); }
  ProbVector forward(const ImageVec& x) const override { return inner_.forward(x); }
  ImageVec input_gradient(const ImageVec& x, int t, const LossSpec& loss) const override {
    ++grads_;
    return inner_.input_gradient(x, t, loss);
  }
  long grads() const { return grads_; }

 private:
  const Classifier& inner_;
  mutable long grads_ = 0;
};

}  // namespace bproj
