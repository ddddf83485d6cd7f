#include "bproj/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bproj/errors.hpp"
#include "bproj/quant.hpp"

namespace bproj {

namespace {

constexpr LossSpec kNll{LossKind::nll, 0.0};

bool is_zero(const ImageVec& v) {
  for (double x : v) {
    if (x != 0.0) return false;
  }
  return true;
}

/// Appends (iterate, nll loss, adversarial flag) to the trace.
void record_point(std::vector<TracePoint>& trace, const Classifier& m, const ImageVec& y,
                  int t) {
  const ProbVector p = m.forward(y);
  int best = 0;
  for (int k = 1; k < static_cast<int>(p.size()); ++k) {
    if (p[k] > p[best]) best = k;
  }
  trace.push_back({y, nll_loss(p, t), best != t});
}

/// Builds the outcome, recomputing success and distortion from the returned
/// image so the reported numbers cannot drift from the artifact.
AttackOutcome finish(const Classifier& m, const ImageVec& x, int t, ImageVec adv, int grads,
                     std::optional<std::vector<TracePoint>> trace = std::nullopt) {
  AttackOutcome o;
  o.success = predict(m, adv) != t;
  o.distortion_l2 = l2_dist(adv, x);
  o.adversarial = std::move(adv);
  o.grads_used = grads;
  o.trace = std::move(trace);
  return o;
}

ImageVec sign_vec(const ImageVec& v) {
  ImageVec s(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    s[i] = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
  }
  return s;
}

void check_budget_params(int iters, const char* what) {
  if (iters < 1) throw DomainError(std::string(what) + ": iters must be >= 1");
}

}  // namespace

// ---------------------------------------------------------------------------
// Shared pieces

void AdamState::update(std::vector<double>& x, const std::vector<double>& grad, double lr) {
  if (x.size() != m.size() || grad.size() != m.size()) {
    throw DimensionError("AdamState::update: size mismatch");
  }
  ++step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (size_t j = 0; j < x.size(); ++j) {
    m[j] = beta1 * m[j] + (1.0 - beta1) * grad[j];
    v[j] = beta2 * v[j] + (1.0 - beta2) * grad[j] * grad[j];
    x[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
  }
}

double gamma_schedule(int i, int iters, double gamma_min, double gamma_max) {
  if (iters < 1) throw DomainError("gamma_schedule: iters must be >= 1");
  if (i < 0) throw DomainError("gamma_schedule: negative index");
  if (!(gamma_min > 0.0) || gamma_min > gamma_max) {
    throw DomainError("gamma_schedule: need 0 < gamma_min <= gamma_max");
  }
  return gamma_min + static_cast<double>(i) * (gamma_max - gamma_min) /
                         (static_cast<double>(iters) + 1.0);
}

ImageVec bp_case_out(const ImageVec& x, const ImageVec& y, const ImageVec& g_hat,
                     double eps) {
  if (eps < 0.0) throw DomainError("bp_case_out: negative eps");
  if (is_zero(g_hat)) throw ZeroVectorError("bp_case_out: zero direction");
  const double r = dot(sub(y, x), g_hat);
  const ImageVec foot = add_scaled(x, r, g_hat);  // closest point of the plane to x
  const double s2 = eps * eps - r * r;
  if (s2 <= 0.0) return foot;  // the eps-sphere misses the plane: foot is optimal
  const ImageVec w = sub(y, foot);
  const double wn = l2_norm(w);
  ImageVec dir;
  if (wn > 0.0) {
    dir = normalize(w);
  } else {
    // y sits exactly at the foot point: any in-plane direction is optimal.
    // Use the canonical basis vector least aligned with g_hat (lowest index
    // on ties), made orthogonal to g_hat.
    if (y.size() < 2) return foot;
    size_t k = 0;
    for (size_t j = 1; j < g_hat.size(); ++j) {
      if (std::fabs(g_hat[j]) < std::fabs(g_hat[k])) k = j;
    }
    dir.assign(y.size(), 0.0);
    dir[k] = 1.0;
    dir = normalize(add_scaled(dir, -g_hat[k], g_hat));
  }
  return add_scaled(foot, std::sqrt(s2), dir);
}

ImageVec bp_case_in(const ImageVec& x, const ImageVec& y, const ImageVec& g_hat, double eps) {
  if (eps < 0.0) throw DomainError("bp_case_in: negative eps");
  if (is_zero(g_hat)) throw ZeroVectorError("bp_case_in: zero direction");
  const ImageVec delta = sub(y, x);
  const double dn = l2_norm(delta);
  if (eps < dn) {
    throw DomainError("bp_case_in: eps must be >= |y - x|");
  }
  const double r = dot(delta, g_hat);
  const double disc = eps * eps - dn * dn + r * r;  // >= r^2 >= 0 given eps >= |delta|
  return add_scaled(y, -(r + std::sqrt(disc)), g_hat);
}

// ---------------------------------------------------------------------------
// Fixed-budget baselines

AttackOutcome fgsm(const Classifier& m, const ImageVec& x, int t, double eps,
                   const QuantGrid& g) {
  if (eps < 0.0) throw DomainError("fgsm: negative eps");
  CountingClassifier counter(m);
  const ImageVec grad = counter.input_gradient(x, t, kNll);
  if (is_zero(grad)) {
    return finish(m, x, t, round_to_grid(x, g), static_cast<int>(counter.grads()));
  }
  const ImageVec y = round_to_grid(clip01(add_scaled(x, -eps, sign_vec(grad))), g);
  return finish(m, x, t, y, static_cast<int>(counter.grads()));
}

AttackOutcome ifgsm(const Classifier& m, const ImageVec& x, int t, double eps, double alpha,
                    int iters, const QuantGrid& g, bool record_trace) {
  if (eps < 0.0) throw DomainError("ifgsm: negative eps");
  if (alpha <= 0.0) throw DomainError("ifgsm: alpha must be > 0");
  check_budget_params(iters, "ifgsm");
  CountingClassifier counter(m);
  const Ball ball{x, eps, NormKind::linf};
  std::vector<TracePoint> trace;
  if (record_trace) record_point(trace, m, x, t);
  ImageVec y = x;
  for (int i = 0; i < iters; ++i) {
    const ImageVec grad = counter.input_gradient(y, t, kNll);
    if (!is_zero(grad)) {  // a zero gradient freezes the iterate this step
      y = clip01(project_ball(add_scaled(y, -alpha, sign_vec(grad)), ball));
    }
    if (record_trace) record_point(trace, m, y, t);
  }
  return finish(m, x, t, round_to_grid(y, g), static_cast<int>(counter.grads()),
                record_trace ? std::optional(std::move(trace)) : std::nullopt);
}

AttackOutcome pgd2(const Classifier& m, const ImageVec& x, int t, double eps, double alpha,
                   int iters, const QuantGrid& g, bool record_trace) {
  if (eps < 0.0) throw DomainError("pgd2: negative eps");
  if (alpha <= 0.0) throw DomainError("pgd2: alpha must be > 0");
  check_budget_params(iters, "pgd2");
  CountingClassifier counter(m);
  const Ball ball{x, eps, NormKind::l2};
  std::vector<TracePoint> trace;
  if (record_trace) record_point(trace, m, x, t);
  ImageVec y = x;
  for (int i = 0; i < iters; ++i) {
    const ImageVec grad = counter.input_gradient(y, t, kNll);
    if (!is_zero(grad)) {  // a zero gradient freezes the iterate this step
      y = clip01(project_ball(add_scaled(y, -alpha, normalize(grad)), ball));
    }
    if (record_trace) record_point(trace, m, y, t);
  }
  return finish(m, x, t, round_to_grid(y, g), static_cast<int>(counter.grads()),
                record_trace ? std::optional(std::move(trace)) : std::nullopt);
}

// ---------------------------------------------------------------------------
// Penalty attack with lambda search

namespace {

double sigmoid(double w) { return 1.0 / (1.0 + std::exp(-w)); }

}  // namespace

AttackOutcome cw(const Classifier& m, const ImageVec& x, int t, const CwParams& p,
                 const QuantGrid& g) {
  if (p.search_steps < 1) throw DomainError("cw: search_steps must be >= 1");
  check_budget_params(p.inner_iters, "cw");
  if (p.learning_rate <= 0.0) throw DomainError("cw: learning_rate must be > 0");
  if (p.lambda0 <= 0.0) throw DomainError("cw: lambda0 must be > 0");
  if (p.margin < 0.0) throw DomainError("cw: negative margin");

  CountingClassifier counter(m);
  const LossSpec margin_spec{LossKind::margin, p.margin};
  const size_t n = x.size();

  // Optimize in logit space: y = sigmoid(w) stays in (0, 1) automatically.
  std::vector<double> w0(n);
  for (size_t j = 0; j < n; ++j) {
    const double xe = std::min(1.0 - 1e-6, std::max(1e-6, x[j]));
    w0[j] = std::log(xe / (1.0 - xe));
  }

  std::vector<TracePoint> trace;
  ImageVec best;  // minimal-distortion adversarial iterate across all stages
  double best_dist = 0.0;
  ImageVec best_attempt;  // minimal margin-loss iterate, for all-stages-failed
  double best_attempt_loss = 0.0;
  bool have_best = false, have_attempt = false;

  double lambda = p.lambda0;
  double lambda_lo = 0.0, lambda_hi = 0.0;  // bracketing failed/successful lambdas

  for (int stage = 0; stage < p.search_steps; ++stage) {
    std::vector<double> w = w0;  // fresh restart with the new lambda
    AdamState adam(n);
    ImageVec y(n);
    for (size_t j = 0; j < n; ++j) y[j] = sigmoid(w[j]);
    bool stage_success = false;

    for (int it = 0; it < p.inner_iters; ++it) {
      // Cost = |y - x|^2 + lambda * margin_loss(y); one counted gradient call
      // per inner iteration.
      const ImageVec gm = counter.input_gradient(y, t, margin_spec);
      std::vector<double> gw(n);
      for (size_t j = 0; j < n; ++j) {
        const double gy = 2.0 * (y[j] - x[j]) + lambda * gm[j];
        gw[j] = gy * y[j] * (1.0 - y[j]);  // chain rule through the sigmoid
      }
      adam.update(w, gw, p.learning_rate);
      for (size_t j = 0; j < n; ++j) y[j] = sigmoid(w[j]);

      const ProbVector probs = m.forward(y);
      int pred = 0;
      for (int k = 1; k < m.num_classes(); ++k) {
        if (probs[k] > probs[pred]) pred = k;
      }
      const bool adv = pred != t;
      if (p.record_trace) trace.push_back({y, nll_loss(probs, t), adv});
      if (adv) {
        stage_success = true;
        const double d = l2_dist(y, x);
        if (!have_best || d < best_dist) {
          best = y;
          best_dist = d;
          have_best = true;
        }
      } else {
        const double ml = margin_loss(probs, t, p.margin);
        if (!have_attempt || ml < best_attempt_loss) {
          best_attempt = y;
          best_attempt_loss = ml;
          have_attempt = true;
        }
      }
    }

    // Bracketed geometric lambda search: grow on failure, shrink on success,
    // bisect geometrically once both sides are known.
    if (stage_success) {
      lambda_hi = lambda_hi == 0.0 ? lambda : std::min(lambda_hi, lambda);
    } else {
      lambda_lo = std::max(lambda_lo, lambda);
    }
    if (lambda_lo > 0.0 && lambda_hi > 0.0) {
      lambda = std::sqrt(lambda_lo * lambda_hi);
    } else if (lambda_hi > 0.0) {
      lambda = lambda_hi / 10.0;
    } else {
      lambda = lambda_lo * 10.0;
    }
  }

  const ImageVec chosen = have_best ? best : (have_attempt ? best_attempt : x);
  return finish(m, x, t, round_to_grid(chosen, g), static_cast<int>(counter.grads()),
                p.record_trace ? std::optional(std::move(trace)) : std::nullopt);
}

// ---------------------------------------------------------------------------
// Decoupled-norm attack

AttackOutcome ddn(const Classifier& m, const ImageVec& x, int t, const DdnParams& p,
                  const QuantGrid& g) {
  if (p.eps0 <= 0.0) throw DomainError("ddn: eps0 must be > 0");
  if (p.gamma <= 0.0 || p.gamma >= 1.0) throw DomainError("ddn: gamma must be in (0, 1)");
  if (p.alpha <= 0.0) throw DomainError("ddn: alpha must be > 0");
  check_budget_params(p.iters, "ddn");

  CountingClassifier counter(m);
  std::vector<TracePoint> trace;
  if (p.record_trace) record_point(trace, m, x, t);

  ImageVec y = x;
  ImageVec dir;  // kept across steps so a zero gradient freezes the direction
  ImageVec best;
  double best_dist = 0.0;
  bool have_best = false;

  for (int i = 0; i < p.iters; ++i) {
    const ImageVec grad = counter.input_gradient(y, t, kNll);
    if (!is_zero(grad)) {
      dir = normalize(grad);
    } else if (dir.empty()) {
      break;  // no direction yet and none available: nothing can move
    }
    const bool adv = predict(m, y) != t;
    const double dist = l2_dist(y, x);
    // Radius rule: start from eps0, then shrink while adversarial and grow
    // while not, always relative to the current distortion.
    const double rho = (i == 0 || dist == 0.0)
                           ? p.eps0
                           : (adv ? (1.0 - p.gamma) * dist : (1.0 + p.gamma) * dist);
    const ImageVec stepped = add_scaled(y, -p.alpha, dir);
    ImageVec projected;
    if (l2_dist(stepped, x) == 0.0) {
      projected = add_scaled(x, -rho, dir);  // step landed on x: keep moving along -dir
    } else {
      projected = project_sphere(stepped, x, rho);
    }
    y = round_to_grid(clip01(std::move(projected)), g);
    if (p.record_trace) record_point(trace, m, y, t);
    if (predict(m, y) != t) {
      const double d = l2_dist(y, x);
      if (!have_best || d < best_dist) {
        best = y;
        best_dist = d;
        have_best = true;
      }
    }
  }

  return finish(m, x, t, have_best ? best : y, static_cast<int>(counter.grads()),
                p.record_trace ? std::optional(std::move(trace)) : std::nullopt);
}

// ---------------------------------------------------------------------------
// Boundary-walking attack

namespace {

void check_bp_params(const BpParams& p) {
  check_budget_params(p.iters, "bp");
  if (p.alpha <= 0.0) throw DomainError("bp: alpha must be > 0");
  if (!(p.gamma_min > 0.0) || p.gamma_min > p.gamma_max || p.gamma_max > 1.0) {
    throw DomainError("bp: need 0 < gamma_min <= gamma_max <= 1");
  }
}

}  // namespace

Stage1Result bp_stage1(const Classifier& m, const ImageVec& x, int t, const BpParams& p,
                       const QuantGrid* grid, bool record_trace) {
  check_bp_params(p);
  Stage1Result r;
  r.iterate = x;
  if (record_trace) record_point(r.trace, m, x, t);
  for (int i = 0; i < p.iters; ++i) {
    if (predict(m, r.iterate) != t) {
      r.iters_used = i;
      r.success = true;
      return r;
    }
    const ImageVec grad = m.input_gradient(r.iterate, t, kNll);
    if (is_zero(grad)) {
      r.iters_used = i + 1;
      r.success = false;
      return r;  // immediate failure: no descent direction
    }
    const double gamma = gamma_schedule(i, p.iters, p.gamma_min, p.gamma_max);
    ImageVec y = clip01(add_scaled(r.iterate, -p.alpha * gamma, normalize(grad)));
    if (grid != nullptr) y = round_to_grid(y, *grid);
    r.iterate = std::move(y);
    if (record_trace) record_point(r.trace, m, r.iterate, t);
  }
  r.iters_used = p.iters;
  r.success = predict(m, r.iterate) != t;
  return r;
}

Stage2Result bp_stage2(const Classifier& m, const ImageVec& x, int t, const ImageVec& y_start,
                       int i_start, const BpParams& p, const QuantGrid& grid,
                       bool record_trace) {
  check_bp_params(p);
  if (i_start < 0 || i_start > p.iters) throw DomainError("bp_stage2: i_start outside [0, iters]");

  Stage2Result r;
  r.last = y_start;
  if (predict(m, y_start) != t) {
    r.best = y_start;
    r.found_adversarial = true;
    if (p.quant_mode == QuantMode::round_at_end) r.candidates.push_back(y_start);
  }
  double best_dist = r.found_adversarial ? l2_dist(y_start, x) : 0.0;

  ImageVec y = y_start;
  for (int i = i_start; i < p.iters; ++i) {
    const ImageVec grad = m.input_gradient(y, t, kNll);
    if (is_zero(grad)) break;  // keep the best found so far
    const ImageVec g_hat = normalize(grad);
    const bool adv = predict(m, y) != t;
    const double dist = l2_dist(y, x);
    const double gamma = gamma_schedule(i, p.iters, p.gamma_min, p.gamma_max);

    ImageVec z;
    if (adv) {
      z = bp_case_out(x, y, g_hat, gamma * dist);  // pull distortion down to gamma|delta|
    } else {
      z = bp_case_in(x, y, g_hat, dist / gamma);  // spend budget |delta|/gamma on the loss
    }

    switch (p.quant_mode) {
      case QuantMode::adaptive:
        y = adv ? q_out(x, z, y, grid) : q_in(z, y, grid);
        break;
      case QuantMode::round_each_iter:
        y = round_to_grid(z, grid);
        break;
      case QuantMode::round_at_end:
        y = clip01(std::move(z));
        break;
    }
    if (record_trace) record_point(r.trace, m, y, t);

    if (predict(m, y) != t) {
      const double d = l2_dist(y, x);
      if (!r.found_adversarial || d < best_dist) {
        r.best = y;
        best_dist = d;
        r.found_adversarial = true;
      }
      if (p.quant_mode == QuantMode::round_at_end) r.candidates.push_back(y);
    }
  }
  r.last = y;
  if (!r.found_adversarial) r.best = y;
  return r;
}

AttackOutcome bp(const Classifier& m, const ImageVec& x, int t, const BpParams& p,
                 const QuantGrid& g) {
  check_bp_params(p);
  CountingClassifier counter(m);
  const QuantGrid* stage1_grid = p.quant_mode == QuantMode::round_at_end ? nullptr : &g;

  Stage1Result s1 = bp_stage1(counter, x, t, p, stage1_grid, p.record_trace);
  std::vector<TracePoint> trace = std::move(s1.trace);

  if (!s1.success) {
    return finish(m, x, t, round_to_grid(s1.iterate, g), static_cast<int>(counter.grads()),
                  p.record_trace ? std::optional(std::move(trace)) : std::nullopt);
  }

  Stage2Result s2 =
      bp_stage2(counter, x, t, s1.iterate, s1.iters_used, p, g, p.record_trace);
  for (TracePoint& tp : s2.trace) trace.push_back(std::move(tp));

  ImageVec adv;
  if (p.quant_mode == QuantMode::round_at_end) {
    // Real-valued candidates: return the least-distorted one that survives
    // rounding; fall back to the rounded last iterate.
    std::stable_sort(s2.candidates.begin(), s2.candidates.end(),
                     [&](const ImageVec& a, const ImageVec& b) {
                       return l2_dist(a, x) < l2_dist(b, x);
                     });
    bool chosen = false;
    for (const ImageVec& c : s2.candidates) {
      ImageVec rounded = round_to_grid(c, g);
      if (predict(m, rounded) != t) {
        adv = std::move(rounded);
        chosen = true;
        break;
      }
    }
    if (!chosen) adv = round_to_grid(s2.last, g);
  } else {
    adv = s2.found_adversarial ? s2.best : s2.last;
  }

  return finish(m, x, t, std::move(adv), static_cast<int>(counter.grads()),
                p.record_trace ? std::optional(std::move(trace)) : std::nullopt);
}

}  // namespace bproj
