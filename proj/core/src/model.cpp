#include "bproj/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bproj/errors.hpp"
#include "bproj/rng.hpp"

namespace bproj {

namespace {

void require_label(int t, int num_classes) {
  if (t < 0 || t >= num_classes) {
    throw InvalidTargetError("label " + std::to_string(t) + " outside [0, " +
                             std::to_string(num_classes) + ")");
  }
}

void require_input(const ImageVec& x, int dim, const char* what) {
  if (static_cast<int>(x.size()) != dim) {
    throw DimensionError(std::string(what) + ": input size " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(dim));
  }
}

ProbVector softmax(const std::vector<double>& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  ProbVector p(z.size());
  double sum = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double safe_log(double p) {
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

}  // namespace

int predict(const Classifier& m, const ImageVec& x) {
  require_input(x, m.input_dim(), "predict");
  const ProbVector p = m.forward(x);
  int best = 0;
  for (int k = 1; k < static_cast<int>(p.size()); ++k) {
    if (p[k] > p[best]) best = k;  // strict: ties keep the lowest index
  }
  return best;
}

double nll_loss(const ProbVector& p, int t) {
  require_label(t, static_cast<int>(p.size()));
  return safe_log(p[t]);
}

double margin_loss(const ProbVector& p, int t, double margin) {
  require_label(t, static_cast<int>(p.size()));
  double best_other = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < static_cast<int>(p.size()); ++k) {
    if (k != t) best_other = std::max(best_other, safe_log(p[k]));
  }
  return std::max(0.0, safe_log(p[t]) - best_other + margin);
}

// ---------------------------------------------------------------------------
// MlpModel

MlpModel::MlpModel(int input_dim, int num_classes, const std::vector<int>& hidden_sizes,
                   uint64_t seed)
    : init_seed(seed), input_dim_(input_dim), num_classes_(num_classes) {
  if (input_dim < 1 || num_classes < 2) {
    throw DomainError("MlpModel needs input_dim >= 1 and num_classes >= 2");
  }
  for (int h : hidden_sizes) {
    if (h < 1) throw DomainError("hidden layer size must be positive");
  }
  Rng rng(seed);
  int in = input_dim;
  std::vector<int> outs(hidden_sizes);
  outs.push_back(num_classes);
  for (int out : outs) {
    Layer layer;
    layer.in = in;
    layer.out = out;
    layer.w.resize(static_cast<size_t>(in) * out);
    layer.b.assign(out, 0.0);
    const double bound = std::sqrt(6.0 / (in + out));
    for (double& w : layer.w) w = rng.uniform(-bound, bound);
    layers.push_back(std::move(layer));
    in = out;
  }
}

std::vector<double> MlpModel::logits(const ImageVec& x) const {
  require_input(x, input_dim_, "MlpModel::logits");
  std::vector<double> a = x;
  for (size_t l = 0; l < layers.size(); ++l) {
    const Layer& L = layers[l];
    std::vector<double> z(L.out);
    for (int o = 0; o < L.out; ++o) {
      const double* row = L.w.data() + static_cast<size_t>(o) * L.in;
      double s = L.b[o];
      for (int i = 0; i < L.in; ++i) s += row[i] * a[i];
      z[o] = s;
    }
    if (l + 1 < layers.size()) {
      for (double& v : z) {
        if (v < 0.0) v *= leaky_slope;
      }
    }
    a = std::move(z);
  }
  return a;
}

ProbVector MlpModel::forward(const ImageVec& x) const { return softmax(logits(x)); }

MlpModel::Trace MlpModel::forward_trace(const ImageVec& x) const {
  require_input(x, input_dim_, "MlpModel::forward_trace");
  Trace tr;
  tr.acts.push_back(x);
  for (size_t l = 0; l < layers.size(); ++l) {
    const Layer& L = layers[l];
    const std::vector<double>& a = tr.acts.back();
    std::vector<double> z(L.out);
    for (int o = 0; o < L.out; ++o) {
      const double* row = L.w.data() + static_cast<size_t>(o) * L.in;
      double s = L.b[o];
      for (int i = 0; i < L.in; ++i) s += row[i] * a[i];
      z[o] = s;
    }
    tr.pre.push_back(z);
    if (l + 1 < layers.size()) {
      for (double& v : z) {
        if (v < 0.0) v *= leaky_slope;
      }
    }
    tr.acts.push_back(std::move(z));
  }
  tr.probs = softmax(tr.pre.back());
  return tr;
}

std::vector<double> MlpModel::logit_gradient(const ProbVector& probs, int t,
                                             const LossSpec& loss) const {
  require_label(t, num_classes_);
  std::vector<double> g(num_classes_, 0.0);
  if (loss.kind == LossKind::nll) {
    // d log p_t / d z_k = 1{k == t} - p_k
    for (int k = 0; k < num_classes_; ++k) g[k] = (k == t ? 1.0 : 0.0) - probs[k];
    return g;
  }
  // Hinge on the log-prob (equivalently logit) gap. Inactive hinge: zero.
  if (margin_loss(probs, t, loss.margin) <= 0.0) return g;
  int best_other = t == 0 ? 1 : 0;
  for (int k = 0; k < num_classes_; ++k) {
    if (k != t && probs[k] > probs[best_other]) best_other = k;
  }
  g[t] = 1.0;
  g[best_other] = -1.0;
  return g;
}

ImageVec MlpModel::input_gradient(const ImageVec& x, int t, const LossSpec& loss) const {
  const Trace tr = forward_trace(x);
  std::vector<double> delta = logit_gradient(tr.probs, t, loss);
  // Backpropagate delta from the logits down to the input.
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    const Layer& L = layers[l];
    std::vector<double> prev(L.in, 0.0);
    for (int o = 0; o < L.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = L.w.data() + static_cast<size_t>(o) * L.in;
      for (int i = 0; i < L.in; ++i) prev[i] += d * row[i];
    }
    if (l > 0) {
      // Through the LeakyReLU of the layer below; the kink at 0 uses the
      // positive-side slope 1.
      const std::vector<double>& z = tr.pre[l - 1];
      for (int i = 0; i < L.in; ++i) {
        if (z[i] < 0.0) prev[i] *= leaky_slope;
      }
    }
    delta = std::move(prev);
  }
  return delta;
}

// ---------------------------------------------------------------------------
// Toy2DModel

ProbVector Toy2DModel::forward(const ImageVec& x) const {
  require_input(x, 2, "Toy2DModel::forward");
  const double dx = x[0] - cx;
  const double dy = x[1] - cy;
  const double d = std::sqrt(dx * dx + dy * dy);
  const double a = sharpness * (r0 - d);  // logit of class 1 relative to class 0
  const double p1 = 1.0 / (1.0 + std::exp(-a));
  return {1.0 - p1, p1};
}

ImageVec Toy2DModel::input_gradient(const ImageVec& x, int t, const LossSpec& loss) const {
  require_input(x, 2, "Toy2DModel::input_gradient");
  require_label(t, 2);
  const double dx = x[0] - cx;
  const double dy = x[1] - cy;
  const double d = std::sqrt(dx * dx + dy * dy);
  if (d == 0.0) return {0.0, 0.0};  // no radial direction at the center
  // a = sharpness * (r0 - d); grad a = -sharpness * (dx, dy) / d.
  const double ax = -sharpness * dx / d;
  const double ay = -sharpness * dy / d;
  const double a = sharpness * (r0 - d);
  const double p1 = 1.0 / (1.0 + std::exp(-a));
  double scale = 0.0;
  if (loss.kind == LossKind::nll) {
    // log p1 = -log(1+e^-a), d/da = 1 - p1;  log p0: d/da = -p1.
    scale = (t == 1) ? (1.0 - p1) : -p1;
  } else {
    // Hinge on the logit gap: for t=1 the argument is a + margin, for t=0 it
    // is -a + margin; slope 1 where active.
    const ProbVector p = {1.0 - p1, p1};
    if (margin_loss(p, t, loss.margin) > 0.0) scale = (t == 1) ? 1.0 : -1.0;
  }
  return {scale * ax, scale * ay};
}

}  // namespace bproj
