#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "bproj/dataset.hpp"
#include "bproj/errors.hpp"
#include "bproj/model.hpp"
#include "bproj/rng.hpp"
#include "bproj/train.hpp"
#include "bproj/vec.hpp"

using namespace bproj;

namespace {

// 2-in 2-out softmax with identity weights: logits == x.
MlpModel identity_linear() {
  MlpModel m;
  MlpAccess::set_dims(m, 2, 2);
  MlpModel::Layer L;
  L.in = 2;
  L.out = 2;
  L.w = {1.0, 0.0, 0.0, 1.0};
  L.b = {0.0, 0.0};
  m.layers.push_back(L);
  return m;
}

double loss_at(const Classifier& m, ImageVec x, int t, const LossSpec& ls) {
  const ProbVector p = m.forward(x);
  return ls.kind == LossKind::nll ? nll_loss(p, t) : margin_loss(p, t, ls.margin);
}

// Central finite difference of the loss w.r.t. every input coordinate.
ImageVec fd_gradient(const Classifier& m, const ImageVec& x, int t, const LossSpec& ls,
                     double h) {
  ImageVec g(x.size());
  for (size_t j = 0; j < x.size(); ++j) {
    ImageVec hi = x, lo = x;
    hi[j] += h;
    lo[j] -= h;
    g[j] = (loss_at(m, hi, t, ls) - loss_at(m, lo, t, ls)) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("loss functions: hand values") {
  CHECK(nll_loss({0.5, 0.25, 0.25}, 1) == doctest::Approx(std::log(0.25)).epsilon(1e-12));
  const double z = nll_loss({1.0, 0.0}, 1);
  CHECK(std::isinf(z));
  CHECK(z < 0.0);
  CHECK_THROWS_AS(nll_loss({0.5, 0.5}, -1), InvalidTargetError);
  CHECK_THROWS_AS(nll_loss({0.5, 0.5}, 2), InvalidTargetError);

  CHECK(margin_loss({0.7, 0.2, 0.1}, 0) == doctest::Approx(std::log(3.5)).epsilon(1e-12));
  CHECK(margin_loss({0.7, 0.2, 0.1}, 1) == 0.0);                   // hinge inactive
  CHECK(margin_loss({0.7, 0.2, 0.1}, 1, 0.5) == 0.0);              // still inactive
  CHECK(margin_loss({0.7, 0.2, 0.1}, 0, 2.0) ==
        doctest::Approx(std::log(3.5) + 2.0).epsilon(1e-12));      // margin widens the hinge
  CHECK_THROWS_AS(margin_loss({0.5, 0.5}, 5), InvalidTargetError);
}

TEST_CASE("identity linear model: forward and gradients by hand") {
  const MlpModel m = identity_linear();
  const ImageVec x{0.2, 0.8};
  const ProbVector p = m.forward(x);
  const double p1 = 1.0 / (1.0 + std::exp(-0.6));
  CHECK(p[1] == doctest::Approx(p1).epsilon(1e-12));
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));

  // nll: d log p_0 / d logits = e_0 - p, and W is the identity.
  const ImageVec g = m.input_gradient(x, 0, {LossKind::nll, 0.0});
  CHECK(g[0] == doctest::Approx(1.0 - p[0]).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(-p[1]).epsilon(1e-12));

  // margin: log p_t - log p_k == logit_t - logit_k, so the active-hinge
  // gradient is e_t - e_other exactly.
  const ImageVec gm = m.input_gradient(x, 1, {LossKind::margin, 0.0});
  CHECK(gm[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(gm[1] == doctest::Approx(1.0).epsilon(1e-12));

  // Inactive hinge: zero gradient.
  const ImageVec g0 = m.input_gradient(x, 0, {LossKind::margin, 0.0});
  CHECK(g0 == ImageVec{0.0, 0.0});
}

TEST_CASE("predict: ties resolve to the lowest index, dimensions checked") {
  MlpModel m = identity_linear();
  CHECK(predict(m, {0.3, 0.3}) == 0);  // equal logits
  CHECK(predict(m, {0.1, 0.9}) == 1);
  CHECK_THROWS_AS(predict(m, {0.1, 0.2, 0.3}), DimensionError);
}

TEST_CASE("LeakyReLU kink uses the positive side; slope 0.01 below zero") {
  MlpModel m;
  MlpAccess::set_dims(m, 1, 2);
  MlpModel::Layer h;
  h.in = 1;
  h.out = 1;
  h.w = {1.0};
  h.b = {-0.5};
  MlpModel::Layer o;
  o.in = 1;
  o.out = 2;
  o.w = {2.0, 0.0};
  o.b = {0.0, 0.0};
  m.layers = {h, o};

  // x = 0.5 puts the hidden pre-activation exactly at the kink: probs are
  // (0.5, 0.5) so the logit gradient is (0.5, -0.5), the output layer maps it
  // to 1.0, and the kink must pass it through with slope 1.
  const ImageVec gk = m.input_gradient({0.5}, 0, {LossKind::nll, 0.0});
  CHECK(gk[0] == doctest::Approx(1.0).epsilon(1e-12));

  // Strictly negative side: analytic slope is 0.02 * p_1 there, and the
  // finite difference agrees.
  const ImageVec x{0.4};
  const ProbVector p = m.forward(x);
  const ImageVec gn = m.input_gradient(x, 0, {LossKind::nll, 0.0});
  CHECK(gn[0] == doctest::Approx(0.02 * p[1]).epsilon(1e-12));
  const ImageVec fd = fd_gradient(m, x, 0, {LossKind::nll, 0.0}, 1e-6);
  CHECK(gn[0] == doctest::Approx(fd[0]).epsilon(1e-7));
}

TEST_CASE("random MLP gradients match central differences away from kinks") {
  const MlpModel m(6, 3, {5, 4}, 123);
  Rng rng(5);
  int checked = 0;
  for (int rep = 0; rep < 60 && checked < 20; ++rep) {
    ImageVec x(6);
    for (double& v : x) v = rng.uniform();
    // Points with a pre-activation within finite-difference reach of a kink
    // are legitimately non-differentiable; skip them.
    const MlpModel::Trace tr = m.forward_trace(x);
    bool near_kink = false;
    for (const auto& layer_pre : tr.pre) {
      for (double z : layer_pre) {
        if (std::fabs(z) < 1e-4) near_kink = true;
      }
    }
    if (near_kink) continue;
    const int t = static_cast<int>(rng.below(3));
    for (LossKind kind : {LossKind::nll, LossKind::margin}) {
      const LossSpec ls{kind, 0.0};
      if (kind == LossKind::margin && margin_loss(tr.probs, t) == 0.0) continue;
      const ImageVec g = m.input_gradient(x, t, ls);
      const ImageVec fd = fd_gradient(m, x, t, ls, 1e-5);
      const double err = l2_dist(g, fd);
      const double scale = std::max(l2_norm(g), 1e-12);
      CHECK(err / scale <= 1e-4);
    }
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("Xavier init: deterministic per seed, bounded, zero biases") {
  const MlpModel a(4, 3, {5}, 7);
  const MlpModel b(4, 3, {5}, 7);
  const MlpModel c(4, 3, {5}, 8);
  REQUIRE(a.layers.size() == 2);
  CHECK(a.layers[0].w == b.layers[0].w);
  CHECK(a.layers[1].w == b.layers[1].w);
  CHECK(a.layers[0].w != c.layers[0].w);
  CHECK(a.init_seed == 7);
  CHECK(a.epochs_trained == 0);
  for (const auto& L : a.layers) {
    const double bound = std::sqrt(6.0 / (L.in + L.out));
    for (double w : L.w) CHECK(std::fabs(w) <= bound);
    for (double bias : L.b) CHECK(bias == 0.0);
  }
}

TEST_CASE("toy 2D model: closed-form probabilities and gradients") {
  const Toy2DModel m;  // center (0.15, 0.15), r0 = 0.35, sharpness 12
  CHECK(m.forward({0.15, 0.15})[1] ==
        doctest::Approx(1.0 / (1.0 + std::exp(-4.2))).epsilon(1e-12));
  CHECK(m.forward({0.5, 0.15})[1] == doctest::Approx(0.5).epsilon(1e-12));  // on the rim
  CHECK(predict(m, {0.15, 0.15}) == 1);
  CHECK(predict(m, {1.0, 1.0}) == 0);

  // The gradient vanishes at the center (no defined direction).
  CHECK(m.input_gradient({0.15, 0.15}, 1, {LossKind::nll, 0.0}) == ImageVec{0.0, 0.0});

  for (int t : {0, 1}) {
    const ImageVec x{0.6, 0.3};
    const ImageVec g = m.input_gradient(x, t, {LossKind::nll, 0.0});
    const ImageVec fd = fd_gradient(m, x, t, {LossKind::nll, 0.0}, 1e-6);
    CHECK(l2_dist(g, fd) <= 1e-6 * std::max(1.0, l2_norm(g)));
  }
  // Margin hinge, active at the predicted class.
  const ImageVec x{0.2, 0.2};
  const int t = predict(m, x);
  const ImageVec g = m.input_gradient(x, t, {LossKind::margin, 0.0});
  const ImageVec fd = fd_gradient(m, x, t, {LossKind::margin, 0.0}, 1e-6);
  CHECK(l2_dist(g, fd) <= 1e-6 * std::max(1.0, l2_norm(g)));
}

TEST_CASE("two moons: frozen noise-free geometry") {
  const Dataset ds = make_two_moons(4, 0.0, 0);
  REQUIRE(ds.size() == 4);
  CHECK(ds.labels == std::vector<int>{0, 0, 1, 1});
  CHECK(ds.images[0][0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));  // (cos 0, sin 0)
  CHECK(ds.images[0][1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(ds.images[1][0] == doctest::Approx(0.0));                       // (cos pi, sin pi)
  CHECK(ds.images[1][1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(ds.images[2][0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));  // lower moon, u = 0
  CHECK(ds.images[2][1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(ds.images[3][0] == doctest::Approx(1.0));                       // lower moon, u = pi
  CHECK(ds.images[3][1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  const Dataset noisy = make_two_moons(40, 0.1, 1);
  const Dataset noisy2 = make_two_moons(40, 0.1, 1);
  CHECK(noisy.images == noisy2.images);  // deterministic
  for (const ImageVec& p : noisy.images) {
    CHECK(p[0] >= 0.0);
    CHECK(p[0] <= 1.0);
    CHECK(p[1] >= 0.0);
    CHECK(p[1] <= 1.0);
  }
  CHECK(make_two_moons(40, 0.1, 2).images != noisy.images);
  CHECK_THROWS_AS(make_two_moons(10, -0.1, 0), DomainError);
}

TEST_CASE("IDX loading: the bundled digit fixtures") {
  const char* data_dir = std::getenv("BPROJ_DATA");
  REQUIRE(data_dir != nullptr);
  const std::string dir(data_dir);
  const std::string train_images = dir + "/digits-train-images-idx3-ubyte";
  const std::string train_labels = dir + "/digits-train-labels-idx1-ubyte";
  const std::string test_images = dir + "/digits-test-images-idx3-ubyte";
  const std::string test_labels = dir + "/digits-test-labels-idx1-ubyte";

  const Dataset ds = load_idx(train_images, train_labels, 64);
  REQUIRE(ds.size() == 64);
  CHECK(ds.rows == 28);
  CHECK(ds.cols == 28);
  const QuantGrid g(256);
  for (const ImageVec& img : ds.images) {
    REQUIRE(img.size() == 784);
    CHECK(is_on_grid(img, g));  // bytes / 255 sit on the 8-bit grid exactly
  }
  for (int lab : ds.labels) {
    CHECK(lab >= 0);
    CHECK(lab <= 9);
  }

  const Dataset test = load_idx(test_images, test_labels);
  CHECK(test.size() == 200);

  CHECK_THROWS_AS(load_idx(train_images, test_labels), CountMismatchError);
  CHECK_THROWS_AS(load_idx(train_labels, train_labels), BadMagicError);
  CHECK_THROWS_AS(load_idx(dir + "/no-such-file", train_labels), IoError);
}

TEST_CASE("IDX loading: truncated files are rejected") {
  const std::string img_path = "tmp_trunc-images-idx3-ubyte";
  const std::string lab_path = "tmp_trunc-labels-idx1-ubyte";
  {
    std::ofstream img(img_path, std::ios::binary);
    const unsigned char header[16] = {0, 0, 8, 3, 0, 0, 0, 10, 0, 0, 0, 2, 0, 0, 0, 2};
    img.write(reinterpret_cast<const char*>(header), 16);
    const unsigned char pix[6] = {1, 2, 3, 4, 5, 6};  // 1.5 of the promised 10 images
    img.write(reinterpret_cast<const char*>(pix), 6);
  }
  {
    std::ofstream lab(lab_path, std::ios::binary);
    const unsigned char header[8] = {0, 0, 8, 1, 0, 0, 0, 10};
    lab.write(reinterpret_cast<const char*>(header), 8);
    const unsigned char labs[10] = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    lab.write(reinterpret_cast<const char*>(labs), 10);
  }
  CHECK_THROWS_AS(load_idx(img_path, lab_path), TruncatedFileError);
  CHECK(load_idx(img_path, lab_path, 1).size() == 1);  // first image is intact
  std::remove(img_path.c_str());
  std::remove(lab_path.c_str());
}

TEST_CASE("training: deterministic, counts epochs, validates inputs") {
  const Dataset moons = make_two_moons(120, 0.1, 3);
  const MlpModel init(2, 2, {8}, 1);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.5;
  cfg.seed = 9;
  cfg.hidden_sizes = {8};

  const MlpModel a = train_sgd(init, moons, cfg);
  const MlpModel b = train_sgd(init, moons, cfg);
  CHECK(a.layers[0].w == b.layers[0].w);  // bit-identical
  CHECK(a.layers[1].w == b.layers[1].w);
  CHECK(a.epochs_trained == 5);
  CHECK(train_sgd(a, moons, cfg).epochs_trained == 10);  // resumable

  TrainConfig zero = cfg;
  zero.epochs = 0;
  const MlpModel same = train_sgd(init, moons, zero);
  CHECK(same.layers[0].w == init.layers[0].w);

  CHECK_THROWS_AS(train_sgd(init, Dataset{}, cfg), EmptyDatasetError);
  Dataset bad = moons;
  bad.labels[0] = 2;
  CHECK_THROWS_AS(train_sgd(init, bad, cfg), InvalidTargetError);
  Dataset short_img = moons;
  short_img.images[3] = {0.5};
  CHECK_THROWS_AS(train_sgd(init, short_img, cfg), DimensionError);
  TrainConfig bad_cfg = cfg;
  bad_cfg.batch_size = 0;
  CHECK_THROWS_AS(train_sgd(init, moons, bad_cfg), DomainError);
  bad_cfg = cfg;
  bad_cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(train_sgd(init, moons, bad_cfg), DomainError);
  bad_cfg = cfg;
  bad_cfg.epochs = -1;
  CHECK_THROWS_AS(train_sgd(init, moons, bad_cfg), DomainError);
}

TEST_CASE("training: separates two moons") {
  const Dataset moons = make_two_moons(300, 0.05, 4);
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.5;
  cfg.seed = 2;
  const MlpModel m = train_sgd(MlpModel(2, 2, {16, 16}, 0), moons, cfg);
  CHECK(accuracy(m, moons) >= 0.95);
  CHECK_THROWS_AS(accuracy(m, Dataset{}), EmptyDatasetError);
}

TEST_CASE("model files: round trip, byte-stable, format errors") {
  const Dataset moons = make_two_moons(60, 0.1, 5);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.2;
  cfg.seed = 1;
  const MlpModel m = train_sgd(MlpModel(2, 2, {4, 3}, 11), moons, cfg);

  const std::string p1 = "tmp_model_a.bin";
  const std::string p2 = "tmp_model_b.bin";
  save_model(p1, m);
  const MlpModel r = load_model(p1);
  CHECK(r.input_dim() == m.input_dim());
  CHECK(r.num_classes() == m.num_classes());
  CHECK(r.leaky_slope == m.leaky_slope);
  CHECK(r.init_seed == m.init_seed);
  CHECK(r.epochs_trained == m.epochs_trained);
  REQUIRE(r.layers.size() == m.layers.size());
  for (size_t l = 0; l < m.layers.size(); ++l) {
    CHECK(r.layers[l].in == m.layers[l].in);
    CHECK(r.layers[l].out == m.layers[l].out);
    CHECK(r.layers[l].w == m.layers[l].w);
    CHECK(r.layers[l].b == m.layers[l].b);
  }
  // Same model, same bytes.
  save_model(p2, m);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string bytes1((std::istreambuf_iterator<char>(f1)), {});
  const std::string bytes2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(bytes1 == bytes2);
  CHECK(bytes1.size() > 0);

  {
    std::ofstream junk("tmp_model_junk.bin", std::ios::binary);
    junk << "definitely not a model";
  }
  CHECK_THROWS_AS(load_model("tmp_model_junk.bin"), FormatError);
  CHECK_THROWS_AS(load_model("tmp_model_missing.bin"), IoError);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
  std::remove("tmp_model_junk.bin");
}
