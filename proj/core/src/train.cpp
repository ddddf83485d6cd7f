#include "bproj/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <string>

#include "bproj/errors.hpp"
#include "bproj/rng.hpp"

namespace bproj {

namespace {

void check_training_data(const MlpModel& m, const Dataset& data) {
  if (data.size() == 0) throw EmptyDatasetError("train_sgd: empty dataset");
  if (data.images.size() != data.labels.size()) {
    throw DimensionError("train_sgd: image/label count mismatch");
  }
  for (size_t i = 0; i < data.size(); ++i) {
    if (static_cast<int>(data.images[i].size()) != m.input_dim()) {
      throw DimensionError("train_sgd: image " + std::to_string(i) + " has size " +
                           std::to_string(data.images[i].size()));
    }
    if (data.labels[i] < 0 || data.labels[i] >= m.num_classes()) {
      throw InvalidTargetError("train_sgd: label " + std::to_string(data.labels[i]) +
                               " outside [0, " + std::to_string(m.num_classes()) + ")");
    }
  }
}

}  // namespace

MlpModel train_sgd(MlpModel model, const Dataset& data, const TrainConfig& cfg) {
  check_training_data(model, data);
  if (cfg.epochs < 0) throw DomainError("train_sgd: negative epochs");
  if (cfg.batch_size < 1) throw DomainError("train_sgd: batch_size must be >= 1");
  if (cfg.learning_rate <= 0.0) throw DomainError("train_sgd: learning_rate must be > 0");

  Rng rng(cfg.seed);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});

  // Parameter-gradient accumulators mirroring the layer layout.
  std::vector<std::vector<double>> gw(model.layers.size());
  std::vector<std::vector<double>> gb(model.layers.size());
  for (size_t l = 0; l < model.layers.size(); ++l) {
    gw[l].assign(model.layers[l].w.size(), 0.0);
    gb[l].assign(model.layers[l].b.size(), 0.0);
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      for (size_t l = 0; l < model.layers.size(); ++l) {
        std::fill(gw[l].begin(), gw[l].end(), 0.0);
        std::fill(gb[l].begin(), gb[l].end(), 0.0);
      }
      for (size_t bi = start; bi < end; ++bi) {
        const ImageVec& x = data.images[order[bi]];
        const int t = data.labels[order[bi]];
        const MlpModel::Trace tr = model.forward_trace(x);
        // Cross-entropy -log p_t: gradient at the logits is p - e_t.
        std::vector<double> delta(model.num_classes());
        for (int k = 0; k < model.num_classes(); ++k) {
          delta[k] = tr.probs[k] - (k == t ? 1.0 : 0.0);
        }
        for (int l = static_cast<int>(model.layers.size()) - 1; l >= 0; --l) {
          const MlpModel::Layer& L = model.layers[l];
          const std::vector<double>& a_in = tr.acts[l];
          for (int o = 0; o < L.out; ++o) {
            const double d = delta[o];
            gb[l][o] += d;
            if (d == 0.0) continue;
            double* grow = gw[l].data() + static_cast<size_t>(o) * L.in;
            for (int i = 0; i < L.in; ++i) grow[i] += d * a_in[i];
          }
          if (l > 0) {
            std::vector<double> prev(L.in, 0.0);
            for (int o = 0; o < L.out; ++o) {
              const double d = delta[o];
              if (d == 0.0) continue;
              const double* row = L.w.data() + static_cast<size_t>(o) * L.in;
              for (int i = 0; i < L.in; ++i) prev[i] += d * row[i];
            }
            const std::vector<double>& z = tr.pre[l - 1];
            for (int i = 0; i < L.in; ++i) {
              if (z[i] < 0.0) prev[i] *= model.leaky_slope;
            }
            delta = std::move(prev);
          }
        }
      }
      const double scale = cfg.learning_rate / static_cast<double>(end - start);
      for (size_t l = 0; l < model.layers.size(); ++l) {
        MlpModel::Layer& L = model.layers[l];
        for (size_t i = 0; i < L.w.size(); ++i) L.w[i] -= scale * gw[l][i];
        for (size_t i = 0; i < L.b.size(); ++i) L.b[i] -= scale * gb[l][i];
      }
    }
    ++model.epochs_trained;
  }
  return model;
}

double accuracy(const Classifier& m, const Dataset& data) {
  if (data.size() == 0) throw EmptyDatasetError("accuracy: empty dataset");
  size_t hits = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    if (predict(m, data.images[i]) == data.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Model file IO. All integers and doubles little-endian; see README.

namespace {

constexpr char kMagic[8] = {'B', 'P', 'R', 'O', 'J', 'M', 'L', '1'};
constexpr uint32_t kVersion = 1;

struct OutFile {
  std::FILE* f = nullptr;
  explicit OutFile(const std::string& path) : f(std::fopen(path.c_str(), "wb")) {
    if (!f) throw IoError("cannot write " + path);
  }
  ~OutFile() {
    if (f) std::fclose(f);
  }
  OutFile(const OutFile&) = delete;
  OutFile& operator=(const OutFile&) = delete;
};

struct InFile {
  std::FILE* f = nullptr;
  explicit InFile(const std::string& path) : f(std::fopen(path.c_str(), "rb")) {
    if (!f) throw IoError("cannot open " + path);
  }
  ~InFile() {
    if (f) std::fclose(f);
  }
  InFile(const InFile&) = delete;
  InFile& operator=(const InFile&) = delete;
};

void put_u32(std::FILE* f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  std::fwrite(b, 1, 4, f);
}

void put_u64(std::FILE* f, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  std::fwrite(b, 1, 8, f);
}

void put_f64(std::FILE* f, double d) {
  uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(f, v);
}

uint32_t get_u32(std::FILE* f, const std::string& path) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw FormatError(path + ": truncated model file");
  return uint32_t{b[0]} | (uint32_t{b[1]} << 8) | (uint32_t{b[2]} << 16) |
         (uint32_t{b[3]} << 24);
}

uint64_t get_u64(std::FILE* f, const std::string& path) {
  unsigned char b[8];
  if (std::fread(b, 1, 8, f) != 8) throw FormatError(path + ": truncated model file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t{b[i]} << (8 * i);
  return v;
}

double get_f64(std::FILE* f, const std::string& path) {
  const uint64_t v = get_u64(f, path);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace

void save_model(const std::string& path, const MlpModel& m) {
  OutFile out(path);
  std::fwrite(kMagic, 1, sizeof(kMagic), out.f);
  put_u32(out.f, kVersion);
  put_u32(out.f, static_cast<uint32_t>(m.input_dim()));
  put_u32(out.f, static_cast<uint32_t>(m.num_classes()));
  put_u32(out.f, static_cast<uint32_t>(m.layers.size()));
  put_f64(out.f, m.leaky_slope);
  put_u64(out.f, m.init_seed);
  put_u32(out.f, m.epochs_trained);
  for (const MlpModel::Layer& L : m.layers) {
    put_u32(out.f, static_cast<uint32_t>(L.in));
    put_u32(out.f, static_cast<uint32_t>(L.out));
    for (double w : L.w) put_f64(out.f, w);
    for (double b : L.b) put_f64(out.f, b);
  }
  if (std::ferror(out.f)) throw IoError("write failed: " + path);
}

MlpModel load_model(const std::string& path) {
  InFile in(path);
  char magic[8];
  if (std::fread(magic, 1, 8, in.f) != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError(path + ": not a model file (bad magic)");
  }
  const uint32_t version = get_u32(in.f, path);
  if (version != kVersion) {
    throw FormatError(path + ": unsupported model version " + std::to_string(version));
  }
  const uint32_t input_dim = get_u32(in.f, path);
  const uint32_t num_classes = get_u32(in.f, path);
  const uint32_t n_layers = get_u32(in.f, path);
  MlpModel m;
  MlpAccess::set_dims(m, static_cast<int>(input_dim), static_cast<int>(num_classes));
  m.leaky_slope = get_f64(in.f, path);
  m.init_seed = get_u64(in.f, path);
  m.epochs_trained = get_u32(in.f, path);
  int expect_in = static_cast<int>(input_dim);
  for (uint32_t l = 0; l < n_layers; ++l) {
    MlpModel::Layer L;
    L.in = static_cast<int>(get_u32(in.f, path));
    L.out = static_cast<int>(get_u32(in.f, path));
    if (L.in != expect_in || L.in < 1 || L.out < 1) {
      throw FormatError(path + ": inconsistent layer dimensions");
    }
    L.w.resize(static_cast<size_t>(L.in) * L.out);
    for (double& w : L.w) w = get_f64(in.f, path);
    L.b.resize(L.out);
    for (double& b : L.b) b = get_f64(in.f, path);
    expect_in = L.out;
    m.layers.push_back(std::move(L));
  }
  if (m.layers.empty() || m.layers.back().out != static_cast<int>(num_classes)) {
    throw FormatError(path + ": layer stack does not end in num_classes outputs");
  }
  return m;
}

}  // namespace bproj
