#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bproj/dataset.hpp"
#include "bproj/model.hpp"

namespace bproj {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 0.1;
  uint64_t seed = 0;
  std::vector<int> hidden_sizes = {128, 128};
};

/// Plain minibatch SGD on mean cross-entropy (-log p_t). Deterministic: the
/// per-epoch shuffles come from cfg.seed, so the same model, data and config
/// yield bit-identical parameters. 0 epochs returns the model unchanged.
MlpModel train_sgd(MlpModel model, const Dataset& data, const TrainConfig& cfg);

/// Fraction of images whose argmax prediction matches the label.
double accuracy(const Classifier& m, const Dataset& data);

/// Little-endian binary model file (magic "BPROJML1", version 1); the exact
/// layout is documented in the README. Writing the same model twice produces
/// byte-identical files.
void save_model(const std::string& path, const MlpModel& m);
MlpModel load_model(const std::string& path);

}  // namespace bproj
