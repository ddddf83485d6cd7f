#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bproj/attacks.hpp"
#include "bproj/dataset.hpp"
#include "bproj/model.hpp"
#include "bproj/train.hpp"

namespace bproj {

/// One row of a benchmark: the attack's result on one image.
struct EvalRecord {
  int image_id = 0;
  int true_label = 0;
  std::string attack;
  int grads_used = 0;
  bool success = false;
  double distortion_l2 = 0.0;
  double distortion_linf = 0.0;
};

struct BenchmarkReport {
  std::string attack;
  std::vector<EvalRecord> records;  // one per correctly classified image, in image order
  int n_total = 0;                  // dataset size before the correctness filter
  double p_suc = 0.0;               // successes / records
  std::optional<double> d_bar;      // mean distortion over successes; empty when none
  double d_upp = 0.0;               // distortion acceptability threshold
  double p_upp = 0.0;               // successes with distortion <= d_upp / records
  bool multi_epsilon = false;
  uint64_t seed = 0;
};

using AttackFn = std::function<AttackOutcome(const Classifier&, const ImageVec&, int)>;

/// Runs `attack` on every image the model classifies correctly (misclassified
/// images are skipped and excluded from the denominator; an empty remainder
/// throws EmptyEvaluationSetError). Success and both distortions are
/// recomputed here from the returned images. `jobs` worker threads; the
/// report is byte-identical for any jobs value.
BenchmarkReport run_benchmark(const Classifier& m, const Dataset& data,
                              const std::string& attack_name, const AttackFn& attack,
                              double d_upp, uint64_t seed, int jobs = 1);

/// Operating characteristic P(D): the fraction of evaluated images with a
/// successful adversarial example of distortion at most D.
struct OperatingCharacteristic {
  std::vector<double> distortions;  // distinct success distortions, ascending
  std::vector<double> probs;        // cumulative success fraction at each threshold
  double p_suc = 0.0;               // limit value P(infinity)
  double d_max = 0.0;               // largest success distortion (0 when no successes)

  double value_at(double d) const;  // right-continuous step function
};

OperatingCharacteristic operating_characteristic(const std::vector<EvalRecord>& records);

/// Best-over-epsilon combination of per-epsilon reports of one attack: per
/// image, success is the OR, distortion the minimum over successful runs, and
/// grads_used the total spent across all runs. The reports must cover the
/// same images in the same order (else MismatchedImageSetsError).
BenchmarkReport aggregate_multi_epsilon(const std::vector<BenchmarkReport>& reports);

/// Runs bp on the same images in the three quantization modes; reports come
/// back in the order round_at_end, round_each_iter, adaptive.
std::array<BenchmarkReport, 3> quantization_ablation(const Classifier& m, const Dataset& data,
                                                     const BpParams& params,
                                                     const QuantGrid& g, double d_upp,
                                                     uint64_t seed, int jobs = 1);

enum class AdvTrainMode { scratch, finetune };

/// Adversarial training: every epoch forges adversarial examples for the
/// current frozen model with `attack` and trains one epoch on clean plus
/// adversarial images. `scratch` reinitializes the model from cfg before
/// starting; `finetune` continues from `model`. Throws BudgetExceededError
/// if the attack spends more than 20 gradient calls on an image.
MlpModel adversarial_training(const MlpModel& model, const Dataset& train_set,
                              const AttackFn& attack, int epochs, AdvTrainMode mode,
                              const TrainConfig& cfg);

/// Boundary-crossing statistics of a trace: `crossings` counts adversarial-
/// flag changes over consecutive points; `adversarial_fraction` is the
/// fraction of adversarial points from the first success (inclusive) to the
/// end, empty when the trace never succeeds.
struct CrossingStats {
  int crossings = 0;
  std::optional<double> adversarial_fraction;
};

CrossingStats boundary_crossing_stats(const std::vector<TracePoint>& trace);

/// CLI output writers. CSV floats use %.17g (lossless round-trip); JSON keys
/// are sorted. Writing the same report twice yields byte-identical files.
void write_records_csv(const std::string& path, const BenchmarkReport& r);
void write_characteristic_csv(const std::string& path, const OperatingCharacteristic& oc);
void write_aggregate_json(const std::string& path, const BenchmarkReport& r,
                          const std::string& config_echo);

}  // namespace bproj
