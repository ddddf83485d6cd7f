#include "bproj/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <thread>

#include <nlohmann/json.hpp>

#include "bproj/errors.hpp"

namespace bproj {

namespace {

constexpr int kAdvTrainBudget = 20;  // max gradient calls per forged image

void fill_aggregates(BenchmarkReport& r) {
  size_t n_suc = 0, n_upp = 0;
  double dist_sum = 0.0;
  for (const EvalRecord& rec : r.records) {
    if (!rec.success) continue;
    ++n_suc;
    dist_sum += rec.distortion_l2;
    if (rec.distortion_l2 <= r.d_upp) ++n_upp;
  }
  const double n = static_cast<double>(r.records.size());
  r.p_suc = n > 0 ? static_cast<double>(n_suc) / n : 0.0;
  r.p_upp = n > 0 ? static_cast<double>(n_upp) / n : 0.0;
  r.d_bar = n_suc > 0 ? std::optional(dist_sum / static_cast<double>(n_suc)) : std::nullopt;
}

}  // namespace

BenchmarkReport run_benchmark(const Classifier& m, const Dataset& data,
                              const std::string& attack_name, const AttackFn& attack,
                              double d_upp, uint64_t seed, int jobs) {
  if (data.size() == 0) throw EmptyDatasetError("run_benchmark: empty dataset");
  if (jobs < 1) throw DomainError("run_benchmark: jobs must be >= 1");
  if (d_upp < 0.0) throw DomainError("run_benchmark: negative d_upp");

  // Keep only the images the model gets right; attacking an already
  // misclassified image would inflate the success rate for free.
  std::vector<size_t> eval_ids;
  for (size_t i = 0; i < data.size(); ++i) {
    if (predict(m, data.images[i]) == data.labels[i]) eval_ids.push_back(i);
  }
  if (eval_ids.empty()) {
    throw EmptyEvaluationSetError("run_benchmark: no correctly classified image");
  }

  std::vector<EvalRecord> slots(eval_ids.size());
  const int workers = std::min<int>(jobs, static_cast<int>(eval_ids.size()));
  auto work = [&](int worker) {
    for (size_t k = worker; k < eval_ids.size(); k += workers) {
      const size_t id = eval_ids[k];
      const ImageVec& x = data.images[id];
      const int t = data.labels[id];
      const AttackOutcome out = attack(m, x, t);
      EvalRecord rec;
      rec.image_id = static_cast<int>(id);
      rec.true_label = t;
      rec.attack = attack_name;
      rec.grads_used = out.grads_used;
      // Recompute from the returned image: the record must describe the
      // artifact, not the attack's self-assessment.
      rec.success = predict(m, out.adversarial) != t;
      rec.distortion_l2 = l2_dist(out.adversarial, x);
      rec.distortion_linf = linf_norm(sub(out.adversarial, x));
      slots[k] = std::move(rec);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int wkr = 0; wkr < workers; ++wkr) pool.emplace_back(work, wkr);
    for (std::thread& th : pool) th.join();
  }

  BenchmarkReport r;
  r.attack = attack_name;
  r.records = std::move(slots);
  r.n_total = static_cast<int>(data.size());
  r.d_upp = d_upp;
  r.seed = seed;
  fill_aggregates(r);
  return r;
}

double OperatingCharacteristic::value_at(double d) const {
  // Right-continuous step function: the largest threshold <= d applies.
  const auto it = std::upper_bound(distortions.begin(), distortions.end(), d);
  if (it == distortions.begin()) return 0.0;
  return probs[static_cast<size_t>(it - distortions.begin()) - 1];
}

OperatingCharacteristic operating_characteristic(const std::vector<EvalRecord>& records) {
  if (records.empty()) {
    throw EmptyEvaluationSetError("operating_characteristic: no records");
  }
  std::vector<double> success_d;
  for (const EvalRecord& rec : records) {
    if (rec.success) success_d.push_back(rec.distortion_l2);
  }
  std::sort(success_d.begin(), success_d.end());

  OperatingCharacteristic oc;
  const double n = static_cast<double>(records.size());
  oc.p_suc = static_cast<double>(success_d.size()) / n;
  oc.d_max = success_d.empty() ? 0.0 : success_d.back();
  size_t i = 0;
  while (i < success_d.size()) {
    size_t j = i;
    while (j < success_d.size() && success_d[j] == success_d[i]) ++j;
    oc.distortions.push_back(success_d[i]);
    oc.probs.push_back(static_cast<double>(j) / n);
    i = j;
  }
  return oc;
}

BenchmarkReport aggregate_multi_epsilon(const std::vector<BenchmarkReport>& reports) {
  if (reports.empty()) throw EmptyEvaluationSetError("aggregate_multi_epsilon: no reports");
  const BenchmarkReport& base = reports.front();
  for (const BenchmarkReport& r : reports) {
    if (r.records.size() != base.records.size()) {
      throw MismatchedImageSetsError("aggregate_multi_epsilon: record counts differ");
    }
    for (size_t i = 0; i < r.records.size(); ++i) {
      if (r.records[i].image_id != base.records[i].image_id ||
          r.records[i].true_label != base.records[i].true_label) {
        throw MismatchedImageSetsError("aggregate_multi_epsilon: image sets differ");
      }
    }
  }

  BenchmarkReport agg;
  agg.attack = base.attack;
  agg.n_total = base.n_total;
  agg.d_upp = base.d_upp;
  agg.seed = base.seed;
  agg.multi_epsilon = true;
  agg.records.reserve(base.records.size());
  for (size_t i = 0; i < base.records.size(); ++i) {
    EvalRecord rec = base.records[i];
    rec.success = false;
    rec.grads_used = 0;
    rec.distortion_l2 = 0.0;
    rec.distortion_linf = 0.0;
    bool first_success = true;
    for (const BenchmarkReport& r : reports) {
      const EvalRecord& in = r.records[i];
      rec.grads_used += in.grads_used;  // total effort actually spent
      if (!in.success) continue;
      rec.success = true;
      if (first_success || in.distortion_l2 < rec.distortion_l2) {
        rec.distortion_l2 = in.distortion_l2;
        rec.distortion_linf = in.distortion_linf;
        first_success = false;
      }
    }
    agg.records.push_back(std::move(rec));
  }
  fill_aggregates(agg);
  return agg;
}

std::array<BenchmarkReport, 3> quantization_ablation(const Classifier& m, const Dataset& data,
                                                     const BpParams& params,
                                                     const QuantGrid& g, double d_upp,
                                                     uint64_t seed, int jobs) {
  auto run = [&](QuantMode mode, const char* name) {
    BpParams p = params;
    p.quant_mode = mode;
    return run_benchmark(
        m, data, name,
        [p, &g](const Classifier& mm, const ImageVec& x, int t) { return bp(mm, x, t, p, g); },
        d_upp, seed, jobs);
  };
  return {run(QuantMode::round_at_end, "bp-round-at-end"),
          run(QuantMode::round_each_iter, "bp-round-each-iter"),
          run(QuantMode::adaptive, "bp-adaptive")};
}

MlpModel adversarial_training(const MlpModel& model, const Dataset& train_set,
                              const AttackFn& attack, int epochs, AdvTrainMode mode,
                              const TrainConfig& cfg) {
  if (epochs < 0) throw DomainError("adversarial_training: negative epochs");
  if (train_set.size() == 0) throw EmptyDatasetError("adversarial_training: empty dataset");

  MlpModel current =
      mode == AdvTrainMode::scratch
          ? MlpModel(model.input_dim(), model.num_classes(), cfg.hidden_sizes, cfg.seed)
          : model;

  TrainConfig epoch_cfg = cfg;
  epoch_cfg.epochs = 1;
  for (int e = 0; e < epochs; ++e) {
    // Forge adversarial examples against the current frozen parameters.
    Dataset augmented = train_set;
    for (size_t i = 0; i < train_set.size(); ++i) {
      const AttackOutcome out = attack(current, train_set.images[i], train_set.labels[i]);
      if (out.grads_used > kAdvTrainBudget) {
        throw BudgetExceededError("adversarial_training: attack spent " +
                                  std::to_string(out.grads_used) + " > " +
                                  std::to_string(kAdvTrainBudget) + " gradients");
      }
      augmented.images.push_back(out.adversarial);
      augmented.labels.push_back(train_set.labels[i]);
    }
    epoch_cfg.seed = cfg.seed + static_cast<uint64_t>(e) + 1;  // fresh shuffle per epoch
    current = train_sgd(std::move(current), augmented, epoch_cfg);
  }
  return current;
}

CrossingStats boundary_crossing_stats(const std::vector<TracePoint>& trace) {
  CrossingStats st;
  std::optional<size_t> first_success;
  for (size_t i = 0; i < trace.size(); ++i) {
    if (i > 0 && trace[i].adversarial != trace[i - 1].adversarial) ++st.crossings;
    if (!first_success && trace[i].adversarial) first_success = i;
  }
  if (first_success) {
    size_t adv = 0;
    for (size_t i = *first_success; i < trace.size(); ++i) {
      if (trace[i].adversarial) ++adv;
    }
    st.adversarial_fraction =
        static_cast<double>(adv) / static_cast<double>(trace.size() - *first_success);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Writers

namespace {

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

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_records_csv(const std::string& path, const BenchmarkReport& r) {
  OutFile out(path);
  std::fputs("image_id,true_label,attack,grads_used,success,distortion_l2,distortion_linf\n",
             out.f);
  for (const EvalRecord& rec : r.records) {
    std::fprintf(out.f, "%d,%d,%s,%d,%d,%s,%s\n", rec.image_id, rec.true_label,
                 rec.attack.c_str(), rec.grads_used, rec.success ? 1 : 0,
                 fmt_double(rec.distortion_l2).c_str(), fmt_double(rec.distortion_linf).c_str());
  }
  if (std::ferror(out.f)) throw IoError("write failed: " + path);
}

void write_characteristic_csv(const std::string& path, const OperatingCharacteristic& oc) {
  OutFile out(path);
  std::fputs("D,P\n", out.f);
  for (size_t i = 0; i < oc.distortions.size(); ++i) {
    std::fprintf(out.f, "%s,%s\n", fmt_double(oc.distortions[i]).c_str(),
                 fmt_double(oc.probs[i]).c_str());
  }
  if (std::ferror(out.f)) throw IoError("write failed: " + path);
}

void write_aggregate_json(const std::string& path, const BenchmarkReport& r,
                          const std::string& config_echo) {
  nlohmann::json j;
  j["attack"] = r.attack;
  j["n_evaluated"] = r.records.size();
  j["n_total"] = r.n_total;
  size_t n_suc = 0;
  for (const EvalRecord& rec : r.records) n_suc += rec.success ? 1 : 0;
  j["n_success"] = n_suc;
  j["p_suc"] = r.p_suc;
  if (r.d_bar) {
    j["d_bar"] = *r.d_bar;
  } else {
    j["d_bar"] = nullptr;
  }
  j["d_upp"] = r.d_upp;
  j["p_upp"] = r.p_upp;
  j["multi_epsilon"] = r.multi_epsilon;
  j["seed"] = r.seed;
  if (!config_echo.empty()) {
    j["config"] = nlohmann::json::parse(config_echo);
  }
  OutFile out(path);
  const std::string text = j.dump(2) + "\n";  // keys serialize sorted
  std::fwrite(text.data(), 1, text.size(), out.f);
  if (std::ferror(out.f)) throw IoError("write failed: " + path);
}

}  // namespace bproj
