#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "bproj/attacks.hpp"
#include "bproj/errors.hpp"
#include "bproj/eval.hpp"
#include "bproj/model.hpp"
#include "bproj/vec.hpp"

using namespace bproj;

namespace {

// 2-in 2-out softmax with identity weights: predicts 0 iff x0 >= x1.
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

// Scripted attack: pushes the image across the diagonal by a distance keyed
// on x0, and leaves the last image untouched (a failure). Deliberately lies
// in the self-reported fields to prove the benchmark recomputes them.
AttackOutcome scripted_attack(const Classifier&, const ImageVec& x, int) {
  AttackOutcome o;
  double d = 0.0;
  if (x[0] == 0.6) d = 0.5;
  if (x[0] == 0.7) d = 1.5;
  if (x[0] == 0.8) d = 2.0;
  const double s = d / std::sqrt(2.0);
  o.adversarial = {x[0] - s, x[1] + s};
  o.grads_used = 3;
  o.success = false;     // wrong on purpose
  o.distortion_l2 = 99;  // wrong on purpose
  return o;
}

Dataset four_points() {
  Dataset ds;
  ds.images = {{0.6, 0.4}, {0.7, 0.3}, {0.8, 0.2}, {0.9, 0.1}};
  ds.labels = {0, 0, 0, 0};
  return ds;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

}  // namespace

TEST_CASE("run_benchmark: counting, recomputation, image order") {
  const MlpModel m = identity_linear();
  const Dataset ds = four_points();

  const BenchmarkReport r = run_benchmark(m, ds, "scripted", scripted_attack, 1.6, 7);
  CHECK(r.attack == "scripted");
  CHECK(r.n_total == 4);
  CHECK(r.seed == 7);
  REQUIRE(r.records.size() == 4);

  // Distortions 0.5 / 1.5 / 2.0 succeed, the last image fails:
  // p_suc = 3/4, d_bar = 4/3, and with d_upp = 1.6 only two count: p_upp = 1/2.
  CHECK(r.p_suc == 0.75);
  REQUIRE(r.d_bar.has_value());
  CHECK(*r.d_bar == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(r.p_upp == 0.5);

  for (size_t i = 0; i < 4; ++i) {
    CHECK(r.records[i].image_id == static_cast<int>(i));  // dataset order
    CHECK(r.records[i].attack == "scripted");
    CHECK(r.records[i].grads_used == 3);
  }
  // Success and distortion recomputed from the artifact, not copied.
  CHECK(r.records[0].success);
  CHECK(r.records[0].distortion_l2 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.records[0].distortion_linf == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK_FALSE(r.records[3].success);
  CHECK(r.records[3].distortion_l2 == 0.0);

  // Identical output for any worker count.
  const BenchmarkReport r3 = run_benchmark(m, ds, "scripted", scripted_attack, 1.6, 7, 3);
  REQUIRE(r3.records.size() == r.records.size());
  for (size_t i = 0; i < r.records.size(); ++i) {
    CHECK(r3.records[i].image_id == r.records[i].image_id);
    CHECK(r3.records[i].success == r.records[i].success);
    CHECK(r3.records[i].distortion_l2 == r.records[i].distortion_l2);
  }
  CHECK(r3.p_suc == r.p_suc);
}

TEST_CASE("run_benchmark: filters misclassified images, validates arguments") {
  const MlpModel m = identity_linear();
  Dataset ds = four_points();
  ds.labels[1] = 1;  // now misclassified: the model says 0

  const BenchmarkReport r = run_benchmark(m, ds, "scripted", scripted_attack, 2.0, 0);
  CHECK(r.n_total == 4);
  REQUIRE(r.records.size() == 3);
  CHECK(r.records[0].image_id == 0);
  CHECK(r.records[1].image_id == 2);  // image 1 skipped
  CHECK(r.records[2].image_id == 3);

  Dataset all_wrong = four_points();
  all_wrong.labels = {1, 1, 1, 1};
  CHECK_THROWS_AS(run_benchmark(m, all_wrong, "a", scripted_attack, 2.0, 0),
                  EmptyEvaluationSetError);
  CHECK_THROWS_AS(run_benchmark(m, Dataset{}, "a", scripted_attack, 2.0, 0),
                  EmptyDatasetError);
  CHECK_THROWS_AS(run_benchmark(m, ds, "a", scripted_attack, 2.0, 0, 0), DomainError);
  CHECK_THROWS_AS(run_benchmark(m, ds, "a", scripted_attack, -1.0, 0), DomainError);
}

TEST_CASE("operating characteristic: frozen step function") {
  std::vector<EvalRecord> recs(4);
  recs[0] = {0, 0, "a", 1, true, 0.5, 0.1};
  recs[1] = {1, 0, "a", 1, true, 1.5, 0.2};
  recs[2] = {2, 0, "a", 1, true, 2.0, 0.3};
  recs[3] = {3, 0, "a", 1, false, 0.0, 0.0};

  const OperatingCharacteristic oc = operating_characteristic(recs);
  CHECK(oc.p_suc == 0.75);
  CHECK(oc.d_max == 2.0);
  CHECK(oc.distortions == std::vector<double>{0.5, 1.5, 2.0});
  CHECK(oc.probs == std::vector<double>{0.25, 0.5, 0.75});
  CHECK(oc.value_at(0.4) == 0.0);
  CHECK(oc.value_at(0.5) == 0.25);   // right-continuous
  CHECK(oc.value_at(1.0) == 0.25);
  CHECK(oc.value_at(1.5) == 0.5);
  CHECK(oc.value_at(100.0) == 0.75);

  // Equal distortions collapse into one step.
  recs[1].distortion_l2 = 0.5;
  const OperatingCharacteristic dup = operating_characteristic(recs);
  CHECK(dup.distortions == std::vector<double>{0.5, 2.0});
  CHECK(dup.probs == std::vector<double>{0.5, 0.75});

  // No successes: a flat zero curve.
  for (EvalRecord& r : recs) r.success = false;
  const OperatingCharacteristic flat = operating_characteristic(recs);
  CHECK(flat.distortions.empty());
  CHECK(flat.p_suc == 0.0);
  CHECK(flat.d_max == 0.0);
  CHECK(flat.value_at(10.0) == 0.0);

  CHECK_THROWS_AS(operating_characteristic({}), EmptyEvaluationSetError);
}

TEST_CASE("multi-epsilon aggregation: OR success, min distortion, summed effort") {
  BenchmarkReport r1;
  r1.attack = "pgd2";
  r1.n_total = 5;
  r1.d_upp = 2.0;
  r1.seed = 3;
  r1.records = {{0, 0, "pgd2", 10, true, 1.0, 0.9}, {4, 1, "pgd2", 10, false, 0.0, 0.0}};
  BenchmarkReport r2 = r1;
  r2.records = {{0, 0, "pgd2", 20, true, 0.5, 0.1}, {4, 1, "pgd2", 20, true, 3.0, 0.4}};

  const BenchmarkReport agg = aggregate_multi_epsilon({r1, r2});
  CHECK(agg.multi_epsilon);
  CHECK(agg.attack == "pgd2");
  CHECK(agg.n_total == 5);
  REQUIRE(agg.records.size() == 2);
  CHECK(agg.records[0].success);
  CHECK(agg.records[0].distortion_l2 == 0.5);   // min over successes
  CHECK(agg.records[0].distortion_linf == 0.1);  // linf follows the argmin
  CHECK(agg.records[0].grads_used == 30);        // total spent, success or not
  CHECK(agg.records[1].success);
  CHECK(agg.records[1].distortion_l2 == 3.0);
  CHECK(agg.records[1].grads_used == 30);
  CHECK(agg.p_suc == 1.0);
  REQUIRE(agg.d_bar.has_value());
  CHECK(*agg.d_bar == doctest::Approx(1.75).epsilon(1e-12));
  CHECK(agg.p_upp == 0.5);  // only the 0.5 distortion clears d_upp = 2.0

  BenchmarkReport bad = r2;
  bad.records[1].image_id = 2;
  CHECK_THROWS_AS(aggregate_multi_epsilon({r1, bad}), MismatchedImageSetsError);
  bad = r2;
  bad.records.pop_back();
  CHECK_THROWS_AS(aggregate_multi_epsilon({r1, bad}), MismatchedImageSetsError);
  CHECK_THROWS_AS(aggregate_multi_epsilon({}), EmptyEvaluationSetError);
}

TEST_CASE("quantization ablation: three modes on the toy disk") {
  const Toy2DModel m;
  Dataset ds;
  ds.images = {{0.8, 0.75}, {0.9, 0.3}, {0.7, 0.8}, {0.15, 0.2}};
  ds.labels = {0, 0, 0, 1};

  const QuantGrid g(256);
  const auto reports = quantization_ablation(m, ds, BpParams{}, g, 2.0, 11);
  CHECK(reports[0].attack == "bp-round-at-end");
  CHECK(reports[1].attack == "bp-round-each-iter");
  CHECK(reports[2].attack == "bp-adaptive");
  for (const BenchmarkReport& r : reports) {
    CHECK(r.records.size() == 4);
    CHECK(r.p_suc == 1.0);
    for (const EvalRecord& rec : r.records) CHECK(rec.grads_used == 20);
  }
}

TEST_CASE("adversarial training: modes, determinism, budget guard") {
  const Dataset moons = make_two_moons(80, 0.08, 6);
  TrainConfig cfg;
  cfg.epochs = 3;  // ignored: adversarial_training drives per-epoch training
  cfg.batch_size = 16;
  cfg.learning_rate = 0.3;
  cfg.seed = 5;
  cfg.hidden_sizes = {8};
  const MlpModel base = train_sgd(MlpModel(2, 2, {8}, 5), moons, cfg);

  const QuantGrid g(256);
  const AttackFn weak = [&g](const Classifier& m, const ImageVec& x, int t) {
    return fgsm(m, x, t, 0.1, g);
  };

  const MlpModel scratch = adversarial_training(base, moons, weak, 2, AdvTrainMode::scratch, cfg);
  CHECK(scratch.epochs_trained == 2);
  const MlpModel fine = adversarial_training(base, moons, weak, 2, AdvTrainMode::finetune, cfg);
  CHECK(fine.epochs_trained == base.epochs_trained + 2);

  const MlpModel again = adversarial_training(base, moons, weak, 2, AdvTrainMode::scratch, cfg);
  CHECK(scratch.layers[0].w == again.layers[0].w);  // deterministic

  const AttackFn greedy = [](const Classifier&, const ImageVec& x, int) {
    AttackOutcome o;
    o.adversarial = x;
    o.grads_used = 21;  // over the 20-gradient training budget
    return o;
  };
  CHECK_THROWS_AS(adversarial_training(base, moons, greedy, 1, AdvTrainMode::finetune, cfg),
                  BudgetExceededError);
  CHECK_THROWS_AS(adversarial_training(base, moons, weak, -1, AdvTrainMode::finetune, cfg),
                  DomainError);
  CHECK_THROWS_AS(adversarial_training(base, Dataset{}, weak, 1, AdvTrainMode::finetune, cfg),
                  EmptyDatasetError);
}

TEST_CASE("boundary crossing stats") {
  auto trace_of = [](std::initializer_list<int> flags) {
    std::vector<TracePoint> tr;
    for (int f : flags) tr.push_back({{0.0}, 0.0, f != 0});
    return tr;
  };

  const CrossingStats alt = boundary_crossing_stats(trace_of({1, 0, 1, 0, 1, 0}));
  CHECK(alt.crossings == 5);
  REQUIRE(alt.adversarial_fraction.has_value());
  CHECK(*alt.adversarial_fraction == 0.5);  // from the first success: 3 of 6

  const CrossingStats tail = boundary_crossing_stats(trace_of({0, 0, 1, 1}));
  CHECK(tail.crossings == 1);
  CHECK(*tail.adversarial_fraction == 1.0);

  const CrossingStats never = boundary_crossing_stats(trace_of({0, 0, 0}));
  CHECK(never.crossings == 0);
  CHECK_FALSE(never.adversarial_fraction.has_value());

  const CrossingStats empty = boundary_crossing_stats({});
  CHECK(empty.crossings == 0);
  CHECK_FALSE(empty.adversarial_fraction.has_value());
}

TEST_CASE("writers: exact bytes and reread") {
  BenchmarkReport r;
  r.attack = "fgsm";
  r.n_total = 3;
  r.d_upp = 2.0;
  r.seed = 42;
  r.records = {{0, 7, "fgsm", 1, true, 0.5, 0.25}, {2, 3, "fgsm", 1, false, 0.0, 0.0}};
  r.p_suc = 0.5;
  r.p_upp = 0.5;
  r.d_bar = 0.5;

  const std::string csv_path = "tmp_records.csv";
  write_records_csv(csv_path, r);
  CHECK(slurp(csv_path) ==
        "image_id,true_label,attack,grads_used,success,distortion_l2,distortion_linf\n"
        "0,7,fgsm,1,1,0.5,0.25\n"
        "2,3,fgsm,1,0,0,0\n");

  OperatingCharacteristic oc;
  oc.distortions = {0.5, 1.25};
  oc.probs = {0.25, 0.5};
  const std::string oc_path = "tmp_characteristic.csv";
  write_characteristic_csv(oc_path, oc);
  CHECK(slurp(oc_path) == "D,P\n0.5,0.25\n1.25,0.5\n");

  const std::string json_path = "tmp_aggregate.json";
  write_aggregate_json(json_path, r, R"({"eps": 0.5})");
  const nlohmann::json j = nlohmann::json::parse(slurp(json_path));
  CHECK(j["attack"] == "fgsm");
  CHECK(j["n_evaluated"] == 2);
  CHECK(j["n_total"] == 3);
  CHECK(j["n_success"] == 1);
  CHECK(j["p_suc"] == 0.5);
  CHECK(j["d_bar"] == 0.5);
  CHECK(j["multi_epsilon"] == false);
  CHECK(j["config"]["eps"] == 0.5);

  // d_bar serializes as null when no image succeeded.
  BenchmarkReport none = r;
  none.d_bar.reset();
  write_aggregate_json(json_path, none, "");
  const nlohmann::json j2 = nlohmann::json::parse(slurp(json_path));
  CHECK(j2["d_bar"].is_null());
  CHECK_FALSE(j2.contains("config"));

  // Byte-identical on rewrite.
  const std::string first = slurp(json_path);
  write_aggregate_json(json_path, none, "");
  CHECK(slurp(json_path) == first);

  CHECK_THROWS_AS(write_records_csv("no_such_dir/x.csv", r), IoError);
  std::remove(csv_path.c_str());
  std::remove(oc_path.c_str());
  std::remove(json_path.c_str());
}
