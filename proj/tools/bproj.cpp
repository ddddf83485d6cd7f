// Command-line front end: train models, benchmark attacks, tabulate the
// quantized-distortion predictor, and trace attacks on 2D toy models.
//
// All commands read a JSON config (--config), write their outputs under a
// directory (--out), and log diagnostics to stderr only. Exit codes: 0 on
// success, 2 for config/validation/file problems, 1 for unexpected errors.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "bproj/attacks.hpp"
#include "bproj/dataset.hpp"
#include "bproj/errors.hpp"
#include "bproj/eval.hpp"
#include "bproj/model.hpp"
#include "bproj/quant.hpp"
#include "bproj/train.hpp"
#include "bproj/vec.hpp"

namespace {

using json = nlohmann::json;
using namespace bproj;

/// Config/usage problem: reported to stderr, exit code 2.
struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CliError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw CliError("config " + path + ": top level must be an object");
  return j;
}

/// Rejects config objects with keys outside the allowed set, so typos fail
/// loudly instead of silently using defaults.
void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw CliError(where + ": unknown key \"" + key + "\"");
    }
  }
}

const json& require_key(const json& j, const std::string& where, const std::string& key) {
  const auto it = j.find(key);
  if (it == j.end()) throw CliError(where + ": missing key \"" + key + "\"");
  return *it;
}

template <class T>
T get_or(const json& j, const std::string& where, const std::string& key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw CliError(where + ": key \"" + key + "\" has the wrong type");
  }
}

template <class T>
T get_req(const json& j, const std::string& where, const std::string& key) {
  const json& v = require_key(j, where, key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw CliError(where + ": key \"" + key + "\" has the wrong type");
  }
}

Dataset dataset_from_config(const json& j, const std::string& where) {
  if (!j.is_object()) throw CliError(where + ": must be an object");
  const std::string kind = get_req<std::string>(j, where, "kind");
  if (kind == "idx") {
    check_keys(j, where, {"kind", "images", "labels", "limit"});
    const std::string images = get_req<std::string>(j, where, "images");
    const std::string labels = get_req<std::string>(j, where, "labels");
    std::optional<size_t> limit;
    if (j.count("limit")) limit = get_req<size_t>(j, where, "limit");
    return load_idx(images, labels, limit);
  }
  if (kind == "two_moons") {
    check_keys(j, where, {"kind", "count", "noise_sd", "seed"});
    return make_two_moons(get_req<size_t>(j, where, "count"),
                          get_or<double>(j, where, "noise_sd", 0.05),
                          get_or<uint64_t>(j, where, "seed", 0));
  }
  if (kind == "points") {
    check_keys(j, where, {"kind", "points", "labels"});
    Dataset ds;
    for (const json& p : require_key(j, where, "points")) {
      ds.images.push_back(p.get<ImageVec>());
    }
    for (const json& l : require_key(j, where, "labels")) {
      ds.labels.push_back(l.get<int>());
    }
    if (ds.images.size() != ds.labels.size()) {
      throw CliError(where + ": points/labels length mismatch");
    }
    return ds;
  }
  throw CliError(where + ": unknown dataset kind \"" + kind + "\"");
}

std::unique_ptr<Classifier> model_from_config(const json& j, const std::string& where) {
  if (j.is_string()) {
    return std::make_unique<MlpModel>(load_model(j.get<std::string>()));
  }
  if (j.is_object() && j.count("toy2d")) {
    check_keys(j, where, {"toy2d"});
    const json& t = j["toy2d"];
    check_keys(t, where + ".toy2d", {"cx", "cy", "r0", "sharpness"});
    return std::make_unique<Toy2DModel>(
        get_or<double>(t, where, "cx", 0.15), get_or<double>(t, where, "cy", 0.15),
        get_or<double>(t, where, "r0", 0.35), get_or<double>(t, where, "sharpness", 12.0));
  }
  throw CliError(where + ": expected a model file path or {\"toy2d\": {...}}");
}

QuantMode quant_mode_from_string(const std::string& s, const std::string& where) {
  if (s == "adaptive") return QuantMode::adaptive;
  if (s == "round_each_iter") return QuantMode::round_each_iter;
  if (s == "round_at_end") return QuantMode::round_at_end;
  throw CliError(where + ": unknown quant_mode \"" + s + "\"");
}

/// Builds the attack closure. For the epsilon-ball attacks an explicit eps
/// must come either from the attack object or from `eps_override` (the
/// multi-epsilon protocol); `record_trace` is used by trace2d.
AttackFn attack_from_config(const json& a, const QuantGrid& grid, bool record_trace,
                            std::optional<double> eps_override, std::string* name_out) {
  if (!a.is_object()) throw CliError("attack: must be an object");
  const std::string name = get_req<std::string>(a, "attack", "name");
  if (name_out) *name_out = name;
  const std::string where = "attack(" + name + ")";

  auto eps_value = [&]() -> double {
    if (eps_override) return *eps_override;
    return get_req<double>(a, where, "eps");
  };

  if (name == "fgsm") {
    check_keys(a, where, {"name", "eps"});
    const double eps = eps_value();
    return [eps, grid](const Classifier& m, const ImageVec& x, int t) {
      return fgsm(m, x, t, eps, grid);
    };
  }
  if (name == "ifgsm") {
    check_keys(a, where, {"name", "eps", "alpha", "iters"});
    const double eps = eps_value();
    const double alpha = get_or<double>(a, where, "alpha", 0.08);
    const int iters = get_or<int>(a, where, "iters", 20);
    return [=](const Classifier& m, const ImageVec& x, int t) {
      return ifgsm(m, x, t, eps, alpha, iters, grid, record_trace);
    };
  }
  if (name == "pgd2") {
    check_keys(a, where, {"name", "eps", "alpha", "iters"});
    const double eps = eps_value();
    const double alpha = get_or<double>(a, where, "alpha", eps / 2.0);
    const int iters = get_or<int>(a, where, "iters", 20);
    return [=](const Classifier& m, const ImageVec& x, int t) {
      return pgd2(m, x, t, eps, alpha, iters, grid, record_trace);
    };
  }
  if (name == "cw") {
    check_keys(a, where,
               {"name", "lambda0", "search_steps", "inner_iters", "learning_rate", "margin"});
    CwParams p;
    p.lambda0 = get_or<double>(a, where, "lambda0", p.lambda0);
    p.search_steps = get_or<int>(a, where, "search_steps", p.search_steps);
    p.inner_iters = get_or<int>(a, where, "inner_iters", p.inner_iters);
    p.learning_rate = get_or<double>(a, where, "learning_rate", p.learning_rate);
    p.margin = get_or<double>(a, where, "margin", p.margin);
    p.record_trace = record_trace;
    return [p, grid](const Classifier& m, const ImageVec& x, int t) {
      return cw(m, x, t, p, grid);
    };
  }
  if (name == "ddn") {
    check_keys(a, where, {"name", "eps0", "gamma", "alpha", "iters"});
    DdnParams p;
    p.eps0 = get_or<double>(a, where, "eps0", p.eps0);
    p.gamma = get_or<double>(a, where, "gamma", p.gamma);
    p.alpha = get_or<double>(a, where, "alpha", p.alpha);
    p.iters = get_or<int>(a, where, "iters", p.iters);
    p.record_trace = record_trace;
    return [p, grid](const Classifier& m, const ImageVec& x, int t) {
      return ddn(m, x, t, p, grid);
    };
  }
  if (name == "bp") {
    check_keys(a, where, {"name", "alpha", "gamma_min", "gamma_max", "iters", "quant_mode"});
    BpParams p;
    p.alpha = get_or<double>(a, where, "alpha", p.alpha);
    p.gamma_min = get_or<double>(a, where, "gamma_min", p.gamma_min);
    p.gamma_max = get_or<double>(a, where, "gamma_max", p.gamma_max);
    p.iters = get_or<int>(a, where, "iters", p.iters);
    p.quant_mode =
        quant_mode_from_string(get_or<std::string>(a, where, "quant_mode", "adaptive"), where);
    p.record_trace = record_trace;
    return [p, grid](const Classifier& m, const ImageVec& x, int t) {
      return bp(m, x, t, p, grid);
    };
  }
  throw UnknownAttackError("unknown attack name \"" + name + "\"");
}

bool attack_takes_eps_grid(const std::string& name) {
  return name == "fgsm" || name == "ifgsm" || name == "pgd2";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw IoError("cannot write " + path.string());
  std::fwrite(text.data(), 1, text.size(), f);
  const bool bad = std::ferror(f);
  std::fclose(f);
  if (bad) throw IoError("write failed: " + path.string());
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------

int cmd_train(const json& cfg, const std::filesystem::path& out, uint64_t seed) {
  check_keys(cfg, "config", {"dataset", "test_dataset", "model", "train", "seed"});
  const Dataset train_set = dataset_from_config(require_key(cfg, "config", "dataset"), "dataset");

  TrainConfig tc;
  tc.seed = seed;  // a "seed" key in the config is tolerated; the flag wins
  const json& model_cfg = require_key(cfg, "config", "model");
  check_keys(model_cfg, "model", {"hidden_sizes"});
  tc.hidden_sizes = get_or<std::vector<int>>(model_cfg, "model", "hidden_sizes", {128, 128});
  const json& train_cfg = require_key(cfg, "config", "train");
  check_keys(train_cfg, "train", {"epochs", "batch_size", "learning_rate"});
  tc.epochs = get_or<int>(train_cfg, "train", "epochs", 10);
  tc.batch_size = get_or<int>(train_cfg, "train", "batch_size", 32);
  tc.learning_rate = get_or<double>(train_cfg, "train", "learning_rate", 0.1);

  int num_classes = 0;
  for (int l : train_set.labels) num_classes = std::max(num_classes, l + 1);
  num_classes = std::max(num_classes, 2);
  const int input_dim = static_cast<int>(train_set.images.at(0).size());

  std::fprintf(stderr, "training mlp %d -> ... -> %d on %zu images, %d epochs\n", input_dim,
               num_classes, train_set.size(), tc.epochs);
  MlpModel model(input_dim, num_classes, tc.hidden_sizes, tc.seed);
  model = train_sgd(std::move(model), train_set, tc);

  const double train_acc = accuracy(model, train_set);
  json log;
  log["seed"] = tc.seed;
  log["epochs"] = tc.epochs;
  log["batch_size"] = tc.batch_size;
  log["learning_rate"] = tc.learning_rate;
  log["hidden_sizes"] = tc.hidden_sizes;
  log["n_train"] = train_set.size();
  log["train_accuracy"] = train_acc;
  if (cfg.count("test_dataset")) {
    const Dataset test_set = dataset_from_config(cfg["test_dataset"], "test_dataset");
    log["test_accuracy"] = accuracy(model, test_set);
  }
  log["config"] = cfg;

  save_model((out / "model.bin").string(), model);
  write_text(out / "train_log.json", log.dump(2) + "\n");
  std::fprintf(stderr, "train accuracy %.4f; wrote %s\n", train_acc,
               (out / "model.bin").string().c_str());
  return 0;
}

int cmd_bench(const json& cfg, const std::filesystem::path& out, uint64_t seed, int jobs) {
  check_keys(cfg, "config",
             {"model", "dataset", "attack", "quant_levels", "d_upp", "epsilon_grid"});
  const std::unique_ptr<Classifier> model =
      model_from_config(require_key(cfg, "config", "model"), "model");
  const Dataset data = dataset_from_config(require_key(cfg, "config", "dataset"), "dataset");
  const QuantGrid grid(get_or<int>(cfg, "config", "quant_levels", 256));
  const double d_upp = get_or<double>(cfg, "config", "d_upp", 2.0);
  const json& attack_cfg = require_key(cfg, "config", "attack");

  BenchmarkReport report;
  if (cfg.count("epsilon_grid")) {
    const std::vector<double> eps_grid = get_req<std::vector<double>>(cfg, "config", "epsilon_grid");
    if (eps_grid.empty()) throw CliError("epsilon_grid: must not be empty");
    const std::string name = get_req<std::string>(attack_cfg, "attack", "name");
    if (!attack_takes_eps_grid(name)) {
      throw CliError("epsilon_grid: attack \"" + name + "\" does not take an epsilon ball");
    }
    if (attack_cfg.count("eps")) {
      throw CliError("epsilon_grid: remove the fixed \"eps\" from the attack object");
    }
    std::vector<BenchmarkReport> runs;
    for (double eps : eps_grid) {
      std::string run_name;
      const AttackFn fn = attack_from_config(attack_cfg, grid, false, eps, &run_name);
      std::fprintf(stderr, "bench %s eps=%g\n", run_name.c_str(), eps);
      runs.push_back(run_benchmark(*model, data, run_name, fn, d_upp, seed, jobs));
    }
    report = aggregate_multi_epsilon(runs);
  } else {
    std::string name;
    const AttackFn fn = attack_from_config(attack_cfg, grid, false, std::nullopt, &name);
    std::fprintf(stderr, "bench %s on %zu images\n", name.c_str(), data.size());
    report = run_benchmark(*model, data, name, fn, d_upp, seed, jobs);
  }

  write_records_csv((out / "records.csv").string(), report);
  write_characteristic_csv((out / "characteristic.csv").string(),
                           operating_characteristic(report.records));
  write_aggregate_json((out / "aggregate.json").string(), report, cfg.dump());
  std::fprintf(stderr, "p_suc=%.4f n=%zu -> %s\n", report.p_suc, report.records.size(),
               out.string().c_str());
  return 0;
}

int cmd_quantpred(const json& cfg, const std::filesystem::path& out, uint64_t seed) {
  check_keys(cfg, "config", {"n", "delta", "rho", "samples"});
  const int n = get_req<int>(cfg, "config", "n");
  const double delta = get_req<double>(cfg, "config", "delta");
  const int samples = get_or<int>(cfg, "config", "samples", 0);

  std::vector<double> rhos;
  const json& rho_cfg = require_key(cfg, "config", "rho");
  if (rho_cfg.is_array()) {
    rhos = rho_cfg.get<std::vector<double>>();
  } else if (rho_cfg.is_object()) {
    check_keys(rho_cfg, "rho", {"start", "stop", "count", "scale"});
    const double start = get_req<double>(rho_cfg, "rho", "start");
    const double stop = get_req<double>(rho_cfg, "rho", "stop");
    const int count = get_req<int>(rho_cfg, "rho", "count");
    const std::string scale = get_or<std::string>(rho_cfg, "rho", "scale", "linear");
    if (count < 2 || stop < start) throw CliError("rho: need count >= 2 and stop >= start");
    for (int i = 0; i < count; ++i) {
      const double f = static_cast<double>(i) / (count - 1);
      if (scale == "linear") {
        rhos.push_back(start + f * (stop - start));
      } else if (scale == "log") {
        if (start <= 0.0) throw CliError("rho: log scale needs start > 0");
        rhos.push_back(start * std::pow(stop / start, f));
      } else {
        throw CliError("rho: unknown scale \"" + scale + "\"");
      }
    }
  } else {
    throw CliError("rho: expected an array or {start, stop, count, scale}");
  }
  if (rhos.empty()) throw CliError("rho: must not be empty");

  std::string csv = samples > 0 ? "rho,sqrt_exact,sqrt_highres,sqrt_mc\n"
                                : "rho,sqrt_exact,sqrt_highres\n";
  for (double rho : rhos) {
    const double ex = std::sqrt(expected_sq_distortion_exact(n, delta, rho));
    const double hr = std::sqrt(expected_sq_distortion_highres(n, delta, rho));
    csv += fmt_double(rho) + "," + fmt_double(ex) + "," + fmt_double(hr);
    if (samples > 0) {
      csv += "," + fmt_double(std::sqrt(mc_quantized_distortion(n, delta, rho, samples, seed)));
    }
    csv += "\n";
  }
  write_text(out / "predictor.csv", csv);
  std::fprintf(stderr, "wrote %zu rows to %s\n", rhos.size(),
               (out / "predictor.csv").string().c_str());
  return 0;
}

int cmd_trace2d(const json& cfg, const std::filesystem::path& out) {
  check_keys(cfg, "config",
             {"model", "start", "label", "quant_levels", "grid_resolution", "attack"});
  std::unique_ptr<Classifier> model;
  if (cfg.count("model")) {
    model = model_from_config(cfg["model"], "model");
  } else {
    model = std::make_unique<Toy2DModel>();
  }
  if (model->input_dim() != 2) throw CliError("trace2d: model must take 2D inputs");

  const ImageVec start = get_req<ImageVec>(cfg, "config", "start");
  if (start.size() != 2) throw CliError("trace2d: start must have 2 coordinates");
  const int label = get_req<int>(cfg, "config", "label");
  const QuantGrid grid(get_or<int>(cfg, "config", "quant_levels", 256));
  const int res = get_or<int>(cfg, "config", "grid_resolution", 101);
  if (res < 2) throw CliError("trace2d: grid_resolution must be >= 2");

  std::string name;
  const AttackFn fn =
      attack_from_config(require_key(cfg, "config", "attack"), grid, true, std::nullopt, &name);
  const AttackOutcome outcome = fn(*model, start, label);
  if (!outcome.trace) throw CliError("trace2d: attack \"" + name + "\" records no trace");

  std::string trace_csv = "iter,y0,y1,loss,adversarial\n";
  int it = 0;
  for (const TracePoint& tp : *outcome.trace) {
    trace_csv += std::to_string(it++) + "," + fmt_double(tp.iterate[0]) + "," +
                 fmt_double(tp.iterate[1]) + "," + fmt_double(tp.loss) + "," +
                 (tp.adversarial ? "1" : "0") + "\n";
  }
  write_text(out / "trace.csv", trace_csv);

  // Class-1 probability sampled on a regular lattice covering [0,1]^2, for
  // external contour plotting.
  std::string grid_csv = "x0,x1,p1\n";
  for (int iy = 0; iy < res; ++iy) {
    for (int ix = 0; ix < res; ++ix) {
      const double x0 = static_cast<double>(ix) / (res - 1);
      const double x1 = static_cast<double>(iy) / (res - 1);
      const ProbVector p = model->forward({x0, x1});
      grid_csv += fmt_double(x0) + "," + fmt_double(x1) + "," + fmt_double(p[1]) + "\n";
    }
  }
  write_text(out / "grid.csv", grid_csv);

  const CrossingStats stats = boundary_crossing_stats(*outcome.trace);
  json sj;
  sj["attack"] = name;
  sj["crossings"] = stats.crossings;
  if (stats.adversarial_fraction) {
    sj["adversarial_fraction"] = *stats.adversarial_fraction;
  } else {
    sj["adversarial_fraction"] = nullptr;
  }
  sj["success"] = outcome.success;
  sj["distortion_l2"] = outcome.distortion_l2;
  sj["grads_used"] = outcome.grads_used;
  sj["trace_points"] = outcome.trace->size();
  sj["config"] = cfg;
  write_text(out / "stats.json", sj.dump(2) + "\n");
  std::fprintf(stderr, "trace: %zu points, %d crossings, success=%d\n", outcome.trace->size(),
               stats.crossings, outcome.success ? 1 : 0);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quantized adversarial-attack benchmark"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  uint64_t seed = 0;
  int jobs = 1;

  CLI::App* train = app.add_subcommand("train", "train an MLP classifier");
  CLI::App* bench = app.add_subcommand("bench", "benchmark an attack on a dataset");
  CLI::App* quantpred = app.add_subcommand("quantpred", "tabulate the distortion predictor");
  CLI::App* trace2d = app.add_subcommand("trace2d", "trace an attack on a 2D model");

  for (CLI::App* sub : {train, bench, quantpred, trace2d}) {
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
  }
  for (CLI::App* sub : {train, bench, quantpred}) {
    sub->add_option("--seed", seed, "random seed")->required();
  }
  trace2d->add_option("--seed", seed, "random seed (unused: trace2d is deterministic)");
  bench->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const json cfg = load_config(config_path);
    const std::filesystem::path out(out_dir);
    std::filesystem::create_directories(out);
    if (app.got_subcommand(train)) return cmd_train(cfg, out, seed);
    if (app.got_subcommand(bench)) return cmd_bench(cfg, out, seed, jobs);
    if (app.got_subcommand(quantpred)) return cmd_quantpred(cfg, out, seed);
    return cmd_trace2d(cfg, out);
  } catch (const CliError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}
