#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "hcmen/checkpoint.hpp"
#include "hcmen/config.hpp"
#include "hcmen/dataset.hpp"
#include "hcmen/error.hpp"
#include "hcmen/gradcheck_suite.hpp"
#include "hcmen/init.hpp"
#include "hcmen/ops.hpp"
#include "hcmen/ssm.hpp"
#include "hcmen/train.hpp"
#include "json.hpp"

namespace hcmen::cli {

namespace fs = std::filesystem;

namespace {

// Raised for bad flag values found after parsing.
struct UsageError : Error {
  using Error::Error;
};

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw UsageError(std::string(flag) + ": empty list entry");
    std::size_t used = 0;
    try {
      if constexpr (std::is_floating_point_v<T>) {
        out.push_back(static_cast<T>(std::stod(item, &used)));
      } else {
        if (item.front() == '-') throw std::invalid_argument(item);
        out.push_back(static_cast<T>(std::stoull(item, &used)));
      }
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw UsageError(std::string(flag) + ": bad value '" + item + "'");
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
  return out;
}

bool non_empty_dir(const fs::path& p) {
  std::error_code ec;
  return fs::is_directory(p, ec) && !fs::is_empty(p, ec);
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t n = 500;
  std::uint64_t seed = 0;
  double noise = 1.0;
  bool force = false;
};

int run_synth(const SynthArgs& a, std::ostream& out) {
  if (a.n == 0) throw UsageError("--n must be at least 1");
  if (!(a.noise >= 0.0)) throw UsageError("--noise must be non-negative");
  const fs::path root(a.out);
  if (fs::exists(root) && !fs::is_directory(root)) {
    throw UsageError("--out '" + a.out + "' exists and is not a directory");
  }
  if (non_empty_dir(root)) {
    if (!a.force) throw UsageError("--out '" + a.out + "' is not empty; pass --force to overwrite");
    fs::remove(root / "manifest.jsonl");
    for (auto m : kModalities) fs::remove_all(root / std::string(modality_name(m)));
  }
  SynthOptions opts;
  opts.count = a.n;
  opts.seed = a.seed;
  opts.noise_scale = a.noise;
  out << nlohmann::json{{"out", a.out}, {"n", a.n}, {"seed", a.seed}, {"noise", a.noise}}.dump()
      << '\n';
  const auto data = generate_synthetic(opts);
  write_dataset(data, root);
  out << "train " << data.count(Split::Train) << '\n'
      << "valid " << data.count(Split::Valid) << '\n'
      << "test " << data.count(Split::Test) << '\n';
  return kOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data, config, out, metrics;
  std::optional<double> missing_rate;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  bool disable_cnn = false, disable_mamba = false, disable_cmea = false, quiet = false;
};

int run_train(const TrainArgs& a, std::ostream& out) {
  ModelConfig cfg = a.config.empty() ? ModelConfig{} : load_config_file(a.config);
  if (a.missing_rate) cfg.missing_rate = *a.missing_rate;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.seed) cfg.seed = *a.seed;
  cfg.disable_cnn = cfg.disable_cnn || a.disable_cnn;
  cfg.disable_mamba = cfg.disable_mamba || a.disable_mamba;
  cfg.disable_cmea = cfg.disable_cmea || a.disable_cmea;
  cfg.validate();

  const auto data = load_dataset(a.data);
  cfg = resolve_config(cfg, data);
  out << config_to_json(cfg) << '\n';

  TrainOptions opts;
  opts.checkpoint_path = a.out;
  opts.metrics_path = a.metrics.empty() ? a.out + ".metrics.csv" : a.metrics;
  opts.log = a.quiet ? nullptr : &out;
  const auto result = train(cfg, data, opts);

  const auto model = best_model(result);
  out << "parameters " << model.parameter_count() << '\n'
      << "best_epoch " << result.best_epoch << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "best_val_mae %.6f\n", result.best_val_mae);
  out << buf;
  if (data.count(Split::Test) > 0) {
    const auto report = evaluate(model, data, Split::Test, cfg.missing_rate, cfg.seed);
    out << "test " << format_report(report) << '\n';
  }
  out << "checkpoint " << opts.checkpoint_path.string() << '\n'
      << "metrics " << opts.metrics_path.string() << '\n';
  return kOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string data, ckpt, rates = "0", report, split = "test";
  std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
  const auto rates = parse_list<double>(a.rates, "--missing-rate");
  for (double r : rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw UsageError("--missing-rate values must lie in [0, 1]");
  }
  const Split split = [&] {
    try {
      return parse_split(a.split);
    } catch (const ConfigError& e) {
      throw UsageError(std::string("--split: ") + e.what());
    }
  }();
  const auto model = load_model(a.ckpt);
  const auto data = load_dataset(a.data);
  resolve_config(model.config(), data);
  out << config_to_json(model.config()) << '\n';

  std::ofstream report;
  if (!a.report.empty()) {
    report.open(a.report, std::ios::trunc);
    if (!report) throw IoError("cannot write report " + a.report);
    report << "missing_rate,seed," << metrics_csv_header() << '\n';
  }
  for (double r : rates) {
    const auto m = evaluate(model, data, split, r, a.seed);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", r);
    out << "missing_rate " << buf << "  " << format_report(m) << '\n';
    if (report.is_open()) report << buf << ',' << a.seed << ',' << metrics_csv_row(m) << '\n';
  }
  if (report.is_open() && !report) throw IoError("failed writing report " + a.report);
  return kOk;
}

// ---- gradcheck ------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 0;
  double perturb = 0.0;
  double eps = 1e-6;
};

int run_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  GradSuiteOptions opts;
  opts.seed = a.seed;
  opts.analytic_offset = a.perturb;
  opts.eps = a.eps;
  out << nlohmann::json{{"seed", a.seed}, {"tolerance", opts.tolerance}}.dump() << '\n';
  out << "tiny_config " << config_to_json(tiny_gradcheck_config(), -1) << '\n';
  const auto checks = run_gradient_suite(opts);

  std::map<std::string, const ComponentCheck*> worst;
  std::vector<const ComponentCheck*> failed;
  char buf[256];
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof buf, "%-18s %-24s max_rel_err %.3e  coords %6zu  %s\n", c.module.c_str(),
                  c.name.c_str(), c.max_rel_error, c.coords_checked, c.passed() ? "ok" : "FAIL");
    out << buf;
    auto& w = worst[c.module];
    if (!w || c.max_rel_error > w->max_rel_error) w = &c;
    if (!c.passed()) failed.push_back(&c);
  }
  for (const auto& [module, c] : worst) {
    std::snprintf(buf, sizeof buf, "worst %-18s %-24s %.3e\n", module.c_str(), c->name.c_str(),
                  c->max_rel_error);
    out << buf;
  }
  if (failed.empty()) {
    out << "gradcheck passed\n";
    return kOk;
  }
  for (const auto* c : failed) {
    std::snprintf(buf, sizeof buf, "gradcheck failed: %s/%s max_rel_err %.3e >= %.0e at %s[%zu] analytic %.6e numeric %.6e\n",
                  c->module.c_str(), c->name.c_str(), c->max_rel_error, c->tolerance,
                  c->worst_param.c_str(), c->worst_index, c->worst_analytic, c->worst_numeric);
    err << buf;
  }
  return kRuntime;
}

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
  std::string lengths = "1024,2048,4096,8192";
  std::size_t trials = 5;
  std::uint64_t seed = 0;
};

int run_bench(const BenchArgs& a, std::ostream& out) {
  const auto lengths = parse_list<std::size_t>(a.lengths, "--lengths");
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] == 0) throw UsageError("--lengths must be positive");
    if (i > 0 && lengths[i] <= lengths[i - 1]) throw UsageError("--lengths must be ascending");
  }
  if (a.trials == 0) throw UsageError("--trials must be at least 1");
  out << "# " << nlohmann::json{{"lengths", lengths}, {"trials", a.trials}, {"seed", a.seed}}.dump()
      << '\n';
  const auto rows = time_selective_scan(lengths, a.trials, a.seed);
  out << "length,median_ms\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.4f\n", r.length, r.median_ms);
    out << buf;
  }
  if (rows.size() >= 2) {
    std::snprintf(buf, sizeof buf, "# slope %.4f\n# max_doubling_ratio %.4f\n", loglog_slope(rows),
                  max_doubling_ratio(rows));
    out << buf;
  }
  return kOk;
}

}  // namespace

std::vector<ScanTiming> time_selective_scan(const std::vector<std::size_t>& lengths,
                                            std::size_t trials, std::uint64_t seed) {
  const ModelConfig defaults;
  const std::size_t inner = defaults.inner_dim, state = defaults.state_dim;
  std::mt19937_64 rng(seed);
  ParamStore<float> store;
  const auto params = make_ssm_params<float>(store, "bench", inner, state, rng);
  NoGradGuard no_grad;
  std::vector<ScanTiming> rows;
  // One pass at the largest size first so page faults do not land on the first row.
  if (!lengths.empty()) {
    const std::size_t top = *std::max_element(lengths.begin(), lengths.end());
    selective_scan(params, uniform_tensor<float>({top, inner}, 1.0, rng));
  }
  for (std::size_t len : lengths) {
    const auto x = uniform_tensor<float>({len, inner}, 1.0, rng);
    selective_scan(params, x);  // warm-up
    std::vector<double> ms;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto start = std::chrono::steady_clock::now();
      const auto y = selective_scan(params, x);
      const auto stop = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
      if (!std::isfinite(y[0])) throw NumericError("bench: non-finite scan output");
    }
    std::sort(ms.begin(), ms.end());
    const std::size_t n = ms.size();
    rows.push_back({len, n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2])});
  }
  return rows;
}

double loglog_slope(const std::vector<ScanTiming>& rows) {
  if (rows.size() < 2) throw ContractError("loglog_slope: need two points");
  double mx = 0, my = 0;
  for (const auto& r : rows) {
    mx += std::log(static_cast<double>(r.length));
    my += std::log(r.median_ms);
  }
  mx /= static_cast<double>(rows.size());
  my /= static_cast<double>(rows.size());
  double sxy = 0, sxx = 0;
  for (const auto& r : rows) {
    const double dx = std::log(static_cast<double>(r.length)) - mx;
    sxy += dx * (std::log(r.median_ms) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

double max_doubling_ratio(const std::vector<ScanTiming>& rows) {
  double worst = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double growth = static_cast<double>(rows[i].length) / static_cast<double>(rows[i - 1].length);
    const double ratio = rows[i].median_ms / rows[i - 1].median_ms;
    worst = std::max(worst, std::pow(ratio, std::log(2.0) / std::log(growth)));
  }
  return worst;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid CNN-Mamba multimodal sentiment regression"};
  app.name("hcmen");
  app.require_subcommand(1, 1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic multimodal dataset");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--n", synth.n, "Number of utterances");
  s->add_option("--seed", synth.seed, "Random seed");
  s->add_option("--noise", synth.noise, "Noise scale multiplier");
  s->add_flag("--force", synth.force, "Overwrite a non-empty output directory");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model and keep the best-validation checkpoint");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--config", tr.config, "Config JSON file");
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--metrics", tr.metrics, "Per-epoch CSV (default <out>.metrics.csv)");
  t->add_option("--missing-rate", tr.missing_rate, "Training and validation missing rate");
  t->add_option("--epochs", tr.epochs, "Number of epochs");
  t->add_option("--seed", tr.seed, "Seed for init, shuffling and corruption");
  t->add_flag("--disable-cnn", tr.disable_cnn, "Remove the local conv stage");
  t->add_flag("--disable-mamba", tr.disable_mamba, "Remove the Bi-Mamba stage");
  t->add_flag("--disable-cmea", tr.disable_cmea, "Remove mixing, proxies and the contrastive loss");
  t->add_flag("--quiet", tr.quiet, "No per-epoch lines");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a checkpoint under simulated missing data");
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--ckpt", ev.ckpt, "Checkpoint path")->required();
  e->add_option("--missing-rate", ev.rates, "Missing rate or comma list of rates");
  e->add_option("--seed", ev.seed, "Corruption seed");
  e->add_option("--split", ev.split, "train, valid or test");
  e->add_option("--report", ev.report, "CSV with one row per missing rate");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  g->add_option("--seed", gc.seed, "Seed for inputs and sampled coordinates");
  g->add_option("--perturb", gc.perturb, "Offset added to analytic gradients")->group("");
  g->add_option("--eps", gc.eps, "Finite-difference step")->group("");

  BenchArgs bn;
  auto* b = app.add_subcommand("bench", "Time the selective scan against sequence length");
  b->add_option("--lengths", bn.lengths, "Ascending comma list of lengths");
  b->add_option("--trials", bn.trials, "Trials per length (median reported)");
  b->add_option("--seed", bn.seed, "Input seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) return run_synth(synth, out);
    if (t->parsed()) return run_train(tr, out);
    if (e->parsed()) return run_eval(ev, out);
    if (g->parsed()) return run_gradcheck(gc, out, err);
    if (b->parsed()) return run_bench(bn, out);
  } catch (const UsageError& x) {
    err << "error: " << x.what() << '\n';
    return kUsage;
  } catch (const ConfigError& x) {
    err << "error: " << x.what() << '\n';
    return kUsage;
  } catch (const std::exception& x) {
    err << "error: " << x.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace hcmen::cli
