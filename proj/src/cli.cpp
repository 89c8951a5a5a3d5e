#include "stictaf/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "stictaf/config.hpp"
#include "stictaf/evaluation.hpp"
#include "stictaf/run_io.hpp"

namespace stictaf {

namespace fs = std::filesystem;

namespace {

struct Invalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
};

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Invalid(std::string(flag) + ": cannot parse '" + item + "' as a number");
    }
  }
  return out;
}

// Loads a config file; relative wind CSV paths become absolute so the
// resolved config stays valid from any working directory.
RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw Invalid("config file '" + path.string() + "' does not exist");
  RunConfig cfg = run_config_from_json(load_config_file(path));
  if (!cfg.target.csv.empty()) {
    fs::path csv(cfg.target.csv);
    if (csv.is_relative()) csv = path.parent_path() / csv;
    cfg.target.csv = fs::weakly_canonical(fs::absolute(csv)).string();
  }
  return cfg;
}

struct RunDir {
  fs::path dir;
  RunConfig cfg;
  std::string hash;
};

RunDir open_run(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Invalid("run directory '" + dir.string() + "' does not exist");
  const fs::path cfg_path = dir / "config.json";
  if (!fs::exists(cfg_path)) throw Invalid("run directory '" + dir.string() + "' has no config.json");
  RunDir r;
  r.dir = dir;
  r.cfg = run_config_from_json(load_config_file(cfg_path));
  r.hash = config_hash(read_text_file(cfg_path));
  return r;
}

std::string prepare_output(const fs::path& dir, const std::string& config_text) {
  fs::create_directories(dir);
  write_text_file(dir / "config.json", config_text);
  return config_hash(config_text);
}

std::vector<std::string> coordinate_names(const TargetDensity& t) {
  if (t.name() == "wind") return WindParams::names();
  std::vector<std::string> out;
  for (int l = 0; l < t.dim(); ++l) out.push_back("x" + std::to_string(l + 1));
  return out;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, Context& ctx) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  fs::path dir = !a.out.empty()               ? fs::path(a.out)
                 : !cfg.output_dir.empty()    ? fs::path(cfg.output_dir)
                                              : runs_root() / fs::path(a.config).stem();
  auto targets = make_run_targets(cfg.target);
  const std::string text = resolved_config_text(cfg);
  const std::string hash = prepare_output(dir, text);

  auto persist = [&](const StictafModel& m, const std::vector<TraceRow>& trace) {
    write_json_file(dir / "model.json", model_to_json(m, hash));
    write_text_file(dir / "elbo_trace.csv", trace_csv(trace, hash));
  };
  TrainResult result;
  try {
    result = train(*targets.train, cfg.train, targets.exact.get(), persist);
  } catch (const TrainAborted& e) {
    persist(e.checkpoint, e.trace);
    ctx.err << "train: numerical abort: " << e.what() << "\ncheckpoint written to " << dir.string() << "\n";
    return kExitNumeric;
  }
  persist(result.model, result.trace);
  if (result.model.tails) write_text_file(dir / "tails.csv", tails_csv(*result.model.tails, hash));
  const RngStream root(cfg.train.seed, 0);
  const auto s = sample(result.model, cfg.output_samples, root.split("output-samples"), cfg.train.parallel);
  write_text_file(dir / "samples.csv", samples_csv(s, hash));
  ctx.out << "run " << dir.string() << ": final ELBO " << result.trace.back().elbo << "\n";
  return kExitOk;
}

struct TailArgs {
  std::string config, target = "nig", csv, mu, sigma, out;
  int dim = 2;
  std::optional<std::size_t> n, j;
  std::optional<double> nu;
  std::optional<std::uint64_t> seed;
};

int cmd_estimate_tails(const TailArgs& a, Context& ctx) {
  RunConfig cfg;
  if (!a.config.empty()) {
    cfg = load_run_config(a.config);
  } else {
    cfg.target.name = a.target;
    cfg.target.dim = a.dim;
    if (!a.csv.empty()) cfg.target.csv = fs::weakly_canonical(fs::absolute(a.csv)).string();
    cfg = run_config_from_json(to_json(cfg));
  }
  if (a.n) cfg.train.tails.n = *a.n;
  if (a.j) cfg.train.tails.j = *a.j;
  if (a.nu) cfg.train.tails.nu = *a.nu;
  if (a.seed) cfg.train.seed = *a.seed;
  cfg = run_config_from_json(to_json(cfg));  // re-validate overrides
  auto targets = make_run_targets(cfg.target);
  const TargetDensity& t = *targets.exact;
  const RngStream root(cfg.train.seed, 0);

  ComponentAnchor anchor;
  anchor.weight = 1.0;
  if (!a.mu.empty() || !a.sigma.empty()) {
    anchor.mu = a.mu.empty() ? std::vector<double>(t.dim(), 0.0) : parse_list(a.mu, "--mu");
    anchor.sigma = a.sigma.empty() ? std::vector<double>(t.dim(), 1.0) : parse_list(a.sigma, "--sigma");
  } else if (t.has_sampler()) {
    RngStream s = root.split("anchor");
    const auto m = sample_moments(t.sample(10000, s));
    anchor.mu = m.mean;
    anchor.sigma = m.sd;
  } else {
    throw Invalid("estimate-tails: target '" + t.name() + "' has no sampler; pass --mu and --sigma");
  }
  if (static_cast<int>(anchor.mu.size()) != t.dim() || static_cast<int>(anchor.sigma.size()) != t.dim())
    throw Invalid("estimate-tails: --mu and --sigma need " + std::to_string(t.dim()) + " values");
  for (double s : anchor.sigma)
    if (!(s > 0.0)) throw Invalid("estimate-tails: --sigma entries must be positive");

  nlohmann::json resolved = {{"command", "estimate-tails"},
                             {"seed", cfg.train.seed},
                             {"target", to_json(cfg)["target"]},
                             {"tails", to_json(cfg)["tails"]},
                             {"anchor", {{"mu", anchor.mu}, {"sigma", anchor.sigma}}}};
  const fs::path dir = !a.out.empty() ? fs::path(a.out) : runs_root() / ("tails-" + t.name());
  const std::string hash = prepare_output(dir, resolved.dump(2) + "\n");
  const ComponentAnchor anchors[] = {anchor};
  auto table = build_table(t.as_function(), anchors, cfg.train.tails, 0.0, root.split("tails"), cfg.train.parallel);
  table.d = t.dim();
  write_text_file(dir / "tails.csv", tails_csv(table, hash));
  for (const auto& e : table.entries) {
    ctx.out << (e.sign > 0 ? "+" : "-") << "e" << e.coordinate + 1 << ": ";
    if (e.xi)
      ctx.out << *e.xi;
    else
      ctx.out << "LIGHT";
    ctx.out << (e.boundary ? " (support boundary)" : "") << "\n";
  }
  return kExitOk;
}

struct SampleArgs {
  std::string run, out;
  std::size_t n = 10000;
  std::optional<std::uint64_t> seed;
};

int cmd_sample(const SampleArgs& a, Context& ctx) {
  const RunDir r = open_run(a.run);
  const StictafModel model = model_from_json(read_json_file(r.dir / "model.json"));
  if (a.n < 1) throw Invalid("sample: --n must be positive");
  const fs::path out = a.out.empty() ? r.dir / "samples.csv" : fs::path(a.out);
  const RngStream root(a.seed.value_or(r.cfg.train.seed), 0);
  const auto s = sample(model, a.n, root.split("output-samples"), r.cfg.train.parallel);
  write_text_file(out, samples_csv(s, r.hash));
  ctx.out << "wrote " << a.n << " samples to " << out.string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string run;
  std::size_t n = 1000, seeds = 10;
  std::optional<std::uint64_t> seed;
};

int cmd_evaluate(const EvalArgs& a, Context& ctx) {
  const RunDir r = open_run(a.run);
  const StictafModel model = model_from_json(read_json_file(r.dir / "model.json"));
  if (a.n < 2 || a.seeds < 1) throw Invalid("evaluate: need --n >= 2 and --seeds >= 1");
  auto targets = make_run_targets(r.cfg.target);
  const auto report = diagnose(*targets.exact, model, a.n, a.seeds, a.seed.value_or(r.cfg.train.seed),
                               r.cfg.train.parallel);
  write_json_file(r.dir / "diagnostics.json", diagnostics_to_json(report, r.hash));
  if (report.kl_mean) ctx.out << "forward KL " << *report.kl_mean << " (sd " << *report.kl_sd << ")\n";
  ctx.out << "normalized ESS " << report.ess_mean << " (sd " << report.ess_sd << ")\n";
  return kExitOk;
}

struct McmcArgs {
  std::string config, run, out, init;
  std::size_t iters = 200000;
  std::optional<std::uint64_t> seed;
};

int cmd_mcmc(const McmcArgs& a, Context& ctx) {
  if (a.config.empty() == a.run.empty()) throw Invalid("mcmc: pass exactly one of --config and --run");
  RunConfig cfg;
  fs::path dir;
  std::string hash, text;
  if (!a.run.empty()) {
    const RunDir r = open_run(a.run);
    cfg = r.cfg;
    dir = r.dir;
    hash = r.hash;
  } else {
    cfg = load_run_config(a.config);
    if (a.seed) cfg.train.seed = *a.seed;
    dir = !a.out.empty() ? fs::path(a.out) : runs_root() / (fs::path(a.config).stem().string() + "-mcmc");
    text = resolved_config_text(cfg);
  }
  if (a.iters < 4) throw Invalid("mcmc: --iters must be at least 4");
  auto targets = make_run_targets(cfg.target);
  const TargetDensity& t = *targets.exact;
  const std::uint64_t seed = a.seed.value_or(cfg.train.seed);
  const RngStream root(seed, 0);
  std::vector<double> init;
  if (!a.init.empty()) {
    init = parse_list(a.init, "--init");
  } else if (t.has_sampler()) {
    RngStream s = root.split("mcmc-init");
    init = sample_moments(t.sample(1000, s)).mean;
  } else {
    init.assign(t.dim(), 0.0);
  }
  if (static_cast<int>(init.size()) != t.dim())
    throw Invalid("mcmc: --init needs " + std::to_string(t.dim()) + " values");
  if (!std::isfinite(t.log_density(init))) throw Invalid("mcmc: log-density is not finite at the initial point");
  if (!text.empty()) hash = prepare_output(dir, text);
  RngStream chain_rng = root.split("mcmc");
  McmcChain chain;
  try {
    chain = adaptive_rwm(t.as_function(), init, a.iters, chain_rng);
  } catch (const McmcError& e) {
    ctx.err << "mcmc: numerical abort: " << e.what() << "\n";
    return kExitNumeric;
  }
  const auto names = coordinate_names(t);
  write_text_file(dir / "mcmc_chain.csv", chain_csv(chain, names, hash));
  write_json_file(dir / "mcmc_summary.json", chain_summary_to_json(chain, summarize_chain(chain), names, hash));
  ctx.out << "acceptance rate " << chain.acceptance_rate << "; chain written to " << dir.string() << "\n";
  return kExitOk;
}

struct SimArgs {
  std::string out, params;
  std::size_t days = 366;
  std::uint64_t seed = 0;
};

int cmd_simulate_wind(const SimArgs& a, Context& ctx) {
  WindParams params = reference_wind_params();
  if (!a.params.empty()) {
    if (!fs::exists(a.params)) throw Invalid("params file '" + a.params + "' does not exist");
    const auto j = read_json_file(a.params);
    const auto& values = j.contains("parameters") ? j["parameters"] : j;
    std::vector<double> flat;
    for (const auto& name : WindParams::names()) {
      if (!values.contains(name) || !values[name].is_number())
        throw Invalid("params file: missing numeric entry '" + name + "'");
      flat.push_back(values[name].get<double>());
    }
    params = WindParams::unflatten(flat);
  }
  if (a.days < 30) throw Invalid("simulate-wind: --days must be at least 30");
  if (a.out.empty()) throw Invalid("simulate-wind: --out is required");
  const WindSimulation setup;
  const auto data = simulate_wind(params, a.days, RngStream(a.seed, 0).split("simulate-wind"), setup);
  data.validate();

  // a ready-to-train config for the simulated data with the generating thresholds
  RunConfig cfg;
  cfg.train.seed = a.seed;
  cfg.target.name = "wind";
  cfg.target.csv = "wind.csv";
  cfg.target.thresholds.fallback = {ThresholdRule::Kind::quantile, 0.9};
  for (int j = 0; j < kStations; ++j)
    for (int s = 0; s < kSeasons; ++s)
      cfg.target.thresholds.per_cell[{j, s}] = {ThresholdRule::Kind::absolute, setup.threshold(j, s)};
  cfg.train.K = 5;
  cfg.train.learning_rate = 1e-3;
  cfg.train.samples_per_component = 8;
  cfg.train.init_radius = 1.0;

  const fs::path dir(a.out);
  const std::string hash = prepare_output(dir, resolved_config_text(cfg));
  write_wind_csv((dir / "wind.csv").string(), data);
  nlohmann::json truth = {{"config_hash", hash}, {"days_per_cell", a.days}, {"seed", a.seed}};
  const auto flat = params.flatten();
  const auto names = WindParams::names();
  for (std::size_t i = 0; i < names.size(); ++i) truth["parameters"][names[i]] = flat[i];
  for (int j = 0; j < kStations; ++j) {
    truth["alpha"][std::to_string(j + 1)] = params.alpha(j);
    for (int s = 0; s < kSeasons; ++s) {
      const auto key = station_season_key(j, s);
      truth["sigma"][key] = params.sigma(j, s);
      truth["eta"][key] = params.eta(j, s);
      truth["rate"][key] = data.cell(j, s).rate;
    }
  }
  write_json_file(dir / "true_params.json", truth);
  ctx.out << "simulated " << a.days << " days per cell into " << (dir / "wind.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

fs::path runs_root() {
  const char* env = std::getenv("STICTAF_RUNS_ROOT");
  return (env && *env) ? fs::path(env) : fs::path("runs");
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stick-breaking mixture flows with tail transforms"};
  app.name("stictaf");
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Run all three training stages");
  train_cmd->add_option("--config", train_args.config, "TOML or JSON run config")->required();
  train_cmd->add_option("--seed", train_args.seed, "Override the config seed");
  train_cmd->add_option("--out", train_args.out, "Run directory");

  TailArgs tail_args;
  auto* tail_cmd = app.add_subcommand("estimate-tails", "Directional tail indices around one anchor");
  tail_cmd->add_option("--config", tail_args.config, "Run config supplying target and tail settings");
  tail_cmd->add_option("--target", tail_args.target, "nig, complex_mixture, std_normal, t2_t3 or wind");
  tail_cmd->add_option("--dim", tail_args.dim, "Dimension for std_normal");
  tail_cmd->add_option("--csv", tail_args.csv, "Wind CSV for the wind target");
  tail_cmd->add_option("--n", tail_args.n, "Proposal draws");
  tail_cmd->add_option("--j", tail_args.j, "Order statistics used");
  tail_cmd->add_option("--nu", tail_args.nu, "Student-t proposal degrees of freedom");
  tail_cmd->add_option("--mu", tail_args.mu, "Anchor location, comma separated");
  tail_cmd->add_option("--sigma", tail_args.sigma, "Anchor scale, comma separated");
  tail_cmd->add_option("--seed", tail_args.seed, "Seed");
  tail_cmd->add_option("--out", tail_args.out, "Output directory");

  SampleArgs sample_args;
  auto* sample_cmd = app.add_subcommand("sample", "Draw from a trained model");
  sample_cmd->add_option("--run", sample_args.run, "Run directory")->required();
  sample_cmd->add_option("--n", sample_args.n, "Number of draws");
  sample_cmd->add_option("--seed", sample_args.seed, "Seed (default: the run's seed)");
  sample_cmd->add_option("--out", sample_args.out, "Output CSV (default: <run>/samples.csv)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Forward KL, normalized ESS and percentiles");
  eval_cmd->add_option("--run", eval_args.run, "Run directory")->required();
  eval_cmd->add_option("--n", eval_args.n, "Draws per replicate");
  eval_cmd->add_option("--seeds", eval_args.seeds, "Replicates");
  eval_cmd->add_option("--seed", eval_args.seed, "Seed (default: the run's seed)");

  McmcArgs mcmc_args;
  auto* mcmc_cmd = app.add_subcommand("mcmc", "Adaptive random-walk Metropolis reference chain");
  mcmc_cmd->add_option("--config", mcmc_args.config, "Run config");
  mcmc_cmd->add_option("--run", mcmc_args.run, "Existing run directory");
  mcmc_cmd->add_option("--iters", mcmc_args.iters, "Chain length");
  mcmc_cmd->add_option("--init", mcmc_args.init, "Initial point, comma separated");
  mcmc_cmd->add_option("--seed", mcmc_args.seed, "Seed");
  mcmc_cmd->add_option("--out", mcmc_args.out, "Output directory (with --config)");

  SimArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate-wind", "Synthetic wind data from known parameters");
  sim_cmd->add_option("--out", sim_args.out, "Output directory")->required();
  sim_cmd->add_option("--days", sim_args.days, "Days per station-season cell");
  sim_cmd->add_option("--seed", sim_args.seed, "Seed");
  sim_cmd->add_option("--params", sim_args.params, "JSON with the 20 unconstrained parameters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "stictaf: " << e.what() << "\n";
    return kExitInvalid;
  }

  Context ctx{out, err};
  try {
    if (*train_cmd) return cmd_train(train_args, ctx);
    if (*tail_cmd) return cmd_estimate_tails(tail_args, ctx);
    if (*sample_cmd) return cmd_sample(sample_args, ctx);
    if (*eval_cmd) return cmd_evaluate(eval_args, ctx);
    if (*mcmc_cmd) return cmd_mcmc(mcmc_args, ctx);
    if (*sim_cmd) return cmd_simulate_wind(sim_args, ctx);
  } catch (const Invalid& e) {
    err << "stictaf: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ConfigError& e) {
    err << "stictaf: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const WindDataError& e) {
    err << "stictaf: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ArtifactError& e) {
    err << "stictaf: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::invalid_argument& e) {
    err << "stictaf: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "stictaf: numerical abort: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitInvalid;
}

}  // namespace stictaf
