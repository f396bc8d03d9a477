#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "spconf/cli.hpp"
#include "spconf/errors.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Flags are parsed into optionals so that only the ones given override the file.
struct Flags {
  std::optional<std::string> data, adj, models, out, in, map, x2, marb;
  std::optional<std::uint64_t> seed;
  std::optional<int> chains, iters, burn, thin, workers, scenario, study, K;
  std::optional<double> cor;
  std::string config;
};

std::vector<std::string> split_models(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  return out;
}

void apply(const Flags& f, spconf::RunConfig& c) {
  if (f.data) c.data_path = *f.data;
  if (f.adj) c.adj_path = *f.adj;
  if (f.models) c.models = split_models(*f.models);
  if (f.out) c.out_dir = c.out_csv = *f.out;
  if (f.in) c.in_dir = *f.in;
  if (f.map) c.map = *f.map;
  if (f.seed) c.mcmc.seed = *f.seed;
  if (f.chains) c.mcmc.chains = *f.chains;
  if (f.iters) c.mcmc.iterations = *f.iters;
  if (f.burn) c.mcmc.burn_in = *f.burn;
  if (f.thin) c.mcmc.thin = *f.thin;
  if (f.workers) c.workers = *f.workers;
  if (f.scenario) c.scenario = *f.scenario;
  if (f.study) c.study = *f.study;
  if (f.K) c.K = *f.K;
  if (f.cor) c.correlation = *f.cor;
  if (f.x2) c.x2_mechanism = *f.x2 == "smooth" ? spconf::X2Mechanism::Smooth : spconf::X2Mechanism::Mixing;
  if (f.marb) c.marb = *f.marb == "mean_of_abs" ? spconf::MarbVariant::MeanOfAbs : spconf::MarbVariant::AbsOfMean;
}

void add_mcmc(CLI::App* app, Flags& f) {
  app->add_option("--seed", f.seed, "Random seed");
  app->add_option("--chains", f.chains, "MCMC chains")->check(CLI::PositiveNumber);
  app->add_option("--iters", f.iters, "MCMC iterations per chain")->check(CLI::PositiveNumber);
  app->add_option("--burn-in", f.burn, "Burn-in iterations")->check(CLI::NonNegativeNumber);
  app->add_option("--thin", f.thin, "Thinning interval")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixed-effect estimation under spatial confounding"};
  app.set_version_flag("--version", std::string(spconf::version()));
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config, "INI config file (flags override it)")->check(CLI::ExistingFile);
  app.add_option("--workers", f.workers, "Worker threads (default: SPCONF_WORKERS or 1)")->check(CLI::PositiveNumber);

  auto* fit = app.add_subcommand("fit", "Fit models to an areal dataset");
  fit->add_option("--data", f.data, "Area CSV: id,observed,expected,covariates[,lon,lat]");
  fit->add_option("--adj", f.adj, "Adjacency file (GAL or edge list)");
  fit->add_option("--models", f.models, "Comma-separated model names");
  fit->add_option("--out", f.out, "Output directory");
  add_mcmc(fit, f);

  auto* sim = app.add_subcommand("simulate", "Run one simulation scenario");
  sim->add_option("--scenario", f.scenario, "Scenario")->check(CLI::IsMember({1, 2, 3, 4}));
  sim->add_option("--cor", f.cor, "Target correlation between x1 and x2");
  sim->add_option("--study", f.study, "1: x2 hidden, 2: x2 fitted with zero effect")->check(CLI::IsMember({1, 2}));
  sim->add_option("--K", f.K, "Replicates")->check(CLI::PositiveNumber);
  sim->add_option("--models", f.models, "Comma-separated model names");
  sim->add_option("--out", f.out, "Output directory");
  sim->add_option("--map", f.map, "Study map, lattice:RxC");
  sim->add_option("--data", f.data, "Area CSV for a user map (first covariate is x1)");
  sim->add_option("--adj", f.adj, "Adjacency for a user map");
  sim->add_option("--x2-mechanism", f.x2, "mixing or smooth")->check(CLI::IsMember({"mixing", "smooth"}));
  sim->add_option("--marb", f.marb, "abs_of_mean or mean_of_abs")->check(CLI::IsMember({"abs_of_mean", "mean_of_abs"}));
  add_mcmc(sim, f);

  auto* sum = app.add_subcommand("summarize", "Re-aggregate replicate files into a summary CSV");
  sum->add_option("--in", f.in, "Directory written by simulate, or a parent of several")->required();
  sum->add_option("--out", f.out, "Summary CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  spconf::RunConfig cfg;
  cfg.workers = spconf::default_workers();
  try {
    if (!f.config.empty()) spconf::apply_config_file(cfg, f.config);
    apply(f, cfg);
    if (cfg.workers < 1) throw spconf::ValidationError("workers must be positive");
    if (!sum->parsed()) cfg.model_specs();
  } catch (const spconf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    spconf::CommandResult res;
    if (fit->parsed()) {
      res = spconf::cmd_fit(cfg);
    } else if (sim->parsed()) {
      res = spconf::cmd_simulate(cfg);
    } else {
      res = spconf::cmd_summarize(cfg);
    }
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& file : res.files) std::cout << file << "\n";
    return kOk;
  } catch (const spconf::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const spconf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  }
}
