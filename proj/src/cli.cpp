#include "spconf/cli.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"
#include "spconf/errors.hpp"

#ifndef SPCONF_VERSION
#define SPCONF_VERSION "0.0.0"
#endif

namespace spconf {

namespace fs = std::filesystem;

const char* version() { return SPCONF_VERSION; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Comma separated, with optional double quotes ("" escapes a quote).
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = b + s.size();
  if (*b == '+') ++b;
  const auto [p, ec] = std::from_chars(b, e, v);
  return ec == std::errc() && p == e && std::isfinite(v);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;

  int col(const std::string& name, const std::string& file) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    throw ParseError(file + ": missing column '" + name + "'", 1);
  }
};

CsvTable read_csv(std::istream& in, const std::string& file) {
  CsvTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ParseError(file + ": expected " + std::to_string(t.header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       line_no);
    }
    t.rows.push_back(std::move(cells));
    t.lines.push_back(line_no);
  }
  if (t.header.empty()) throw ParseError(file + ": empty file", 0);
  return t;
}

CsvTable read_csv_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open '" + p.string() + "'");
  return read_csv(in, p.filename().string());
}

double cell_number(const CsvTable& t, std::size_t r, int c, const std::string& file) {
  double v;
  const std::string& s = t.rows[r][static_cast<std::size_t>(c)];
  if (!parse_number(s, v)) {
    throw ParseError(file + ": column '" + t.header[static_cast<std::size_t>(c)] + "': non-numeric value '" + s + "'",
                     t.lines[r]);
  }
  return v;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  return out;
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw ValidationError("no output directory given");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return out;
}

nlohmann::json manifest_base(const RunConfig& cfg, const std::string& command) {
  nlohmann::json m;
  m["command"] = command;
  m["version"] = version();
  m["seed"] = cfg.mcmc.seed;
  m["config_hash"] = cfg.hash();
  nlohmann::json c = nlohmann::json::object();
  std::istringstream in(cfg.canonical());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    c[line.substr(0, eq)] = line.substr(eq + 1);
  }
  m["config"] = c;
  return m;
}

void finish_manifest(nlohmann::json& m, const RunConfig& cfg, const std::string& dir, CommandResult& res) {
  nlohmann::json outs = nlohmann::json::array();
  for (const auto& f : res.files) outs.push_back({{"file", f}, {"seed", cfg.mcmc.seed}, {"config_hash", cfg.hash()}});
  m["outputs"] = outs;
  m["warnings"] = res.warnings;
  auto out = open_out(fs::path(dir) / "manifest.json");
  out << m.dump(2) << "\n";
  res.files.push_back("manifest.json");
}

const char* marb_name(MarbVariant v) { return v == MarbVariant::AbsOfMean ? "abs_of_mean" : "mean_of_abs"; }

MarbVariant parse_marb(const std::string& s) {
  const std::string l = lower(s);
  if (l == "abs_of_mean") return MarbVariant::AbsOfMean;
  if (l == "mean_of_abs") return MarbVariant::MeanOfAbs;
  throw ValidationError("marb must be abs_of_mean or mean_of_abs, got '" + s + "'");
}

X2Mechanism parse_x2(const std::string& s) {
  const std::string l = lower(s);
  if (l == "mixing") return X2Mechanism::Mixing;
  if (l == "smooth") return X2Mechanism::Smooth;
  throw ValidationError("x2_mechanism must be mixing or smooth, got '" + s + "'");
}

}  // namespace

// ---- area tables ----

AreaTable read_area_table(std::istream& in) {
  const CsvTable t = read_csv(in, "area table");
  const auto& h = t.header;
  if (h.size() < 3 || lower(h[0]) != "id" || lower(h[1]) != "observed" || lower(h[2]) != "expected") {
    throw ParseError("area table header must start with id,observed,expected", 1);
  }
  std::size_t n_cov = h.size() - 3;
  bool coords = false;
  if (h.size() >= 5 && lower(h[h.size() - 2]) == "lon" && lower(h[h.size() - 1]) == "lat") {
    coords = true;
    n_cov -= 2;
  }
  const std::size_t n = t.rows.size();
  if (n == 0) throw ParseError("area table has no rows", 0);
  AreaTable a;
  a.observed.resize(static_cast<Eigen::Index>(n));
  a.expected.resize(static_cast<Eigen::Index>(n));
  a.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_cov));
  a.coords.resize(static_cast<Eigen::Index>(n), coords ? 2 : 0);
  for (std::size_t j = 0; j < n_cov; ++j) a.covariate_names.push_back(h[3 + j]);
  std::set<std::string> seen;
  for (std::size_t r = 0; r < n; ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    const std::string& id = t.rows[r][0];
    if (id.empty()) throw ParseError("column 'id': empty id", t.lines[r]);
    if (!seen.insert(id).second) throw ParseError("column 'id': duplicate id '" + id + "'", t.lines[r]);
    a.ids.push_back(id);
    a.observed(i) = cell_number(t, r, 1, "area table");
    a.expected(i) = cell_number(t, r, 2, "area table");
    for (std::size_t j = 0; j < n_cov; ++j)
      a.covariates(i, static_cast<Eigen::Index>(j)) = cell_number(t, r, static_cast<int>(3 + j), "area table");
    if (coords) {
      a.coords(i, 0) = cell_number(t, r, static_cast<int>(h.size() - 2), "area table");
      a.coords(i, 1) = cell_number(t, r, static_cast<int>(h.size() - 1), "area table");
    }
  }
  return a;
}

AreaTable read_area_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open area file '" + path + "'");
  try {
    return read_area_table(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

void write_area_table(std::ostream& out, const AreaTable& t) {
  out << "id,observed,expected";
  for (const auto& nm : t.covariate_names) out << "," << csv_quote(nm);
  if (t.coords.cols() == 2) out << ",lon,lat";
  out << "\n";
  for (Eigen::Index i = 0; i < t.observed.size(); ++i) {
    out << csv_quote(t.ids[static_cast<std::size_t>(i)]) << "," << format_double(t.observed(i)) << ","
        << format_double(t.expected(i));
    for (Eigen::Index j = 0; j < t.covariates.cols(); ++j) out << "," << format_double(t.covariates(i, j));
    if (t.coords.cols() == 2) out << "," << format_double(t.coords(i, 0)) << "," << format_double(t.coords(i, 1));
    out << "\n";
  }
}

Dataset to_dataset(const AreaTable& t) {
  for (Eigen::Index i = 0; i < t.observed.size(); ++i) {
    const std::string& id = t.ids[static_cast<std::size_t>(i)];
    if (!(t.expected(i) > 0.0)) {
      throw ValidationError("row " + std::to_string(i + 1) + " (id " + id + "), column 'expected': expected count must be positive");
    }
    const double y = t.observed(i);
    if (y < 0.0 || y != std::floor(y)) {
      throw ValidationError("row " + std::to_string(i + 1) + " (id " + id +
                            "), column 'observed': counts must be nonnegative integers");
    }
  }
  return make_dataset(t.observed, t.expected, t.covariates, t.covariate_names, t.coords, t.ids);
}

IngestedData ingest_dataset(const std::string& csv_path, const std::string& adj_path) {
  IngestedData in;
  in.table = read_area_table(csv_path);
  in.data = to_dataset(in.table);
  in.graph = load_graph(adj_path);
  if (in.graph.size() != in.data.size()) {
    throw ValidationError("'" + adj_path + "' has " + std::to_string(in.graph.size()) + " areas but '" + csv_path +
                          "' has " + std::to_string(in.data.size()) + " rows");
  }
  return in;
}

StudyMap study_map_from_data(const IngestedData& in, const std::string& name) {
  if (in.data.n_covariates() < 1) throw ValidationError("simulation on user data needs at least one covariate (x1)");
  StudyMap m;
  m.name = name;
  m.map = MapStructure::build(in.graph);
  m.centroids = in.data.centroids;
  m.x1 = in.data.X.col(0);
  m.e = in.data.e;
  return m;
}

StudyMap study_map_from_spec(const std::string& spec) {
  const std::string prefix = "lattice:";
  int rows = 0, cols = 0;
  if (spec.rfind(prefix, 0) == 0) {
    const std::string body = spec.substr(prefix.size());
    const auto x = body.find_first_of("xX");
    auto to_int = [](const std::string& s, int& v) {
      const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      return ec == std::errc() && p == s.data() + s.size();
    };
    if (x == std::string::npos || !to_int(body.substr(0, x), rows) || !to_int(body.substr(x + 1), cols)) rows = 0;
  }
  if (rows < 1 || cols < 1 || rows * cols < 3) throw ValidationError("map must look like lattice:RxC, got '" + spec + "'");
  StudyMap m = desk_map(20240101, rows, cols);
  m.name = spec;
  return m;
}

// ---- configuration ----

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::string RunConfig::canonical() const {
  // output locations and the worker count do not change results
  std::map<std::string, std::string> kv = {
      {"data.csv", data_path},
      {"data.adj", adj_path},
      {"data.map", map},
      {"models.list", join(models, ",")},
      {"mcmc.chains", std::to_string(mcmc.chains)},
      {"mcmc.iterations", std::to_string(mcmc.iterations)},
      {"mcmc.burn_in", std::to_string(mcmc.burn_in)},
      {"mcmc.thin", std::to_string(mcmc.thin)},
      {"mcmc.seed", std::to_string(mcmc.seed)},
      {"mcmc.adaptation_window", std::to_string(mcmc.adaptation_window)},
      {"prior.beta_precision", format_double(prior.beta_precision)},
      {"prior.alpha_precision", format_double(prior.alpha_precision)},
      {"prior.sigma_upper", format_double(prior.sigma_upper)},
      {"simulate.scenario", std::to_string(scenario)},
      {"simulate.cor", format_double(correlation)},
      {"simulate.study", std::to_string(study)},
      {"simulate.K", std::to_string(K)},
      {"simulate.beta1", format_double(beta1)},
      {"simulate.beta2", format_double(beta2)},
      {"simulate.sigma2", format_double(sigma2)},
      {"simulate.x2_mechanism", x2_mechanism == X2Mechanism::Mixing ? "mixing" : "smooth"},
      {"simulate.calibrate_field", calibrate_field ? "true" : "false"},
      {"metrics.marb", marb_name(marb)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::hash() const { return fnv1a_hex(canonical()); }

std::vector<ModelSpec> RunConfig::model_specs() const {
  if (models.empty()) throw ValidationError("no models given");
  std::vector<ModelSpec> out;
  std::set<std::string> seen;
  for (const auto& m : models) {
    if (!seen.insert(m).second) throw ValidationError("model '" + m + "' listed twice");
    out.push_back(ModelSpec::from_name(m));
  }
  return out;
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  if (!fs::exists(path)) throw IoError("config file '" + path + "' does not exist");
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(path, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError(path + ": " + e.message(), static_cast<int>(e.line()));
  }
  auto get_int = [&](const std::string& key, const std::string& v) {
    double d;
    if (!parse_number(v, d) || d != std::floor(d)) throw ValidationError(path + ": " + key + " must be an integer");
    return static_cast<long long>(d);
  };
  auto get_double = [&](const std::string& key, const std::string& v) {
    double d;
    if (!parse_number(v, d)) throw ValidationError(path + ": " + key + " must be a number");
    return d;
  };
  auto get_bool = [&](const std::string& key, const std::string& v) {
    const std::string l = lower(v);
    if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
    if (l == "false" || l == "0" || l == "no" || l == "off") return false;
    throw ValidationError(path + ": " + key + " must be true or false");
  };
  for (const auto& [section, body] : pt) {
    for (const auto& [k, node] : body) {
      const std::string key = section + "." + k;
      const std::string v = trim(node.get_value<std::string>());
      if (key == "data.csv") cfg.data_path = v;
      else if (key == "data.adj") cfg.adj_path = v;
      else if (key == "data.map") cfg.map = v;
      else if (key == "models.list") cfg.models = split_list(v);
      else if (key == "mcmc.chains") cfg.mcmc.chains = static_cast<int>(get_int(key, v));
      else if (key == "mcmc.iterations") cfg.mcmc.iterations = static_cast<int>(get_int(key, v));
      else if (key == "mcmc.burn_in") cfg.mcmc.burn_in = static_cast<int>(get_int(key, v));
      else if (key == "mcmc.thin") cfg.mcmc.thin = static_cast<int>(get_int(key, v));
      else if (key == "mcmc.seed") cfg.mcmc.seed = static_cast<std::uint64_t>(get_int(key, v));
      else if (key == "mcmc.adaptation_window") cfg.mcmc.adaptation_window = static_cast<int>(get_int(key, v));
      else if (key == "mcmc.workers") cfg.workers = static_cast<int>(get_int(key, v));
      else if (key == "prior.beta_precision") cfg.prior.beta_precision = get_double(key, v);
      else if (key == "prior.alpha_precision") cfg.prior.alpha_precision = get_double(key, v);
      else if (key == "prior.sigma_upper") cfg.prior.sigma_upper = get_double(key, v);
      else if (key == "simulate.scenario") cfg.scenario = static_cast<int>(get_int(key, v));
      else if (key == "simulate.cor") cfg.correlation = get_double(key, v);
      else if (key == "simulate.study") cfg.study = static_cast<int>(get_int(key, v));
      else if (key == "simulate.K") cfg.K = static_cast<int>(get_int(key, v));
      else if (key == "simulate.beta1") cfg.beta1 = get_double(key, v);
      else if (key == "simulate.beta2") cfg.beta2 = get_double(key, v);
      else if (key == "simulate.sigma2") cfg.sigma2 = get_double(key, v);
      else if (key == "simulate.x2_mechanism") cfg.x2_mechanism = parse_x2(v);
      else if (key == "simulate.calibrate_field") cfg.calibrate_field = get_bool(key, v);
      else if (key == "metrics.marb") cfg.marb = parse_marb(v);
      else if (key == "output.dir") cfg.out_dir = v;
      else throw ValidationError(path + ": unknown setting '" + key + "'");
    }
  }
}

int default_workers() {
  const char* v = std::getenv("SPCONF_WORKERS");
  if (!v) return 1;
  double d;
  if (!parse_number(v, d) || d < 1 || d != std::floor(d)) return 1;
  return static_cast<int>(d);
}

// ---- fit ----

CommandResult cmd_fit(const RunConfig& cfg) {
  if (cfg.data_path.empty()) throw ValidationError("fit needs --data");
  if (cfg.adj_path.empty()) throw ValidationError("fit needs --adj");
  const auto specs = cfg.model_specs();
  cfg.mcmc.validate();
  cfg.prior.validate();
  const IngestedData in = ingest_dataset(cfg.data_path, cfg.adj_path);
  for (const auto& s : specs) {
    if (s.needs_centroids() && !in.data.has_centroids())
      throw ValidationError("model " + s.name + " needs lon/lat columns in '" + cfg.data_path + "'");
  }
  ensure_dir(cfg.out_dir);
  const MapStructure map = MapStructure::build(in.graph);
  McmcConfig mc = cfg.mcmc;
  mc.workers = cfg.workers;

  CommandResult res;
  std::vector<PosteriorSummary> fits;
  std::optional<PosteriorSummary> spatial;
  for (const auto& s : specs) {
    if (s.family == Family::SpatialIcar || s.needs_spatial_fit()) {
      if (!spatial) spatial = fit_spatial(in.data, map, cfg.prior, mc);
      fits.push_back(s.family == Family::SpatialIcar ? *spatial : fit_model(in.data, map, s, cfg.prior, mc, &*spatial));
    } else {
      fits.push_back(fit_model(in.data, map, s, cfg.prior, mc));
    }
    fits.back().model = s.name;
    if (!fits.back().warning.empty()) res.warnings.push_back(s.name + ": " + fits.back().warning);
  }

  {
    auto out = open_out(fs::path(cfg.out_dir) / "summary.csv");
    out << "model,parameter,mean,sd,q2.5,q97.5,rhat,ess,waic,warning\n";
    for (const auto& f : fits) {
      for (const auto& p : f.parameters) {
        out << f.model << "," << p.name << "," << format_double(p.mean) << "," << format_double(p.sd) << ","
            << format_double(p.q025) << "," << format_double(p.q975) << "," << format_double(p.rhat) << ","
            << format_double(p.ess) << "," << format_double(f.waic) << "," << csv_quote(f.warning) << "\n";
      }
    }
    res.files.push_back("summary.csv");
  }
  for (const auto& f : fits) {
    const std::string file = "samples_" + safe_name(f.model) + ".csv";
    auto out = open_out(fs::path(cfg.out_dir) / file);
    out << "chain,draw";
    for (const auto& p : f.parameters) out << "," << p.name;
    out << "\n";
    for (Eigen::Index r = 0; r < f.samples.rows(); ++r) {
      const int per = std::max(1, f.draws_per_chain);
      out << r / per + 1 << "," << r % per + 1;
      for (Eigen::Index c = 0; c < f.samples.cols(); ++c) out << "," << format_double(f.samples(r, c));
      out << "\n";
    }
    res.files.push_back(file);
  }

  nlohmann::json m = manifest_base(cfg, "fit");
  nlohmann::json covs = nlohmann::json::array();
  for (int j = 0; j < in.data.n_covariates(); ++j) {
    const auto u = static_cast<std::size_t>(j);
    covs.push_back({{"name", in.data.covariate_names[u]},
                    {"mean", in.data.covariate_means[u]},
                    {"sd", in.data.covariate_sds[u]}});
  }
  m["covariates"] = covs;
  m["n_areas"] = in.data.size();
  nlohmann::json models = nlohmann::json::array();
  for (const auto& f : fits) {
    nlohmann::json fm = {{"model", f.model}, {"converged", f.converged}, {"waic", f.waic}};
    for (const auto& [k, v] : f.metadata) fm["metadata"][k] = v;
    models.push_back(fm);
  }
  m["models"] = models;
  finish_manifest(m, cfg, cfg.out_dir, res);
  return res;
}

// ---- simulate ----

namespace {

std::vector<std::string> param_names(const std::vector<ReplicateRecord>& records) {
  std::set<std::string> names;
  for (const auto& r : records)
    for (const auto& [k, v] : r.params) names.insert(k);
  return {names.begin(), names.end()};
}

}  // namespace

void write_replicates_csv(std::ostream& out, const ScenarioSpec& spec, const std::vector<ReplicateRecord>& records) {
  const auto names = param_names(records);
  out << "scenario,subscenario,model,replicate,converged,waic";
  for (const auto& n : names) out << "," << n << ".mean," << n << ".sd," << n << ".q025," << n << ".q975";
  out << "\n";
  for (const auto& r : records) {
    out << spec.scenario_label() << "," << spec.subscenario_label() << "," << r.model << "," << r.replicate << ","
        << (r.converged ? 1 : 0) << "," << format_double(r.waic);
    for (const auto& n : names) {
      const auto it = r.params.find(n);
      if (it == r.params.end()) {
        out << ",,,,";
      } else {
        const ParamEstimate& p = it->second;
        out << "," << format_double(p.mean) << "," << format_double(p.sd) << "," << format_double(p.q025) << ","
            << format_double(p.q975);
      }
    }
    out << "\n";
  }
}

void write_risks_csv(std::ostream& out, const std::vector<ReplicateRecord>& records) {
  out << "model,replicate,area,risk\n";
  for (const auto& r : records)
    for (Eigen::Index i = 0; i < r.risk.size(); ++i)
      out << r.model << "," << r.replicate << "," << i + 1 << "," << format_double(r.risk(i)) << "\n";
}

void write_summary_wide_csv(std::ostream& out, const StudySummary& s) {
  // the per-cell "all" rows (failure counts) become columns of every model row
  std::vector<std::string> metrics;
  std::set<std::string> seen;
  for (const auto& r : s.rows)
    if (seen.insert(r.metric).second) metrics.push_back(r.metric);
  out << "scenario,subscenario,model";
  for (const auto& m : metrics) out << "," << m;
  out << "\n";
  std::vector<std::tuple<std::string, std::string, std::string>> keys;
  for (const auto& r : s.rows) {
    const auto k = std::make_tuple(r.scenario, r.subscenario, r.model);
    if (r.model != "all" && std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  for (const auto& [sc, sub, model] : keys) {
    out << sc << "," << sub << "," << model;
    for (const auto& m : metrics) {
      out << ",";
      if (s.has(sc, sub, model, m)) {
        out << format_double(s.value(sc, sub, model, m));
      } else if (s.has(sc, sub, "all", m)) {
        out << format_double(s.value(sc, sub, "all", m));
      }
    }
    out << "\n";
  }
}

CommandResult cmd_simulate(const RunConfig& cfg) {
  const auto specs = cfg.model_specs();
  cfg.mcmc.validate();
  cfg.prior.validate();
  ScenarioSpec spec;
  spec.scenario = cfg.scenario;
  spec.correlation_target = cfg.correlation;
  spec.study = cfg.study;
  spec.K = cfg.K;
  spec.beta1 = cfg.beta1;
  spec.beta2 = cfg.study == 2 ? 0.0 : cfg.beta2;
  spec.sigma2 = cfg.sigma2;
  spec.seed = cfg.mcmc.seed;
  spec.x2_mechanism = cfg.x2_mechanism;
  if (cfg.calibrate_field) spec.field_correlation_target = reference_field_correlation(cfg.scenario);
  spec.validate();

  StudyMap map;
  if (!cfg.data_path.empty() || !cfg.adj_path.empty()) {
    if (cfg.data_path.empty() || cfg.adj_path.empty()) throw ValidationError("--data and --adj go together");
    map = study_map_from_data(ingest_dataset(cfg.data_path, cfg.adj_path));
  } else {
    map = study_map_from_spec(cfg.map);
  }
  for (const auto& s : specs) {
    if (s.needs_centroids() && map.centroids.cols() != 2)
      throw ValidationError("model " + s.name + " needs area coordinates, which the map does not have");
  }
  ensure_dir(cfg.out_dir);

  const StudyResult sr = run_study(spec, map, specs, cfg.prior, cfg.mcmc, cfg.workers, cfg.marb);
  CommandResult res;
  const fs::path dir(cfg.out_dir);
  {
    auto out = open_out(dir / "summary.csv");
    write_summary_csv(out, sr.summary);
    res.files.push_back("summary.csv");
  }
  {
    auto out = open_out(dir / "summary_wide.csv");
    write_summary_wide_csv(out, sr.summary);
    res.files.push_back("summary_wide.csv");
  }
  {
    auto out = open_out(dir / "replicates.csv");
    write_replicates_csv(out, spec, sr.records);
    res.files.push_back("replicates.csv");
  }
  {
    auto out = open_out(dir / "risks.csv");
    write_risks_csv(out, sr.records);
    res.files.push_back("risks.csv");
  }
  {
    auto out = open_out(dir / "truth.csv");
    out << "area,x1,x2,S,log_r,r_true,e\n";
    const ScenarioData& d = sr.data;
    for (Eigen::Index i = 0; i < d.x1.size(); ++i) {
      out << i + 1 << "," << format_double(d.x1(i)) << "," << format_double(d.x2(i)) << "," << format_double(d.S(i))
          << "," << format_double(d.log_r(i)) << "," << format_double(d.r_true(i)) << "," << format_double(map.e(i))
          << "\n";
    }
    res.files.push_back("truth.csv");
  }
  {
    auto out = open_out(dir / "scenario.csv");
    out << "key,value\n";
    out << "scenario," << spec.scenario_label() << "\n";
    out << "subscenario," << spec.subscenario_label() << "\n";
    out << "study," << spec.study << "\n";
    out << "K," << spec.K << "\n";
    out << "beta1," << format_double(spec.beta1) << "\n";
    out << "beta2," << format_double(spec.beta2) << "\n";
    out << "sigma2," << format_double(spec.sigma2) << "\n";
    out << "correlation_target," << format_double(spec.correlation_target) << "\n";
    out << "achieved_correlation," << format_double(sr.data.achieved_correlation) << "\n";
    out << "cor_x1_S," << format_double(sr.data.cor_x1_S) << "\n";
    out << "n_failed," << sr.failures.size() << "\n";
    out << "marb," << marb_name(cfg.marb) << "\n";
    out << "map," << csv_quote(map.name) << "\n";
    out << "seed," << spec.seed << "\n";
    out << "config_hash," << cfg.hash() << "\n";
    res.files.push_back("scenario.csv");
  }
  {
    auto out = open_out(dir / "failures.csv");
    out << "model,replicate,message\n";
    for (const auto& f : sr.failures) out << f.model << "," << f.replicate << "," << csv_quote(f.message) << "\n";
    res.files.push_back("failures.csv");
  }
  if (!sr.failures.empty()) res.warnings.push_back(std::to_string(sr.failures.size()) + " replicate fits failed");
  int nonconv = 0;
  for (const auto& r : sr.records) nonconv += r.converged ? 0 : 1;
  if (nonconv > 0) res.warnings.push_back(std::to_string(nonconv) + " replicate fits did not meet the convergence gate");

  nlohmann::json m = manifest_base(cfg, "simulate");
  m["achieved_correlation"] = sr.data.achieved_correlation;
  m["correlation_target"] = spec.correlation_target;
  m["cor_x1_S"] = sr.data.cor_x1_S;
  m["map"] = map.name;
  finish_manifest(m, cfg, cfg.out_dir, res);
  return res;
}

// ---- summarize ----

namespace {

StudySummary summarize_dir(const fs::path& dir) {
  std::map<std::string, std::string> info;
  {
    const CsvTable t = read_csv_file(dir / "scenario.csv");
    for (const auto& r : t.rows) info[r[0]] = r[1];
  }
  auto need = [&](const std::string& k) {
    const auto it = info.find(k);
    if (it == info.end()) throw ParseError((dir / "scenario.csv").string() + ": missing key '" + k + "'", 0);
    return it->second;
  };
  double beta1, n_failed_d, study_d;
  if (!parse_number(need("beta1"), beta1) || !parse_number(need("n_failed"), n_failed_d) ||
      !parse_number(need("study"), study_d)) {
    throw ParseError((dir / "scenario.csv").string() + ": bad numeric value", 0);
  }
  const MarbVariant marb = parse_marb(need("marb"));

  Eigen::VectorXd r_true;
  {
    const std::string file = (dir / "truth.csv").string();
    const CsvTable t = read_csv_file(dir / "truth.csv");
    const int c = t.col("r_true", file);
    r_true.resize(static_cast<Eigen::Index>(t.rows.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i) r_true(static_cast<Eigen::Index>(i)) = cell_number(t, i, c, file);
  }

  std::vector<ReplicateRecord> records;
  std::map<std::pair<std::string, int>, std::size_t> index;
  {
    const std::string file = (dir / "replicates.csv").string();
    const CsvTable t = read_csv_file(dir / "replicates.csv");
    const int cm = t.col("model", file), cr = t.col("replicate", file), cc = t.col("converged", file),
              cw = t.col("waic", file);
    std::vector<std::string> names;
    for (std::size_t j = 6; j + 3 < t.header.size(); j += 4) {
      const std::string& h = t.header[j];
      const auto dot = h.rfind(".mean");
      if (dot == std::string::npos || dot + 5 != h.size()) throw ParseError(file + ": unexpected column '" + h + "'", 1);
      names.push_back(h.substr(0, dot));
    }
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      ReplicateRecord rec;
      rec.model = t.rows[r][static_cast<std::size_t>(cm)];
      rec.replicate = static_cast<int>(cell_number(t, r, cr, file));
      rec.converged = cell_number(t, r, cc, file) != 0.0;
      rec.waic = cell_number(t, r, cw, file);
      for (std::size_t p = 0; p < names.size(); ++p) {
        const int base = static_cast<int>(6 + 4 * p);
        if (t.rows[r][static_cast<std::size_t>(base)].empty()) continue;
        rec.params[names[p]] = {cell_number(t, r, base, file), cell_number(t, r, base + 1, file),
                                cell_number(t, r, base + 2, file), cell_number(t, r, base + 3, file)};
      }
      rec.risk = Eigen::VectorXd::Constant(r_true.size(), std::numeric_limits<double>::quiet_NaN());
      index[{rec.model, rec.replicate}] = records.size();
      records.push_back(std::move(rec));
    }
  }
  {
    const std::string file = (dir / "risks.csv").string();
    const CsvTable t = read_csv_file(dir / "risks.csv");
    const int cm = t.col("model", file), cr = t.col("replicate", file), ca = t.col("area", file),
              cv = t.col("risk", file);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto it = index.find({t.rows[r][static_cast<std::size_t>(cm)], static_cast<int>(cell_number(t, r, cr, file))});
      if (it == index.end()) throw ParseError(file + ": risk row for an unknown replicate", t.lines[r]);
      const double area = cell_number(t, r, ca, file);
      if (area < 1 || area > static_cast<double>(r_true.size())) throw ParseError(file + ": area out of range", t.lines[r]);
      records[it->second].risk(static_cast<Eigen::Index>(area) - 1) = cell_number(t, r, cv, file);
    }
  }
  for (const auto& rec : records) {
    if (!rec.risk.allFinite()) throw ParseError((dir / "risks.csv").string() + ": incomplete risks for model " + rec.model, 0);
  }
  std::map<std::string, double> truth = {{"x1", beta1}};
  if (static_cast<int>(study_d) == 2) truth["x2"] = 0.0;
  return summarize_records(records, truth, r_true, need("scenario"), need("subscenario"), marb,
                           static_cast<int>(n_failed_d));
}

}  // namespace

CommandResult cmd_summarize(const RunConfig& cfg) {
  if (cfg.in_dir.empty()) throw ValidationError("summarize needs --in");
  if (cfg.out_csv.empty()) throw ValidationError("summarize needs --out");
  if (!fs::is_directory(cfg.in_dir)) throw IoError("input directory '" + cfg.in_dir + "' does not exist");
  std::vector<fs::path> dirs;
  if (fs::exists(fs::path(cfg.in_dir) / "replicates.csv")) {
    dirs.push_back(cfg.in_dir);
  } else {
    for (const auto& e : fs::directory_iterator(cfg.in_dir))
      if (e.is_directory() && fs::exists(e.path() / "replicates.csv")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
  }
  if (dirs.empty()) throw IoError("no replicates.csv under '" + cfg.in_dir + "'");
  StudySummary all;
  for (const auto& d : dirs) {
    StudySummary s = summarize_dir(d);
    all.rows.insert(all.rows.end(), s.rows.begin(), s.rows.end());
  }
  const fs::path out_path(cfg.out_csv);
  if (out_path.has_parent_path()) ensure_dir(out_path.parent_path().string());
  auto out = open_out(out_path);
  write_summary_csv(out, all);
  CommandResult res;
  res.files.push_back(out_path.filename().string());
  return res;
}

}  // namespace spconf
