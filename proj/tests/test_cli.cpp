#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "spconf/cli.hpp"
#include "spconf/errors.hpp"

using namespace spconf;
namespace fs = std::filesystem;

namespace {

const std::string kData = SPCONF_DATA_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spconf_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

AreaTable table_from(const std::string& text) {
  std::istringstream in(text);
  return read_area_table(in);
}

RunConfig scotland_config(const fs::path& out) {
  RunConfig c;
  c.data_path = kData + "/scotland/scotland.csv";
  c.adj_path = kData + "/scotland/scotland.gal";
  c.out_dir = out.string();
  c.mcmc.chains = 2;
  c.mcmc.iterations = 2000;
  c.mcmc.burn_in = 500;
  c.mcmc.thin = 5;
  return c;
}

std::map<std::string, double> summary_means(const fs::path& csv, const std::string& param) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::map<std::string, double> out;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string model, p, mean;
    std::getline(ss, model, ',');
    std::getline(ss, p, ',');
    std::getline(ss, mean, ',');
    if (p == param) out[model] = std::stod(mean);
  }
  return out;
}

}  // namespace

TEST_CASE("Scotland fixture ingests") {
  const IngestedData in = ingest_dataset(kData + "/scotland/scotland.csv", kData + "/scotland/scotland.gal");
  CHECK(in.data.size() == 56);
  CHECK(in.data.n_covariates() == 1);
  CHECK(in.data.covariate_names[0] == "AFF");
  CHECK(in.graph.size() == 56);
  CHECK(std::abs(in.data.X.col(0).mean()) < 1e-12);
}

TEST_CASE("area table errors and round trip") {
  CHECK_THROWS_AS(to_dataset(table_from("id,observed,expected,x\na,1,2,0.5\nb,3,0,0.1\nc,2,1,0.3\n")), ValidationError);
  try {
    to_dataset(table_from("id,observed,expected,x\na,1,2,0.5\nb,3,0,0.1\nc,2,1,0.3\n"));
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    CHECK(std::string(e.what()).find("expected") != std::string::npos);
  }
  CHECK_THROWS_AS(to_dataset(table_from("id,observed,expected,x\na,1,2,1\nb,3,1,1\nc,2,1,1\n")), ValidationError);
  CHECK_THROWS_AS(table_from("id,observed,expected,x\na,1,2,zz\n"), ParseError);
  CHECK_THROWS_AS(table_from("id,expected,observed\na,1,2\n"), ParseError);

  const AreaTable t = table_from("id,observed,expected,x,w,lon,lat\na,1,2.5,0.5,3,10,50\nb,3,1.25,0.1,-1,11,51\nc,0,1,0.3,2,12,49\n");
  CHECK(t.covariate_names.size() == 2);
  CHECK(t.coords.cols() == 2);
  std::ostringstream out;
  write_area_table(out, t);
  const AreaTable back = table_from(out.str());
  CHECK(back.ids == t.ids);
  CHECK(back.covariates == t.covariates);
  CHECK(back.expected == t.expected);
  CHECK(back.coords == t.coords);
  std::ostringstream again;
  write_area_table(again, back);
  CHECK(again.str() == out.str());
}

TEST_CASE("config file and precedence") {
  const fs::path dir = scratch("config");
  {
    std::ofstream f(dir / "run.ini");
    f << "[mcmc]\nchains = 4\nseed = 99\n[models]\nlist = Null,SpatPlus10\n[simulate]\nscenario = 2\ncor = 0.5\n";
  }
  RunConfig c;
  const std::string h0 = c.hash();
  apply_config_file(c, (dir / "run.ini").string());
  CHECK(c.mcmc.chains == 4);
  CHECK(c.mcmc.seed == 99);
  CHECK(c.mcmc.iterations == McmcConfig{}.iterations);
  CHECK(c.models == std::vector<std::string>{"Null", "SpatPlus10"});
  CHECK(c.correlation == 0.5);
  CHECK(c.hash() != h0);
  CHECK(c.hash().size() == 16);
  // output location and worker count do not change what is computed
  RunConfig d = c;
  d.out_dir = "elsewhere";
  d.workers = 7;
  CHECK(d.hash() == c.hash());

  {
    std::ofstream f(dir / "bad.ini");
    f << "[mcmc]\nchainz = 4\n";
  }
  CHECK_THROWS_AS(apply_config_file(c, (dir / "bad.ini").string()), ValidationError);
  RunConfig bad;
  bad.models = {"Nope"};
  CHECK_THROWS_AS(bad.model_specs(), ValidationError);
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
}

TEST_CASE("fit on Scotland") {
  const fs::path out = scratch("fit");
  RunConfig c = scotland_config(out);
  const CommandResult r = cmd_fit(c);
  CHECK(fs::exists(out / "summary.csv"));
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "samples_RSR.csv"));
  const auto means = summary_means(out / "summary.csv", "AFF");
  REQUIRE(means.size() == 3);
  CHECK(std::abs(means.at("RSR") - means.at("Null")) < 0.1 * std::abs(means.at("Null")));
  const std::string first = slurp(out / "summary.csv");

  const fs::path out2 = scratch("fit2");
  c.out_dir = out2.string();
  cmd_fit(c);
  CHECK(slurp(out2 / "summary.csv") == first);
  CHECK(slurp(out2 / "samples_Null.csv") == slurp(out / "samples_Null.csv"));
  (void)r;
}

TEST_CASE("missing adjacency is reported with its path") {
  RunConfig c = scotland_config(scratch("missing"));
  c.adj_path = "/nonexistent/nowhere.gal";
  try {
    cmd_fit(c);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("/nonexistent/nowhere.gal") != std::string::npos);
  }
}

TEST_CASE("simulate and summarize") {
  const fs::path root = scratch("sim");
  RunConfig c;
  c.models = {"Null"};
  c.scenario = 1;
  c.K = 2;
  c.mcmc.chains = 2;
  c.mcmc.iterations = 800;
  c.mcmc.burn_in = 200;
  c.mcmc.thin = 5;
  c.out_dir = (root / "s1").string();
  cmd_simulate(c);
  for (const char* f : {"summary.csv", "summary_wide.csv", "replicates.csv", "risks.csv", "truth.csv", "scenario.csv",
                        "failures.csv", "manifest.json"})
    CHECK(fs::exists(root / "s1" / f));

  std::ifstream rep(root / "s1" / "replicates.csv");
  std::string line;
  int rows = 0;
  while (std::getline(rep, line)) ++rows;
  CHECK(rows == 3);

  std::ifstream wide(root / "s1" / "summary_wide.csv");
  rows = 0;
  while (std::getline(wide, line)) ++rows;
  CHECK(rows == 2);

  RunConfig s;
  s.in_dir = (root / "s1").string();
  s.out_csv = (root / "again.csv").string();
  cmd_summarize(s);
  CHECK(slurp(root / "again.csv") == slurp(root / "s1" / "summary.csv"));

  // study 2 reports Type-S for the null coefficient instead of bias
  c.study = 2;
  c.scenario = 2;
  c.out_dir = (root / "s2").string();
  cmd_simulate(c);
  const std::string sum = slurp(root / "s2" / "summary.csv");
  CHECK(sum.find("x2.type_s") != std::string::npos);
  CHECK(sum.find("x2.marb") == std::string::npos);
  CHECK(sum.find("x1.coverage95") != std::string::npos);

  // both runs at once, one directory each
  s.in_dir = root.string();
  s.out_csv = (root / "both.csv").string();
  cmd_summarize(s);
  const std::string both = slurp(root / "both.csv");
  CHECK(both.find("x2.type_s") != std::string::npos);
}
