#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "cbandit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cbandit::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const fs::path& p) {
  const std::string text = slurp(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

// The single run directory for a command under an output root.
fs::path run_dir(const fs::path& root, const std::string& command) {
  std::vector<fs::path> found;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && e.path().filename().string().rfind(command + "-", 0) == 0) found.push_back(e.path());
  }
  REQUIRE(found.size() == 1);
  return found.front();
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("cbandit_cli_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// A small, fast configuration; comments are allowed in config files.
fs::path write_config(const fs::path& dir, const json& extra = json::object()) {
  json c = {
      {"output_dir", (dir / "runs").string()},
      {"synth",
       {{"num_samples", 1000}, {"num_arms", 4}, {"num_binary", 3}, {"num_continuous", 3},
        {"num_informative", 2}, {"behavior_strength", 0.8}, {"seed", 5}, {"oracle_draws", 5000}}},
      {"experiment", {{"propensity", "logit"}, {"folds", 3}, {"seed", 1}}},
  };
  c.merge_patch(extra);
  const fs::path path = dir / "config.json";
  std::ofstream(path) << "// test config\n" << c.dump(2) << "\n";
  return path;
}

fs::path simulate_into(const TempDir& tmp) {
  const Run r = run({"simulate", "-c", write_config(tmp.path()).string()});
  REQUIRE(r.code == 0);
  return run_dir(tmp.path() / "runs", "simulate");
}

}  // namespace

TEST_CASE("simulate writes the requested rows, truth and oracle values") {
  TempDir tmp("simulate");
  const fs::path dir = simulate_into(tmp);
  CHECK(count_lines(dir / "dataset.csv") == 1001);
  CHECK(fs::exists(dir / "schema.json"));
  CHECK(fs::exists(dir / "ground_truth.json"));
  CHECK(fs::exists(dir / "resolved_config.json"));
  const json oracle = json::parse(slurp(dir / "oracle.json"));
  const double best = oracle.at("optimal").at("value");
  CHECK(best >= oracle.at("random").at("value").get<double>());
  CHECK(best >= oracle.at("behavior").at("value").get<double>());

  TempDir other("simulate_again");
  const fs::path again = simulate_into(other);
  for (const auto* f : {"dataset.csv", "ground_truth.json", "oracle.json"}) CHECK(slurp(dir / f) == slurp(again / f));

  const Run seeded = run({"simulate", "-c", write_config(tmp.path()).string(), "--seed", "6"});
  CHECK(seeded.code == 0);
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(tmp.path() / "runs")) dirs += e.is_directory() ? 1 : 0;
  CHECK(dirs == 2);
}

TEST_CASE("preprocess is idempotent on its own output") {
  TempDir tmp("preprocess");
  const fs::path sim = simulate_into(tmp);
  const Run first = run({"preprocess", "-c", write_config(tmp.path()).string(), "-i", (sim / "dataset.csv").string(),
                         "-o", (tmp.path() / "p1").string()});
  REQUIRE(first.code == 0);
  CHECK(first.out.find("T=1000 K=4") != std::string::npos);
  CHECK(first.out.find("grand_mean=") != std::string::npos);
  const fs::path p1 = run_dir(tmp.path() / "p1", "preprocess");
  const Run second = run({"preprocess", "-c", write_config(tmp.path()).string(), "-i", (p1 / "dataset.csv").string(),
                          "-o", (tmp.path() / "p2").string()});
  REQUIRE(second.code == 0);
  const fs::path p2 = run_dir(tmp.path() / "p2", "preprocess");
  CHECK(slurp(p1 / "dataset.csv") == slurp(p2 / "dataset.csv"));
}

TEST_CASE("preprocess rejects input errors with exit code 2") {
  TempDir tmp("preprocess_errors");
  const fs::path sim = simulate_into(tmp);
  const fs::path empty = tmp.path() / "empty.csv";
  std::ofstream(empty) << slurp(sim / "dataset.csv").substr(0, slurp(sim / "dataset.csv").find('\n') + 1);
  fs::copy_file(sim / "schema.json", tmp.path() / "schema.json");
  const Run r = run({"preprocess", "-i", empty.string(), "-o", (tmp.path() / "out").string()});
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());

  const Run missing = run({"preprocess", "-i", (tmp.path() / "nope.csv").string(), "-o", (tmp.path() / "out").string()});
  CHECK(missing.code == 2);
}

TEST_CASE("learn writes every policy and reruns byte-identically") {
  TempDir tmp("learn");
  const fs::path sim = simulate_into(tmp);
  const auto cfg = write_config(tmp.path(), {{"learn", {{"tau", 0.05}}}});
  const Run r = run({"learn", "-c", cfg.string(), "-i", (sim / "dataset.csv").string()});
  REQUIRE(r.code == 0);
  const fs::path dir = run_dir(tmp.path() / "runs", "learn");
  const json dr = json::parse(slurp(dir / "policy_DR.json"));
  CHECK(dr.at("arms").size() == 4);
  for (const auto& [arm, body] : dr.at("arms").items()) CHECK(body.at("coefficients").size() == 6);
  const json ot = json::parse(slurp(dir / "policy_OT.json"));
  CHECK(ot.at("depth") == 2);
  for (const auto* f : {"policy_DM.json", "policy_IPW.json", "propensity.json", "balance.json", "reward_model.json"}) {
    CHECK(fs::exists(dir / f));
  }

  const std::string before = slurp(dir / "policy_DR.json");
  REQUIRE(run({"learn", "-c", cfg.string(), "-i", (sim / "dataset.csv").string()}).code == 0);
  CHECK(slurp(dir / "policy_DR.json") == before);

  const Run bad_tau = run({"learn", "-c", cfg.string(), "-i", (sim / "dataset.csv").string(), "--tau", "0.3"});
  CHECK(bad_tau.code == 2);
  CHECK(bad_tau.err.find("tau < 1/k") != std::string::npos);
}

TEST_CASE("evaluate renders the default grid, a single cell and the ranking") {
  TempDir tmp("evaluate");
  const fs::path sim = simulate_into(tmp);
  const Run r = run({"evaluate", "-c", write_config(tmp.path()).string(), "-i", (sim / "dataset.csv").string()});
  REQUIRE(r.code == 0);
  const fs::path dir = run_dir(tmp.path() / "runs", "evaluate");
  const json exp = json::parse(slurp(dir / "experiment.json"));
  CHECK(exp.at("cells").size() == 15);
  CHECK(slurp(dir / "experiment.md") == r.out.substr(0, slurp(dir / "experiment.md").size()));

  const auto single = write_config(tmp.path(), {{"output_dir", (tmp.path() / "single").string()},
                                                {"experiment", {{"algorithms", {"DR"}}, {"taus", {0.02}}}}});
  const Run one = run({"evaluate", "-c", single.string(), "-i", (sim / "dataset.csv").string(), "--rank-features"});
  REQUIRE(one.code == 0);
  const fs::path odir = run_dir(tmp.path() / "single", "evaluate");
  CHECK(json::parse(slurp(odir / "experiment.json")).at("cells").size() == 1);
  CHECK(count_lines(odir / "ranking.csv") == 7);
  CHECK(slurp(odir / "ranking.svg").find("<svg") != std::string::npos);
  CHECK(fs::exists(odir / "ranking.json"));

  const auto bad = write_config(tmp.path(), {{"experiment", {{"taus", {0.3}}}}});
  CHECK(run({"evaluate", "-c", bad.string(), "-i", (sim / "dataset.csv").string()}).code == 2);
}

TEST_CASE("predict maps contexts to arm decisions") {
  TempDir tmp("predict");
  const fs::path sim = simulate_into(tmp);
  const auto cfg = write_config(tmp.path());
  REQUIRE(run({"learn", "-c", cfg.string(), "-i", (sim / "dataset.csv").string()}).code == 0);
  const fs::path learned = run_dir(tmp.path() / "runs", "learn");
  for (const auto* policy : {"policy_DR.json", "policy_OT.json"}) {
    const Run r = run({"predict", "-c", cfg.string(), "-i", (sim / "dataset.csv").string(), "--policy",
                       (learned / policy).string(), "-o", (tmp.path() / policy).string()});
    REQUIRE(r.code == 0);
    const fs::path dir = run_dir(tmp.path() / policy, "predict");
    const std::string csv = slurp(dir / "predictions.csv");
    CHECK(csv.rfind("row,action\n", 0) == 0);
    CHECK(count_lines(dir / "predictions.csv") == 1001);
  }
  CHECK(run({"predict", "-c", cfg.string(), "-i", (sim / "dataset.csv").string()}).code == 2);
}

TEST_CASE("argument and config errors exit with code 2") {
  TempDir tmp("errors");
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"learn", "-c", (tmp.path() / "missing.json").string()}).code == 2);
  const fs::path junk = tmp.path() / "junk.json";
  std::ofstream(junk) << "{\"surprise\": 1}";
  const Run r = run({"simulate", "-c", junk.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("surprise") != std::string::npos);
  CHECK(run({"--help"}).code == 0);
}
