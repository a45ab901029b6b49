#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli() {
  const char* env = std::getenv("GMS_CLI");
  REQUIRE_MESSAGE(env != nullptr, "GMS_CLI must point at the built binary");
  return env;
}

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = cli() + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("gms_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing file: " << p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

bool dirs_equal(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> rel_a;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) rel_a.push_back(fs::relative(e.path(), a));
  std::sort(rel_a.begin(), rel_a.end());
  for (const auto& rel : rel_a) {
    if (!fs::exists(b / rel)) return false;
    if (slurp(a / rel) != slurp(b / rel)) return false;
  }
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) ++count_b;
  return count_b == rel_a.size();
}

// One small dataset shared by the pipeline tests.
const std::string& dataset() {
  static TempDir tmp("data");
  static bool made = false;
  if (!made) {
    const RunResult r = run("synth --out " + tmp.sub("ds") +
                            " --seed 5 --width 160 --height 160 --n-train 3 --n-val 2 "
                            "--n-test 2 --n-min 24 --n-max 30");
    REQUIRE(r.exit_code == 0);
    made = true;
  }
  static std::string dir = tmp.sub("ds");
  return dir;
}

}  // namespace

TEST_CASE("synth is deterministic across runs") {
  TempDir tmp("synth_det");
  const std::string flags =
      " --seed 9 --width 96 --height 96 --n-train 2 --n-val 1 --n-test 1 --n-min 8 --n-max 12";
  CHECK(run("synth --out " + tmp.sub("a") + flags).exit_code == 0);
  CHECK(run("synth --out " + tmp.sub("b") + flags).exit_code == 0);
  CHECK(dirs_equal(tmp.sub("a"), tmp.sub("b")));
}

TEST_CASE("missing required flags exit with usage code 2") {
  CHECK(run("synth").exit_code == 2);
  CHECK(run("fit --data /nowhere").exit_code == 2);   // --out missing
  CHECK(run("train --data /nowhere").exit_code == 2);
  CHECK(run("eval --data /nowhere").exit_code == 2);
  CHECK(run("nonsense").exit_code != 0);
}

TEST_CASE("bad flag values exit with usage code 2") {
  CHECK(run("train --data x --out y --arm bogus").exit_code == 2);
  CHECK(run("eval --data x --params p --use nobody").exit_code == 2);
}

TEST_CASE("runtime failures exit with code 1") {
  TempDir tmp("runtime");
  CHECK(run("eval --data " + dataset() + " --params " + tmp.sub("missing.json")).exit_code == 1);
  CHECK(run("fit --data " + tmp.sub("not_a_dataset") + " --out " + tmp.sub("o")).exit_code == 1);
}

TEST_CASE("fit honors --components and emits monotone log-likelihoods") {
  TempDir tmp("fit");
  const RunResult r =
      run("fit --data " + dataset() + " --out " + tmp.sub("fits") + " --components 3");
  REQUIRE(r.exit_code == 0);
  const json j = json::parse(slurp(fs::path(tmp.sub("fits")) / "train_0000.mixture.json"));
  CHECK(j.at("components").size() == 3);
  const auto ll = j.at("loglik").get<std::vector<double>>();
  REQUIRE(ll.size() >= 2);
  for (std::size_t i = 1; i < ll.size(); ++i) CHECK(ll[i] >= ll[i - 1] - 1e-7);
}

TEST_CASE("raw-alpha fitting switches off the log transform") {
  TempDir tmp("raw");
  REQUIRE(run("fit --data " + dataset() + " --out " + tmp.sub("log") + " --components 1")
              .exit_code == 0);
  REQUIRE(run("fit --data " + dataset() + " --out " + tmp.sub("raw") +
              " --components 1 --raw-alpha")
              .exit_code == 0);
  const json jl = json::parse(slurp(fs::path(tmp.sub("log")) / "train_0000.mixture.json"));
  const json jr = json::parse(slurp(fs::path(tmp.sub("raw")) / "train_0000.mixture.json"));
  const double ml = jl.at("components")[0].at("mean")[0].get<double>();
  const double mr = jr.at("components")[0].at("mean")[0].get<double>();
  CHECK(ml < 10.0);    // a log-area
  CHECK(mr > 30.0);    // a raw area
  CHECK(std::exp(ml) == doctest::Approx(mr).epsilon(0.75));
}

TEST_CASE("plan emits covering bands with the landmark default of 250") {
  TempDir tmp("plan");
  REQUIRE(run("plan --data " + dataset() + " --out " + tmp.sub("plans") + " --components 3")
              .exit_code == 0);
  const json j = json::parse(slurp(fs::path(tmp.sub("plans")) / "train_0000.plan.json"));
  CHECK(j.at("optimal_scale").get<double>() == 250.0);
  const auto& bands = j.at("bands");
  CHECK(bands.front().at("v_lo").get<int>() == 0);
  CHECK(bands.back().at("v_hi").get<int>() == 160);
  bool below = false, above = false;
  for (const auto& b : bands) {
    below = below || b.at("factor").get<double>() < 1.0;
    above = above || b.at("factor").get<double>() > 1.0;
  }
  CHECK(below);
  CHECK(above);
}

TEST_CASE("training runs are deterministic and eval reports are complete") {
  TempDir tmp("train");
  const std::string train_flags = " --data " + dataset() +
                                  " --arm scoped --epochs 2 --batch-size 2 --lr-conf 3 "
                                  "--lr-thr 0.3 --ema-m 0.8 --components 2 --seed 3";
  REQUIRE(run("train --out " + tmp.sub("r1") + train_flags).exit_code == 0);
  REQUIRE(run("train --out " + tmp.sub("r2") + train_flags).exit_code == 0);
  CHECK(slurp(tmp.sub("r1") + "/history.csv") == slurp(tmp.sub("r2") + "/history.csv"));
  CHECK(slurp(tmp.sub("r1") + "/params.json") == slurp(tmp.sub("r2") + "/params.json"));

  const std::string report = tmp.sub("report.json");
  REQUIRE(run("eval --data " + dataset() + " --params " + tmp.sub("r1") + "/params.json" +
              " --split test --out " + report + " --csv " + tmp.sub("per_scene.csv"))
              .exit_code == 0);
  const json j = json::parse(slurp(report));
  for (const char* key : {"schema_version", "sigma_convention", "bin_edges", "precision",
                          "recall", "f1m", "mae", "mse", "nae", "bin_recall", "pearson",
                          "scenes", "min_component_area"})
    CHECK_MESSAGE(j.contains(key), "missing key " << key);
  CHECK(j.at("scenes").size() == 2);
  const std::string csv = slurp(tmp.sub("per_scene.csv"));
  CHECK(csv.rfind("id,tp,fp,fn,", 0) == 0);

  // Same checkpoint, --with-gms toggles the scoped path.
  REQUIRE(run("eval --data " + dataset() + " --params " + tmp.sub("r1") + "/params.json" +
              " --split test --with-gms --components 2 --out " + tmp.sub("gms.json"))
              .exit_code == 0);
  CHECK(json::parse(slurp(tmp.sub("gms.json"))).at("with_gms").get<bool>());
}

TEST_CASE("checkpoint-every writes epoch checkpoints") {
  TempDir tmp("ckpt");
  REQUIRE(run("train --out " + tmp.sub("r") + " --data " + dataset() +
              " --arm baseline --epochs 2 --lr-conf 2 --lr-thr 0.2 --checkpoint-every 1")
              .exit_code == 0);
  CHECK(fs::exists(fs::path(tmp.sub("r")) / "ckpt_epoch_0000.json"));
  CHECK(fs::exists(fs::path(tmp.sub("r")) / "ckpt_epoch_0001.json"));
}

TEST_CASE("config files provide defaults that flags override") {
  TempDir tmp("config");
  {
    std::ofstream cfg(tmp.sub("cfg.json"));
    cfg << R"({"components": 3, "out": ")" << tmp.sub("from_config") << R"("})";
  }
  REQUIRE(run("fit --data " + dataset() + " --config " + tmp.sub("cfg.json")).exit_code == 0);
  CHECK(fs::exists(fs::path(tmp.sub("from_config")) / "train_0000.mixture.json"));
  // Explicit flag beats the config value.
  REQUIRE(run("fit --data " + dataset() + " --config " + tmp.sub("cfg.json") + " --out " +
              tmp.sub("explicit"))
              .exit_code == 0);
  const json j = json::parse(slurp(fs::path(tmp.sub("explicit")) / "train_0000.mixture.json"));
  CHECK(j.at("components").size() == 3);
}

TEST_CASE("report aggregates evals and regenerates byte-identically") {
  TempDir tmp("report");
  REQUIRE(run("train --out " + tmp.sub("run") + " --data " + dataset() +
              " --arm baseline --epochs 2 --lr-conf 3 --lr-thr 0.3 --seed 4")
              .exit_code == 0);
  REQUIRE(run("eval --data " + dataset() + " --params " + tmp.sub("run") + "/params.json" +
              " --split val --out " + tmp.sub("eval.json"))
              .exit_code == 0);
  const std::string flags = "report --eval base=" + tmp.sub("eval.json") + " --history base=" +
                            tmp.sub("run") + "/history.csv --sweep 100,250 --params " +
                            tmp.sub("run") + "/params.json --data " + dataset() +
                            " --split val --components 2";
  REQUIRE(run(flags + " --out " + tmp.sub("a.md")).exit_code == 0);
  REQUIRE(run(flags + " --out " + tmp.sub("b.md")).exit_code == 0);
  const std::string a = slurp(tmp.sub("a.md"));
  CHECK(a == slurp(tmp.sub("b.md")));
  CHECK(a.find("| base |") != std::string::npos);
  CHECK(a.find("| 100 |") != std::string::npos);
  CHECK(a.find("| 250 |") != std::string::npos);
  // One row per requested optimal scale.
  std::size_t rows = 0;
  for (std::size_t pos = a.find("Optimal-scale"); (pos = a.find("\n| ", pos)) != std::string::npos;
       ++rows)
    pos += 3;
  CHECK(rows == 3);  // header separator plus two data rows
}
