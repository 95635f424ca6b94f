#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "stnet/cli.hpp"

using namespace stnet;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result stnet_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path workdir() {
  const auto d = fs::temp_directory_path() / "stnet_test_cli";
  return d;
}

// Simulated mixture on a 4 x 4 grid plus one short fit, shared by the tests.
struct Workspace {
  fs::path root = workdir();
  fs::path sim = root / "sim";
  fs::path run = root / "run";

  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
    REQUIRE(stnet_run({"simulate", "--grid", "4", "--spacing", "100", "--model", "mixture", "--n", "60",
                       "--clusters", "2", "--ws", "80", "--seed", "3", "--out", sim.string()})
                .code == 0);
    REQUIRE(stnet_run(fit_args(run)).code == 0);
  }

  std::vector<std::string> fit_args(const fs::path& out) const {
    return {"fit", "--network", (sim / "network.csv").string(), "--events", (sim / "events.csv").string(),
            "--out", out.string(), "--iters", "40", "--thin", "2", "--max-clusters", "6", "--pixels", "8",
            "--mc-points", "300", "--seed", "9"};
  }
};

const Workspace& workspace() {
  static const Workspace w;
  return w;
}

}  // namespace

TEST_CASE("unknown or missing sub-command") {
  CHECK(stnet_run({}).code != 0);
  const auto r = stnet_run({"frobnicate"});
  CHECK(r.code != 0);
  CHECK(r.err.find("frobnicate") != std::string::npos);
  CHECK(stnet_run({"fit", "--help"}).code == 0);
}

TEST_CASE("simulate writes the expected files reproducibly") {
  const auto& w = workspace();
  for (const char* f : {"network.csv", "events.csv", "truth.csv", "truth_centers.csv", "manifest.txt"}) {
    CHECK(fs::exists(w.sim / f));
  }
  const auto again = w.root / "sim2";
  REQUIRE(stnet_run({"simulate", "--grid", "4", "--spacing", "100", "--model", "mixture", "--n", "60",
                     "--clusters", "2", "--ws", "80", "--seed", "3", "--out", again.string()})
              .code == 0);
  CHECK(slurp(again / "events.csv") == slurp(w.sim / "events.csv"));
  CHECK(slurp(again / "truth.csv") == slurp(w.sim / "truth.csv"));
}

TEST_CASE("fit output is byte-identical for the same seed") {
  const auto& w = workspace();
  const auto second = w.root / "run2";
  REQUIRE(stnet_run(w.fit_args(second)).code == 0);
  for (const char* f : {"samples.csv", "centers.csv", "memberships.csv", "weights.csv", "events.csv"}) {
    CHECK(slurp(second / f) == slurp(w.run / f));
  }
  const auto manifest = io::Manifest::read(w.run / "manifest.txt");
  CHECK(manifest.require("status") == "complete");
  CHECK(manifest.require("n_draws") == "10");
  CHECK_FALSE(fs::exists(w.root / "run2.partial"));
}

TEST_CASE("the manifest reproduces the run as a config file") {
  const auto& w = workspace();
  const auto replay = w.root / "replay";
  const auto r = stnet_run({"fit", "--config", (w.run / "manifest.txt").string(), "--out", replay.string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(replay / "samples.csv") == slurp(w.run / "samples.csv"));
}

TEST_CASE("existing output is not overwritten without the flag") {
  const auto& w = workspace();
  const auto r = stnet_run(w.fit_args(w.run));
  CHECK(r.code == cli::kInputError);
  CHECK(r.err.find("--overwrite") != std::string::npos);
}

TEST_CASE("missing events file exits with an input error naming the path") {
  const auto& w = workspace();
  const auto missing = w.root / "nope.csv";
  auto args = w.fit_args(w.root / "never");
  args[4] = missing.string();
  const auto r = stnet_run(args);
  CHECK(r.code == cli::kInputError);
  CHECK(r.err.find(missing.string()) != std::string::npos);
  CHECK_FALSE(fs::exists(w.root / "never"));
}

TEST_CASE("downstream commands refuse a different network") {
  const auto& w = workspace();
  const auto other = w.root / "other.csv";
  {
    std::ofstream f(other);
    f << "seg_id,x1,y1,x2,y2\n1,0,0,100,0\n";
  }
  const auto r = stnet_run({"postprocess", "--run", w.run.string(), "--network", other.string(), "--out",
                            (w.root / "pp_bad").string()});
  CHECK(r.code == cli::kConsistencyError);
}

TEST_CASE("postprocess and assess on a finished run") {
  const auto& w = workspace();
  const auto net = (w.sim / "network.csv").string();
  const auto pp = w.root / "pp";
  REQUIRE(stnet_run({"postprocess", "--run", w.run.string(), "--network", net, "--out", pp.string()}).code == 0);
  const auto clusters = slurp(pp / "clusters.csv");
  CHECK(clusters.rfind("cluster,seg_id,offset,x,y,t,size,quarter", 0) == 0);
  const auto partition = slurp(pp / "partition.csv");
  CHECK(std::count(partition.begin(), partition.end(), '\n') == 61);

  const auto as = w.root / "assess";
  REQUIRE(stnet_run({"assess", "--run", w.run.string(), "--network", net, "--out", as.string(), "--sub-x", "40",
                     "--sub-y", "40", "--sub-t", "10", "--coarse-x", "4", "--coarse-y", "4", "--coarse-t", "5"})
              .code == 0);
  CHECK(fs::exists(as / "assess.csv"));
}

TEST_CASE("empty run files are input errors") {
  const auto& w = workspace();
  const auto broken = w.root / "broken";
  fs::copy(w.run, broken, fs::copy_options::recursive);
  {
    std::ofstream f(broken / "samples.csv", std::ios::trunc);
  }
  const auto r = stnet_run({"postprocess", "--run", broken.string(), "--network", (w.sim / "network.csv").string(),
                            "--out", (w.root / "pp_broken").string()});
  CHECK(r.code == cli::kInputError);
  CHECK(r.err.find("samples.csv") != std::string::npos);
}

TEST_CASE("the installed binary maps errors to exit codes") {
  const std::string cmd = std::string(STNET_CLI_PATH) + " fit --network /nonexistent/net.csv --events x.csv --out " +
                          (workdir() / "bin_out").string() + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == cli::kInputError);
}
