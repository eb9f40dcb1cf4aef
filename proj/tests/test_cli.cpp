#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "symdiff/io.hpp"

using namespace symdiff;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "symdiff_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(SYMDIFF_CLI_PATH) + " " + args + " >" + (kDir / "stdout.txt").string() + " 2>" +
                          (kDir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string path(const std::string& name) { return (kDir / name).string(); }

const std::string kNet = " --hidden 8 --depth 1 --n-basis 4 --n-emb 4 --time-dim 8 --head-hidden 4";

struct Workspace {
  Workspace() {
    fs::remove_all(kDir);
    fs::create_directories(kDir);
  }
};

}  // namespace

TEST_CASE("help and usage errors") {
  Workspace ws;
  CHECK(run("--help") == 0);
  CHECK(slurp(kDir / "stdout.txt").find("gen-data") != std::string::npos);
  CHECK(run("") == 2);
  CHECK(run("bogus") == 2);
  CHECK(run("gen-data --out " + path("d.bin") + " --count 0") == 2);
  CHECK(run("gen-data") == 2);
  CHECK(run("gen-data --out " + path("d.bin") + " --count 10") == 0);
  CHECK(run("train --data " + path("d.bin") + " --out " + path("p.bin") + " --mode nope") == 2);
  CHECK(run("train --data " + path("missing.bin") + " --out " + path("p.bin")) == 1);
  CHECK(slurp(kDir / "stderr.txt").find("error:") != std::string::npos);
}

TEST_CASE("full pipeline") {
  Workspace ws;
  REQUIRE(run("gen-data --out " + path("data.bin") + " --count 64 --n-points 4 --seed 3") == 0);
  const auto data = load_dataset(path("data.bin"));
  CHECK(data.size() == 64);
  CHECK(data[0].n() == 4);
  CHECK(data[0].d() == 1);

  REQUIRE(run("train --data " + path("data.bin") + " --out " + path("model.bin") + " --steps 12 --batch 4 --T 10 --seed 1" + kNet) == 0);
  std::ifstream csv(path("model.bin") + ".metrics.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "step,loss,grad_norm,wall_ms");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(line.rfind(std::to_string(rows) + ",", 0) == 0);
  }
  CHECK(rows == 12);

  REQUIRE(run("sample --params " + path("model.bin") + " --out " + path("samples.bin") + " --count 9 --seed 2") == 0);
  const auto samples = load_dataset(path("samples.bin"));
  CHECK(samples.size() == 9);
  CHECK(samples[0].n() == 4);
  REQUIRE(run("sample --params " + path("model.bin") + " --out " + path("big.bin") + " --count 2 --n-points 7") == 0);
  CHECK(load_dataset(path("big.bin"))[0].n() == 7);

  REQUIRE(run("eval --params " + path("model.bin") + " --data " + path("data.bin") + " --n-t 2 --out " + path("eval.json")) == 0);
  const auto j = nlohmann::json::parse(slurp(kDir / "eval.json"));
  for (const char* key : {"nll_bound", "prior_kl", "diffusion", "mean_L_t", "L_1"}) CHECK(std::isfinite(j.at(key).get<double>()));
  CHECK(j.at("n_items").get<int>() == 64);
  CHECK(j.at("mode").get<std::string>() == "symdiff");
  CHECK_FALSE(j.contains("equivariance"));

  CHECK(run("eval --params " + path("model.bin") + " --data " + path("data.bin") + " --equivariance --n 999") == 2);
}

TEST_CASE("pipeline is reproducible") {
  Workspace ws;
  std::string hashes[2];
  for (int k = 0; k < 2; ++k) {
    const std::string tag = std::to_string(k);
    REQUIRE(run("gen-data --out " + path("d" + tag) + " --count 40 --n-points 3 --seed 5") == 0);
    REQUIRE(run("train --data " + path("d" + tag) + " --out " + path("m" + tag) + " --steps 5 --batch 3 --T 6 --seed 5" + kNet) == 0);
    REQUIRE(run("sample --params " + path("m" + tag) + " --out " + path("s" + tag) + " --count 5 --seed 5") == 0);
    hashes[k] = slurp(kDir / ("d" + tag)) + slurp(kDir / ("m" + tag)) + slurp(kDir / ("s" + tag));
  }
  CHECK(hashes[0] == hashes[1]);
}

TEST_CASE("bad inputs") {
  Workspace ws;
  {
    std::ofstream out(path("junk.bin"), std::ios::binary);
    out << "NOPE0000";
  }
  CHECK(run("sample --params " + path("junk.bin") + " --out " + path("s.bin")) == 1);
  CHECK(slurp(kDir / "stderr.txt").find("bad magic") != std::string::npos);
  REQUIRE(run("gen-data --out " + path("d.bin") + " --count 20 --n-points 3") == 0);
  REQUIRE(run("train --data " + path("d.bin") + " --out " + path("score.bin") + " --steps 2 --batch 2 --mode score" + kNet) == 0);
  CHECK(run("sample --params " + path("score.bin") + " --out " + path("s.bin")) == 1);
  REQUIRE(run("train --data " + path("d.bin") + " --out " + path("flow.bin") + " --steps 2 --batch 2 --mode flow" + kNet) == 0);
  CHECK(run("sample --params " + path("flow.bin") + " --out " + path("s.bin") + " --count 3 --flow-steps 4") == 0);
  fs::remove_all(kDir);
}
