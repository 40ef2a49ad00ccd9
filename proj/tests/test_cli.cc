// Runs the exner binary as a subprocess.
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "test_util.h"

namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run exner(const std::string& args) {
  const std::string cmd = std::string(EXNER_CLI_PATH) + " -q " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines_with(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) n += line.rfind(prefix, 0) == 0;
  return n;
}

// synth + a tiny training run shared by the tests below.
struct Fixture {
  testutil::TempDir dir{"cli"};
  Fixture() {
    REQUIRE(exner("synth --out " + (dir / "data").string() +
                  " --seed 4 --train-size 20 --test-size 10 --pool-size 12")
                .status == 0);
    REQUIRE(exner(train_args("ck.bin")).status == 0);
  }
  std::string train_args(const std::string& out) const {
    return "train --corpus " + (dir / "data/train.bio").string() + " --out " +
           (dir / out).string() +
           " --epochs 2 --dim 16 --heads 2 --layers 1 --lr 1e-3 --seed 3";
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("cli: help and usage errors") {
  CHECK(exner("--help").status == 0);
  CHECK(exner("frobnicate").status == 2);
  CHECK(exner("predict --checkpoint /nonexistent/ck.bin --supports x --text a").status == 2);
  const auto& f = fixture();
  CHECK(exner("eval --checkpoint " + f.path("ck.bin") + " --test " + f.path("data/test.bio") +
              " --pool " + f.path("data/target_pool.json") + " --budgets 5,2 --out-csv " +
              f.path("x.csv") + " --out-json " + f.path("x.json"))
            .status == 2);
  CHECK(exner("predict --checkpoint " + f.path("ck.bin") + " --supports " +
              f.path("data/target_pool.json") + " --text '   '")
            .status == 2);
}

TEST_CASE("cli: synth is deterministic") {
  const auto& f = fixture();
  REQUIRE(exner("synth --out " + f.path("again") +
                " --seed 4 --train-size 20 --test-size 10 --pool-size 12")
              .status == 0);
  for (const char* name : {"train.bio", "test.bio", "target_pool.json", "source_pool.json"}) {
    CHECK(slurp(f.dir / "again" / name) == slurp(f.dir / "data" / name));
  }
}

TEST_CASE("cli: train writes one loss row per epoch and is deterministic") {
  const auto& f = fixture();
  const std::string csv = slurp(f.dir / "ck.bin.loss.csv");
  CHECK(csv.rfind("epoch,mean_loss\n", 0) == 0);
  CHECK(count_lines_with(csv, "") == 3);
  REQUIRE(exner(f.train_args("ck2.bin")).status == 0);
  CHECK(slurp(f.dir / "ck2.bin") == slurp(f.dir / "ck.bin"));
  CHECK(slurp(f.dir / "ck2.bin.loss.csv") == csv);
}

TEST_CASE("cli: eval report rows and determinism") {
  const auto& f = fixture();
  auto eval = [&](const std::string& tag) {
    return exner("eval --checkpoint " + f.path("ck.bin") + " --test " + f.path("data/test.bio") +
                 " --pool " + f.path("data/target_pool.json") +
                 " --budgets 1,2 --trials 3 --seed 7 --out-csv " + f.path(tag + ".csv") +
                 " --out-json " + f.path(tag + ".json"));
  };
  REQUIRE(eval("a").status == 0);
  REQUIRE(eval("b").status == 0);
  const std::string csv = slurp(f.dir / "a.csv");
  CHECK(count_lines_with(csv, "trial,") == 6);
  CHECK(count_lines_with(csv, "summary,") == 2);
  CHECK(csv == slurp(f.dir / "b.csv"));
  CHECK(slurp(f.dir / "a.json") == slurp(f.dir / "b.json"));
}

TEST_CASE("cli: predict prints identical JSON across runs") {
  const auto& f = fixture();
  const std::string args = "predict --checkpoint " + f.path("ck.bin") + " --supports " +
                           f.path("data/target_pool.json") + " --text 'add it to my playlist'";
  const auto a = exner(args);
  const auto b = exner(args);
  REQUIRE(a.status == 0);
  CHECK(a.out == b.out);
  const auto j = nlohmann::json::parse(a.out);
  CHECK(j.at("query_tokens").size() == 5);
  CHECK(j.contains("spans"));
}
