#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "streamkit/io.hpp"
#include "test_util.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

using namespace streamkit;
using namespace streamkit::testutil;

namespace {

std::string cli() { return STREAMKIT_CLI_PATH; }
std::string data_dir() { return STREAMKIT_TEST_DATA; }

int run(const std::string& args) {
  std::string cmd = cli() + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct TempFiles {
  std::string base;
  explicit TempFiles(const std::string& name) {
    base = std::string("/tmp/streamkit_test_") + name;
  }
  std::string operator()(const std::string& suffix) const {
    return base + "_" + suffix;
  }
};

}  // namespace

TEST_CASE("cluster-stream writes artifacts and is deterministic") {
  TempFiles tmp("cluster");
  Rng rng(901);
  Dataset x = random_mixture(rng, 600, 2, 3, 2048.0, 0.04);
  write_points_csv(tmp("pts.csv"), to_int(x.points));

  std::string flags = "cluster-stream --input " + tmp("pts.csv") +
                      " --k 3 --z 2 --epsilon 0.2 --delta 0.01 --seed 42"
                      " --n-bound 600 --lambda-scale 0.05 --mr-block 128"
                      " --out " + tmp("coreset.bin") + " --centers-out " +
                      tmp("centers.csv") + " --metrics " + tmp("m.json");
  CHECK(run(flags) == 0);
  std::string first_artifact = slurp(tmp("coreset.bin"));
  std::string first_centers = slurp(tmp("centers.csv"));
  CHECK(first_artifact.substr(0, 4) == "PIPE");
  CHECK(!first_centers.empty());
  CHECK(slurp(tmp("m.json")).find("\"schema_version\"") != std::string::npos);

  CHECK(run(flags) == 0);
  CHECK(slurp(tmp("coreset.bin")) == first_artifact);
  CHECK(slurp(tmp("centers.csv")) == first_centers);

  // eval consumes the artifact.
  std::string eval_flags = "eval --input " + tmp("pts.csv") + " --artifact " +
                           tmp("coreset.bin") +
                           " --k 3 --z 2 --queries 40 --ls-queries 2 --seed 7"
                           " --metrics " + tmp("eval.json");
  CHECK(run(eval_flags) == 0);
  std::string eval_out = slurp(tmp("eval.json"));
  CHECK(eval_out.find("\"max_rel_error\"") != std::string::npos);
}

TEST_CASE("empty input yields an empty run with n = 0") {
  TempFiles tmp("empty");
  {
    std::ofstream os(tmp("pts.csv"));
  }
  std::string flags = "cluster-stream --input " + tmp("pts.csv") +
                      " --k 2 --seed 1 --out " + tmp("coreset.bin") +
                      " --metrics " + tmp("m.json");
  CHECK(run(flags) == 0);
  std::string metrics = slurp(tmp("m.json"));
  CHECK(metrics.find("\"n\": 0") != std::string::npos);
}

TEST_CASE("embed-stream round trip with eval") {
  TempFiles tmp("embed");
  Rng rng(902);
  Matrix a = random_matrix(rng, 300, 5, 40.0);
  write_points_sckz(tmp("A.sckz"), to_int(a));

  std::string flags = "embed-stream --input " + tmp("A.sckz") +
                      " --p 2 --epsilon 0.1 --seed 7 --lambda-scale 0.05"
                      " --block-size 128 --out " + tmp("emb.bin") +
                      " --metrics " + tmp("m.json");
  CHECK(run(flags) == 0);
  std::string artifact = slurp(tmp("emb.bin"));
  CHECK(artifact.substr(0, 4) == "LPE1");
  CHECK(run(flags) == 0);
  CHECK(slurp(tmp("emb.bin")) == artifact);

  std::string eval_flags = "eval --input " + tmp("A.sckz") + " --artifact " +
                           tmp("emb.bin") + " --seed 3 --metrics " +
                           tmp("eval.json");
  CHECK(run(eval_flags) == 0);
  CHECK(slurp(tmp("eval.json")).find("\"min_ratio\"") != std::string::npos);
}

TEST_CASE("usage errors exit 2, data errors exit 3") {
  TempFiles tmp("errs");
  CHECK(run("embed-stream --input nowhere.csv --p 0.5") == 2);  // p < 1
  CHECK(run("cluster-stream") == 2);                            // missing input
  CHECK(run("nonsense-subcommand") == 2);
  CHECK(run("cluster-stream --input /nonexistent/file.csv --k 2") == 3);
  {
    std::ofstream os(tmp("bad.csv"));
    os << "1,2\nnot,numeric\n";
  }
  CHECK(run("cluster-stream --input " + tmp("bad.csv") + " --k 2") == 3);
  CHECK(run("oracle --op medoids-opt --input " + tmp("bad.csv")) == 3);
}

TEST_CASE("oracle singleton sensitivity is 1 and output is reproducible") {
  TempFiles tmp("oracle");
  {
    std::ofstream os(tmp("one.csv"));
    os << "5,9\n";
  }
  std::string flags = "oracle --op medoids-sens --input " + tmp("one.csv") +
                      " --index 0 --k 1 --z 2 --metrics " + tmp("o.json");
  CHECK(run(flags) == 0);
  std::string out = slurp(tmp("o.json"));
  CHECK(out.find("\"value\": 1.0") != std::string::npos);
  CHECK(run(flags) == 0);
  CHECK(slurp(tmp("o.json")) == out);
}

TEST_CASE("oracle output matches the committed golden file") {
  TempFiles tmp("golden");
  std::string flags = "oracle --op medoids-opt --input " + data_dir() +
                      "/golden_points.csv --k 2 --z 2 --metrics " +
                      tmp("golden.json");
  REQUIRE(run(flags) == 0);
  CHECK(slurp(tmp("golden.json")) == slurp(data_dir() + "/golden_oracle.json"));
}

TEST_CASE("solve reports centers and cost") {
  TempFiles tmp("solve");
  Rng rng(903);
  Dataset x = random_mixture(rng, 200, 2, 2, 512.0, 0.05);
  write_points_csv(tmp("pts.csv"), to_int(x.points));
  std::string flags = "solve --input " + tmp("pts.csv") +
                      " --k 2 --z 2 --seed 11 --centers-out " +
                      tmp("centers.csv") + " --metrics " + tmp("m.json");
  CHECK(run(flags) == 0);
  CHECK(slurp(tmp("m.json")).find("\"cost\"") != std::string::npos);
  PointsFile centers_ok = load_points(tmp("pts.csv"), false);
  CHECK(centers_ok.points.rows() == 200);
}

TEST_CASE("STREAMKIT_SEED is the seed fallback") {
  TempFiles tmp("envseed");
  Rng rng(904);
  Dataset x = random_mixture(rng, 300, 2, 2, 512.0, 0.05);
  write_points_csv(tmp("pts.csv"), to_int(x.points));
  std::string base = "cluster-stream --input " + tmp("pts.csv") +
                     " --k 2 --lambda-scale 0.05 --mr-block 64 --out ";
  std::string with_env = "STREAMKIT_SEED=42 " + cli() + " " + base +
                         tmp("a.bin") + " >/dev/null 2>&1";
  CHECK(WEXITSTATUS(std::system(with_env.c_str())) == 0);
  CHECK(run(base + tmp("b.bin") + " --seed 42") == 0);
  CHECK(slurp(tmp("a.bin")) == slurp(tmp("b.bin")));
}

TEST_CASE("weighted csv input replicates integer weights") {
  TempFiles tmp("weighted");
  {
    std::ofstream os(tmp("pts.csv"));
    os << "4,4,3\n9,9,1\n";
  }
  std::string flags = "cluster-stream --input " + tmp("pts.csv") +
                      " --weighted --k 2 --seed 5 --out " + tmp("c.bin") +
                      " --metrics " + tmp("m.json");
  CHECK(run(flags) == 0);
  CHECK(slurp(tmp("m.json")).find("\"n\": 4") != std::string::npos);
}
