#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dart/dataset.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = DART_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path work() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "dart_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run("--help") == 0);
  CHECK(run("train --help") == 0);
  CHECK(run("") == 1);
  CHECK(run("no-such-command") == 1);
  CHECK(run("train --data") == 1);
}

TEST_CASE("pipeline") {
  const fs::path w = work();
  const std::string gen = "gen-data --images 96 --noise 0 --seed 3 --out ";
  REQUIRE(run(gen + q(w / "a")) == 0);
  REQUIRE(run(gen + q(w / "b")) == 0);
  for (const char* f : {"dataset.jsonl", "vocab.json", "llm_fixtures.jsonl"}) {
    CHECK(slurp(w / "a" / f) == slurp(w / "b" / f));
    CHECK_FALSE(slurp(w / "a" / f).empty());
  }
  const json man = json::parse(slurp(w / "a" / "gen-data.manifest.json"));
  CHECK(man.contains("argv"));
  CHECK(man.at("seed") == 3);

  SUBCASE("graph mining replays byte for byte") {
    const std::string crg = "build-crg --vocab " + q(w / "a" / "vocab.json") + " --fixtures " +
                            q(w / "a" / "llm_fixtures.jsonl") + " --out ";
    REQUIRE(run(crg + q(w / "g1")) == 0);
    REQUIRE(run(crg + q(w / "g2") + " --max-in-flight 1") == 0);
    CHECK(slurp(w / "g1" / "graph.json") == slurp(w / "g2" / "graph.json"));
    CHECK(slurp(w / "g1" / "relations.jsonl") == slurp(w / "g2" / "relations.jsonl"));

    // fixtures for a different vocabulary cannot answer these queries
    const fs::path nature = fs::path(DART_FIXTURE_DIR) / "crg_nature" / "fixtures.jsonl";
    CHECK(run("build-crg --vocab " + q(w / "a" / "vocab.json") + " --fixtures " + q(nature) + " --out " +
              q(w / "g3")) == 1);
    CHECK(run("build-crg --vocab " + q(w / "nope.json") + " --fixtures " + q(nature)) == 2);
  }

  SUBCASE("eval with the oracle") {
    const std::string base = "eval --oracle --data " + q(w / "a" / "dataset.jsonl") + " --vocab " +
                             q(w / "a" / "vocab.json") + " --mode zsl,gzsl --k 1,3 --out ";
    REQUIRE(run(base + q(w / "ev")) == 0);
    const json r = json::parse(slurp(w / "ev" / "eval.json"));
    CHECK(r["reports"]["zsl"]["mAP"] == 1.0);
    CHECK(r["reports"]["gzsl"]["mAP"] == 1.0);
    const std::string csv = slurp(w / "ev" / "eval.csv");
    CHECK(csv.rfind("mode,k,precision,recall,f1,map\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  }

  SUBCASE("train, eval and export") {
    const fs::path a = w / "a";
    REQUIRE(run("build-crg --vocab " + q(a / "vocab.json") + " --fixtures " + q(a / "llm_fixtures.jsonl") +
                " --out " + q(w / "g")) == 0);
    const std::string train_base = "train --data " + q(a / "dataset.jsonl") + " --vocab " + q(a / "vocab.json") +
                                   " --graph " + q(w / "g" / "graph.json");
    const std::string train = train_base + " --steps 5 --out ";
    REQUIRE(run(train + q(w / "r1")) == 0);
    REQUIRE(run(train + q(w / "r2")) == 0);
    CHECK(slurp(w / "r1" / "train_log.csv") == slurp(w / "r2" / "train_log.csv"));
    CHECK(slurp(w / "r1" / "checkpoint.bin") == slurp(w / "r2" / "checkpoint.bin"));
    const std::string log = slurp(w / "r1" / "train_log.csv");
    CHECK(std::count(log.begin(), log.end(), '\n') == 6);

    CHECK(run("eval --checkpoint " + q(w / "r1" / "checkpoint.bin") + " --data " + q(a / "dataset.jsonl") +
              " --out " + q(w / "ev2")) == 0);
    CHECK(run("train --data " + q(a / "dataset.jsonl") + " --vocab " + q(a / "vocab.json") + " --graph " +
              q(w / "g" / "graph.json") + " --config " + q(w / "missing.json")) == 2);

    // untrained model: brightest cell must be a planted patch
    REQUIRE(run(train_base + " --steps 0 --out " + q(w / "r0")) == 0);
    const dart::Dataset data = dart::Dataset::load(a / "dataset.jsonl");
    const dart::PatchBag* bag = nullptr;
    for (const auto& b : data.bags)
      if (b.split == "test" && b.planted.size() == 1) {
        bag = &b;
        break;
      }
    REQUIRE(bag != nullptr);
    const auto [cls, planted] = *bag->planted.begin();
    REQUIRE(run("export-maps --checkpoint " + q(w / "r0" / "checkpoint.bin") + " --data " + q(a / "dataset.jsonl") +
                " --image-id " + bag->id + " --class " + std::to_string(cls) + " --out " + q(w / "m")) == 0);
    const std::string pgm = slurp(w / "m" / "patch_scores.pgm");
    const std::string header = "P5 4 4 255\n";
    REQUIRE(pgm.rfind(header, 0) == 0);
    REQUIRE(pgm.size() == header.size() + 16);
    std::size_t brightest = 0;
    for (std::size_t i = 0; i < 16; ++i)
      if (static_cast<unsigned char>(pgm[header.size() + i]) == 255) brightest = i;
    CHECK(std::find(planted.begin(), planted.end(), static_cast<dart::Index>(brightest)) != planted.end());
    const std::string scores = slurp(w / "m" / "patch_scores.csv");
    CHECK(std::count(scores.begin(), scores.end(), '\n') == 17);
    const std::string att = slurp(w / "m" / "attention.csv");
    CHECK(att.rfind("stage,layer,head,c,j,alpha\n", 0) == 0);
    CHECK(run("export-maps --checkpoint " + q(w / "r0" / "checkpoint.bin") + " --data " + q(a / "dataset.jsonl") +
              " --image-id nope --class 0 --out " + q(w / "m2")) == 1);
  }
}

TEST_CASE("gradcheck exit status") {
  const fs::path w = work();
  CHECK(run("gradcheck --out " + q(w / "gc")) == 0);
  const json r = json::parse(slurp(w / "gc" / "gradcheck.json"));
  CHECK(r.contains("groups"));
  CHECK(run("gradcheck --tolerance 1e-12") == 1);
}
