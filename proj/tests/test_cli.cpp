#include <doctest.h>

#include <fstream>
#include <sstream>

#include "app.hpp"
#include "kcluster/affinity_matrix.hpp"
#include "kcluster/affinity_propagation.hpp"
#include "oracles.hpp"

using namespace kcluster;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "kcluster");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return app::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::string toy_bank = fixture::data_path("toy_bank.jsonl").string();
const std::string toy_log = fixture::data_path("toy_transactions.csv").string();

}  // namespace

TEST_CASE("exit codes for bad invocations") {
  fixture::TempDir dir;
  CHECK(run({}) == app::kConfigError);
  CHECK(run({"no-such-command"}) == app::kConfigError);
  CHECK(run({"--help"}) == app::kOk);
  CHECK(run({"congruity", "--bank", (dir / "missing.jsonl").string(), "--out", (dir / "a.csv").string()}) ==
        app::kConfigError);

  {
    std::ofstream bad(dir / "bad.jsonl");
    bad << "{not json}\n";
  }
  CHECK(run({"ingest-check", "--bank", (dir / "bad.jsonl").string()}) == app::kConfigError);
  CHECK(run({"congruity", "--bank", toy_bank, "--backend", "carrier-pigeon", "--out", (dir / "a.csv").string()}) ==
        app::kConfigError);
  CHECK(run({"congruity", "--bank", toy_bank, "--backend", "remote:http://127.0.0.1:1", "--out",
             (dir / "a.csv").string()}) == app::kBackendError);
}

TEST_CASE("ingest-check accepts the toy data") {
  CHECK(run({"ingest-check", "--bank", toy_bank, "--transactions", toy_log, "--kc-model", "@expert"}) == app::kOk);
}

TEST_CASE("stage by stage equals the library") {
  fixture::TempDir dir;
  const auto aff = (dir / "aff.csv").string(), asg = (dir / "asg.json").string(), con = (dir / "c.csv").string(),
             kcm = (dir / "kc.csv").string();
  REQUIRE(run({"congruity", "--bank", toy_bank, "--out", aff, "--jobs", "2"}) == app::kOk);
  REQUIRE(run({"cluster", "--affinity", aff, "--out", asg}) == app::kOk);
  REQUIRE(run({"concepts", "--bank", toy_bank, "--out", con}) == app::kOk);
  REQUIRE(run({"kc-build", "--bank", toy_bank, "--concepts", con, "--assignment", asg, "--out", kcm}) == app::kOk);
  CHECK(load_assignment(asg) == cluster(load_affinity(aff)));

  const auto bank = load_bank(toy_bank);
  const auto model = load_kc_model(kcm, bank);
  CHECK(model.question_ids == bank.ids());

  CHECK(run({"align", "--bank", toy_bank, "--kc-model", kcm, "--out", (dir / "m.json").string()}) == app::kOk);
  CHECK(run({"afm-fit", "--bank", toy_bank, "--transactions", toy_log, "--kc-model", kcm, "--out",
             (dir / "fit.json").string()}) == app::kOk);
  CHECK(run({"afm-cv", "--bank", toy_bank, "--transactions", toy_log, "--kc-model", "@expert", "--cv-seeds", "4",
             "--out", (dir / "cv.csv").string()}) == app::kOk);
  CHECK(load_cv_report(dir / "cv.csv").rmse.size() == 4);
  CHECK(run({"curves", "--bank", toy_bank, "--transactions", toy_log, "--kc-model", "@expert", "--out",
             (dir / "curves").string()}) == app::kOk);
  CHECK_FALSE(fs::is_empty(dir / "curves"));
  CHECK(run({"embed", "--bank", toy_bank, "--out", (dir / "emb").string()}) == app::kOk);
  CHECK(fs::exists(dir / "emb.bin"));
}

TEST_CASE("strict mode reports non-convergence") {
  fixture::TempDir dir;
  const auto aff = (dir / "aff.csv").string();
  REQUIRE(run({"congruity", "--bank", toy_bank, "--out", aff}) == app::kOk);
  CHECK(run({"cluster", "--affinity", aff, "--max-iters", "3", "--stable-window", "3", "--damping", "0.99",
             "--strict", "--out", (dir / "a.json").string()}) == app::kNotConverged);
  CHECK(run({"cluster", "--affinity", aff, "--damping", "1.5", "--out", (dir / "a.json").string()}) ==
        app::kConfigError);
}

TEST_CASE("pipeline without transactions stops after clustering") {
  fixture::TempDir dir;
  CHECK(run({"pipeline", "--bank", toy_bank, "--method", "kcluster", "--out", dir.path().string()}) == app::kOk);
  CHECK(fs::exists(dir / "concepts.csv"));
  CHECK(fs::exists(dir / "kcluster/kc_model.csv"));
  CHECK(fs::exists(dir / "kcluster/assignment.json"));
  CHECK(fs::exists(dir / "kcluster/metrics.json"));
  CHECK_FALSE(fs::exists(dir / "kcluster/fit.json"));
  CHECK_FALSE(fs::exists(dir / "summary.json"));
}

TEST_CASE("pipeline end to end is reproducible") {
  fixture::TempDir a, b;
  const std::vector<std::string> common{"pipeline", "--bank",     toy_bank, "--transactions", toy_log,
                                        "--method", "all",        "--cv-seeds", "3",          "--jobs",
                                        "4"};
  auto args = common;
  args.insert(args.end(), {"--out", a.path().string()});
  REQUIRE(run(args) == app::kOk);
  args = common;
  args.insert(args.end(), {"--out", b.path().string()});
  REQUIRE(run(args) == app::kOk);
  for (const char* m : {"concept", "concept-emb", "question-emb", "kcluster"}) {
    CAPTURE(m);
    CHECK(fs::exists(a / (std::string(m) + "/fit.json")));
    CHECK(slurp(a / (std::string(m) + "/kc_model.csv")) == slurp(b / (std::string(m) + "/kc_model.csv")));
    CHECK(slurp(a / (std::string(m) + "/cv.csv")) == slurp(b / (std::string(m) + "/cv.csv")));
  }
  CHECK(fs::exists(a / "summary.md"));
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
}

TEST_CASE("dfa command") {
  fixture::TempDir dir;
  CHECK(run({"dfa", "--bank", toy_bank, "--transactions", toy_log, "--kc-model", "@expert", "--cv-seeds", "3",
             "--out", dir.path().string()}) == app::kOk);
}
