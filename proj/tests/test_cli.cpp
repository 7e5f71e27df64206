#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hebb/persistence.hpp"
#include "hebb/retrieval.hpp"
#include "support.hpp"

using namespace hebb;
namespace fs = std::filesystem;

namespace {

#ifndef HEBB_CLI_PATH
#define HEBB_CLI_PATH "hebbcbir"
#endif

std::string cli_path() {
  const char* env = std::getenv("HEBB_CLI");
  return env ? env : HEBB_CLI_PATH;
}

struct RunResult {
  int exit_code = -1;
  std::string out, err;
};

std::string slurp_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = cli_path() + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult res;
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  res.out = slurp_text(out);
  res.err = slurp_text(err);
  return res;
}

std::vector<char> slurp_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const std::string kTinyData =
    "--dataset synthetic --synth-train 160 --synth-val 60 --synth-test 60 --net smoke "
    "--batch-size 32";

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("usage and validation failures exit with code 2") {
  auto dir = testsupport::temp_dir("cli-usage");
  CHECK(run("definitely-not-a-command", dir).exit_code == 2);
  CHECK(run("finetune --regime 7 --out x.ckpt --dataset synthetic", dir).exit_code == 2);
  auto missing = run("pretrain --dataset cifar10 --data-dir /no/such/dir --out x.ckpt", dir);
  CHECK(missing.exit_code == 2);
  CHECK(missing.err.find("missing data directory") != std::string::npos);
  CHECK(run("sweep --regime 5 --seeds 0 --dataset synthetic", dir).exit_code == 2);
  fs::remove_all(dir);
}

TEST_CASE("HEBB_CBIR_DATA supplies the default data directory") {
  auto dir = testsupport::temp_dir("cli-env");
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = "HEBB_CBIR_DATA=/env/does/not/exist " + cli_path() +
                          " pretrain --dataset cifar10 --out x.ckpt >" + out.string() + " 2>" +
                          err.string();
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);
  CHECK(slurp_text(err).find("/env/does/not/exist") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("full-scale reproduction warns about the runtime before touching data") {
  auto dir = testsupport::temp_dir("cli-full");
  auto r = run("reproduce --table cifar10 --scale full --data-dir /no/such/dir", dir);
  CHECK(r.exit_code == 2);  // still fails fast on the missing archive
  CHECK(r.err.find("full-scale reproduction") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("pretrain smoke run logs one stats row per trainable layer and is reproducible") {
  auto dir = testsupport::temp_dir("cli-pretrain");
  const std::string base = "pretrain " + kTinyData + " --hpca-epochs 1 --seed 9";
  auto r1 = run(base + " --out " + (dir / "a.ckpt").string() + " --metrics " +
                    (dir / "a.csv").string() + " --run-id pre",
                dir);
  REQUIRE(r1.exit_code == 0);

  auto rows = parse_metrics((dir / "a.csv").string());
  std::size_t repr_rows = 0;
  for (const auto& row : rows)
    if (row.phase == "pretrain" && row.metric.rfind("repr_error.", 0) == 0) ++repr_rows;
  CHECK(repr_rows == 5);  // four conv layers plus the internal dense layer

  auto r2 = run(base + " --out " + (dir / "b.ckpt").string() + " --metrics " +
                    (dir / "b.csv").string() + " --run-id pre",
                dir);
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp_bytes(dir / "a.ckpt") == slurp_bytes(dir / "b.ckpt"));
  fs::remove_all(dir);
}

TEST_CASE("finetune writes best_epoch and the no-pretraining baseline runs") {
  auto dir = testsupport::temp_dir("cli-finetune");
  auto r = run("finetune " + kTinyData +
                   " --from none --regime 100 --layer 5 --epochs 2 --seed 4 --out " +
                   (dir / "ft.ckpt").string() + " --metrics " + (dir / "ft.csv").string() +
                   " --run-id ft",
               dir);
  REQUIRE(r.exit_code == 0);
  bool saw_best = false;
  for (const auto& row : parse_metrics((dir / "ft.csv").string()))
    if (row.metric == "best_epoch") saw_best = true;
  CHECK(saw_best);

  Checkpoint ckpt = load_checkpoint((dir / "ft.ckpt").string());
  CHECK(ckpt.prov.phase == "finetuned");
  CHECK(ckpt.prov.regime == 100);
  CHECK(fs::exists(dir / "ft.ckpt.run"));
  fs::remove_all(dir);
}

TEST_CASE("sweep: single-seed report has no interval, multi-seed does") {
  auto dir = testsupport::temp_dir("cli-sweep");
  const std::string common = "sweep " + kTinyData +
                             " --from none --regime 25 --epochs 1 --seed 3 --out ";
  auto one = run(common + (dir / "one.txt").string() + " --seeds 1 --metrics " +
                     (dir / "one.csv").string(),
                 dir);
  REQUIRE(one.exit_code == 0);
  CHECK(slurp_text(dir / "one.txt").find("\xc2\xb1") == std::string::npos);

  auto three = run(common + (dir / "three.txt").string() + " --seeds 3 --metrics " +
                       (dir / "three.csv").string(),
                   dir);
  REQUIRE(three.exit_code == 0);
  CHECK(slurp_text(dir / "three.txt").find("\xc2\xb1") != std::string::npos);
  bool saw_ci = false;
  for (const auto& row : parse_metrics((dir / "three.csv").string()))
    if (row.metric == "ci95_map") saw_ci = true;
  CHECK(saw_ci);
  fs::remove_all(dir);
}

TEST_CASE("a sweep rerun from its .run file reproduces the metrics byte for byte") {
  auto dir = testsupport::temp_dir("cli-rerun");
  const fs::path report = dir / "rep.txt";
  auto first = run("sweep " + kTinyData +
                       " --from hpca --hpca-epochs 1 --regime 25 --epochs 1 --seeds 1 --seed 8 "
                       "--run-id rerun --out " +
                       report.string() + " --metrics " + (dir / "m1.csv").string(),
                   dir);
  REQUIRE(first.exit_code == 0);
  REQUIRE(fs::exists(report.string() + ".run"));

  auto second = run("sweep --config " + report.string() + ".run --metrics " +
                        (dir / "m2.csv").string(),
                    dir);
  REQUIRE(second.exit_code == 0);
  CHECK(slurp_bytes(dir / "m1.csv") == slurp_bytes(dir / "m2.csv"));
  fs::remove_all(dir);
}

TEST_CASE("extract + eval-map reproduce the library mAP exactly") {
  auto dir = testsupport::temp_dir("cli-eval");
  const fs::path ckpt = dir / "pre.ckpt";
  REQUIRE(run("pretrain " + kTinyData + " --hpca-epochs 1 --seed 5 --out " + ckpt.string(), dir)
              .exit_code == 0);

  const fs::path dbf = dir / "db.feat";
  const fs::path qf = dir / "q.feat";
  REQUIRE(run("extract " + kTinyData + " --seed 5 --ckpt " + ckpt.string() +
                  " --layer 2 --split train --out " + dbf.string(),
              dir)
              .exit_code == 0);
  REQUIRE(run("extract " + kTinyData + " --seed 5 --ckpt " + ckpt.string() +
                  " --layer 2 --split test --out " + qf.string(),
              dir)
              .exit_code == 0);

  auto r = run("eval-map --feat " + dbf.string() + " --query-feat " + qf.string() +
                   " --metrics " + (dir / "e.csv").string(),
               dir);
  REQUIRE(r.exit_code == 0);
  // stdout: "mAP <value> over ..."
  double printed = -1.0;
  std::sscanf(r.out.c_str(), "mAP %lf", &printed);
  auto want = evaluate_map_stores(load_features(dbf.string()), load_features(qf.string()));
  CHECK(printed == want.map);
  fs::remove_all(dir);
}

TEST_CASE("query ranks an identical image first at distance zero and clamps topk") {
  auto dir = testsupport::temp_dir("cli-query");
  const fs::path ckpt = dir / "pre.ckpt";
  const fs::path dbf = dir / "db.feat";
  REQUIRE(run("pretrain " + kTinyData + " --hpca-epochs 1 --seed 6 --out " + ckpt.string(), dir)
              .exit_code == 0);
  REQUIRE(run("extract " + kTinyData + " --seed 6 --ckpt " + ckpt.string() +
                  " --layer 1 --split train --out " + dbf.string(),
              dir)
              .exit_code == 0);

  // raw bytes of train image 12: the synthetic pixels are u8-quantized
  Dataset train = make_synthetic(160, 10, derive_seed(6, "synth-train"), 1.0);
  const std::int64_t chw = 3 * 32 * 32;
  std::ofstream img(dir / "img.bin", std::ios::binary);
  for (std::int64_t k = 0; k < chw; ++k) {
    const auto byte = static_cast<unsigned char>(std::lround(train.images[12 * chw + k] * 255.0f));
    img.put(static_cast<char>(byte));
  }
  img.close();

  auto r = run("query --feat " + dbf.string() + " --ckpt " + ckpt.string() + " --image " +
                   (dir / "img.bin").string() + " --topk 1000000",
               dir);
  REQUIRE(r.exit_code == 0);
  CHECK(r.err.find("clamped") != std::string::npos);
  // first result row: "1 <index> <label> <distance>"
  std::istringstream lines(r.out);
  std::string header;
  std::getline(lines, header);
  long rank_pos = 0, index = -1;
  int label = -1;
  double distance = -1.0;
  lines >> rank_pos >> index >> label >> distance;
  CHECK(rank_pos == 1);
  CHECK(index == 12);
  CHECK(distance == 0.0);

  auto bad = run("query --feat " + dbf.string() + " --ckpt " + ckpt.string() + " --image " +
                     (dir / "missing.bin").string() + " --topk 5",
                 dir);
  CHECK(bad.exit_code == 2);
  fs::remove_all(dir);
}

TEST_SUITE_END();
