#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gbnet/data_io.hpp"
#include "gbnet/engine.hpp"
#include "gbnet/model_store.hpp"
#include "support/synthetic.hpp"

using namespace gbnet;
using namespace gbnet::testing;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("gbnet_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args, const std::string& stdout_path = "/dev/null",
            const std::string& stderr_path = "/dev/null") {
  const std::string cmd =
      std::string(GBNET_CLI_PATH) + " " + args + " >" + stdout_path + " 2>" + stderr_path;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

void write_regression_csv(const std::string& path, std::size_t n, std::uint64_t seed) {
  RngState rng(seed);
  DataSet ds;
  ds.features = Matrix(n, 3);
  ds.targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) ds.features(i, c) = rng.uniform(-1.0, 1.0);
    ds.targets[i] = 2.0 * ds.features(i, 0) - ds.features(i, 1) + 0.2 * rng.normal();
  }
  save_delimited(ds, path);
}

}  // namespace

TEST_CASE("train writes a reloadable model and a well-formed log") {
  TempDir tmp;
  write_regression_csv(tmp.file("train.csv"), 200, 3);
  const std::string base = "train --task regression --train " + tmp.file("train.csv") +
                           " --num-stages 3 --batch-size 64 --hidden-dims 4,4 --seed 5" +
                           " --model-out " + tmp.file("m.json") + " --log-out " +
                           tmp.file("log.csv");
  CHECK(run_cli(base, tmp.file("out.txt")) == 0);
  CHECK(std::filesystem::exists(tmp.file("m.json")));
  CHECK(std::filesystem::exists(tmp.file("log.csv")));

  // Header plus exactly K data rows.
  const std::string log = slurp(tmp.file("log.csv"));
  CHECK(count_lines(log) == 4);

  // The log is parseable delimited numeric text.
  DataSet parsed = load_delimited(tmp.file("log.csv"), 0, ',', true);
  CHECK(parsed.num_rows() == 3);
  CHECK(parsed.feature_dim() == 7);  // stage_loss, corrective_loss, val_metric, 3 alphas, seconds

  // The reported selection is printed.
  const std::string out = slurp(tmp.file("out.txt"));
  CHECK(out.find("selected num_learners") != std::string::npos);

  // Model archive loads and predicts.
  Ensemble model = load_model(tmp.file("m.json"));
  CHECK(model.num_stages() == 3);
}

TEST_CASE("training logs are byte-identical across reruns of the same seed") {
  TempDir tmp;
  write_regression_csv(tmp.file("train.csv"), 150, 7);
  auto once = [&](const std::string& log_name) {
    const std::string cmd = "train --task regression --train " + tmp.file("train.csv") +
                            " --num-stages 2 --batch-size 32 --hidden-dims 4 --seed 11" +
                            " --model-out " + tmp.file("m.json") + " --log-out " +
                            tmp.file(log_name);
    CHECK(run_cli(cmd) == 0);
  };
  once("log1.csv");
  once("log2.csv");
  CHECK(slurp(tmp.file("log1.csv")) == slurp(tmp.file("log2.csv")));
}

TEST_CASE("the seed environment variable matches the explicit flag") {
  TempDir tmp;
  write_regression_csv(tmp.file("train.csv"), 120, 9);
  const std::string common = "train --task regression --train " + tmp.file("train.csv") +
                             " --num-stages 2 --batch-size 32 --hidden-dims 4 --model-out " +
                             tmp.file("m.json");
  CHECK(run_cli(common + " --seed 21 --log-out " + tmp.file("flag.csv")) == 0);
  ::setenv("GBNET_SEED", "21", 1);
  CHECK(run_cli(common + " --log-out " + tmp.file("env.csv")) == 0);
  ::unsetenv("GBNET_SEED");
  CHECK(slurp(tmp.file("flag.csv")) == slurp(tmp.file("env.csv")));
}

TEST_CASE("predict writes one row per input row and honors prefixes") {
  TempDir tmp;
  write_regression_csv(tmp.file("train.csv"), 200, 3);
  write_regression_csv(tmp.file("score.csv"), 40, 4);
  CHECK(run_cli("train --task regression --train " + tmp.file("train.csv") +
                " --num-stages 3 --batch-size 64 --hidden-dims 4,4 --seed 5 --model-out " +
                tmp.file("m.json") + " --log-out " + tmp.file("log.csv")) == 0);

  CHECK(run_cli("predict --model " + tmp.file("m.json") + " --data " + tmp.file("score.csv") +
                " --output " + tmp.file("pred.csv") + " --num-learners 2") == 0);
  DataSet preds = load_delimited(tmp.file("pred.csv"), 0, ',', true);
  CHECK(preds.num_rows() == 40);

  // Prefix prediction agrees with the library.
  Ensemble model = load_model(tmp.file("m.json"));
  DataSet score_data = load_delimited(tmp.file("score.csv"), 0);
  std::vector<double> expect = predict(model, score_data.features, 2);
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(preds.targets[i] == doctest::Approx(expect[i]).epsilon(1e-15));
  }
}

TEST_CASE("a prior-only archive predicts a constant column") {
  TempDir tmp;
  Ensemble prior_only;
  prior_only.task = TaskKind::regression();
  prior_only.prior = 2.5;
  prior_only.feature_dim = 3;
  save_model(prior_only, tmp.file("prior.json"));
  write_regression_csv(tmp.file("score.csv"), 10, 4);
  CHECK(run_cli("predict --model " + tmp.file("prior.json") + " --data " + tmp.file("score.csv") +
                " --output " + tmp.file("pred.csv")) == 0);
  DataSet preds = load_delimited(tmp.file("pred.csv"), 0, ',', true);
  for (double v : preds.targets) CHECK(v == 2.5);
}

TEST_CASE("predict rejects dimension mismatches with both dims named") {
  TempDir tmp;
  Ensemble model;
  model.task = TaskKind::regression();
  model.feature_dim = 7;
  save_model(model, tmp.file("m.json"));
  write_regression_csv(tmp.file("score.csv"), 10, 4);  // 3 features
  CHECK(run_cli("predict --model " + tmp.file("m.json") + " --data " + tmp.file("score.csv") +
                    " --output " + tmp.file("pred.csv"),
                "/dev/null", tmp.file("err.txt")) != 0);
  const std::string err = slurp(tmp.file("err.txt"));
  CHECK(err.find("7") != std::string::npos);
  CHECK(err.find("3") != std::string::npos);
}

TEST_CASE("evaluate prints the task metric and rejects mismatched metrics") {
  TempDir tmp;
  write_regression_csv(tmp.file("train.csv"), 200, 3);
  CHECK(run_cli("train --task regression --train " + tmp.file("train.csv") +
                " --num-stages 2 --batch-size 64 --hidden-dims 4 --seed 5 --model-out " +
                tmp.file("m.json") + " --log-out " + tmp.file("log.csv")) == 0);

  CHECK(run_cli("evaluate --model " + tmp.file("m.json") + " --data " + tmp.file("train.csv"),
                tmp.file("eval.txt")) == 0);
  CHECK(slurp(tmp.file("eval.txt")).find("rmse") != std::string::npos);

  CHECK(run_cli("evaluate --model " + tmp.file("m.json") + " --data " + tmp.file("train.csv") +
                    " --metric ndcg@5",
                "/dev/null", tmp.file("err.txt")) != 0);
  CHECK(slurp(tmp.file("err.txt")).find("not valid") != std::string::npos);
}

TEST_CASE("ranking evaluation reports NDCG at both cutoffs") {
  TempDir tmp;
  RngState rng(5);
  DataSet train = make_ranking_data(20, 10, rng);
  save_svmlight(train, tmp.file("rank.svm"));
  CHECK(run_cli("train --task ranking --train " + tmp.file("rank.svm") +
                " --num-stages 2 --batch-size 64 --hidden-dims 4 --seed 5 --val-fraction 0.2"
                " --model-out " +
                tmp.file("m.json") + " --log-out " + tmp.file("log.csv")) == 0);
  CHECK(run_cli("evaluate --model " + tmp.file("m.json") + " --data " + tmp.file("rank.svm"),
                tmp.file("eval.txt")) == 0);
  const std::string out = slurp(tmp.file("eval.txt"));
  CHECK(out.find("ndcg@5") != std::string::npos);
  CHECK(out.find("ndcg@10") != std::string::npos);
}

TEST_CASE("ablate compares the requested variants under a shared seed") {
  TempDir tmp;
  write_regression_csv(tmp.file("train.csv"), 150, 3);
  CHECK(run_cli("ablate --task regression --train " + tmp.file("train.csv") +
                    " --num-stages 2 --batch-size 32 --hidden-dims 4 --seed 5 --variants full "
                    "no_cs",
                tmp.file("table.txt")) == 0);
  const std::string table = slurp(tmp.file("table.txt"));
  CHECK(count_lines(table) == 3);  // header + 2 variants
  CHECK(table.find("full") != std::string::npos);
  CHECK(table.find("no_cs") != std::string::npos);

  CHECK(run_cli("ablate --task regression --train " + tmp.file("train.csv") +
                    " --num-stages 2 --variants bogus",
                "/dev/null", tmp.file("err.txt")) != 0);
  const std::string err = slurp(tmp.file("err.txt"));
  CHECK(err.find("bogus") != std::string::npos);
  CHECK(err.find("constant_alpha") != std::string::npos);  // lists the valid names
}

TEST_CASE("config files feed defaults and flags win") {
  TempDir tmp;
  write_regression_csv(tmp.file("train.csv"), 150, 3);
  {
    std::ofstream cfg(tmp.file("run.cfg"));
    cfg << "task=regression\n"
        << "train=" << tmp.file("train.csv") << "\n"
        << "num-stages=2\n"
        << "batch-size=32\n"
        << "hidden-dims=4\n"
        << "seed=5\n"
        << "model-out=" << tmp.file("m.json") << "\n"
        << "log-out=" << tmp.file("log.csv") << "\n";
  }
  CHECK(run_cli("train --config " + tmp.file("run.cfg")) == 0);
  CHECK(count_lines(slurp(tmp.file("log.csv"))) == 3);  // header + 2 stages

  // The command line overrides the file.
  CHECK(run_cli("train --config " + tmp.file("run.cfg") + " --num-stages 4") == 0);
  CHECK(count_lines(slurp(tmp.file("log.csv"))) == 5);
}
