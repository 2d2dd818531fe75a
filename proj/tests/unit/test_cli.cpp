#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "halunet/checkpoint.hpp"
#include "halunet/cli.hpp"
#include "halunet/score_file.hpp"

using namespace halunet;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args, const std::string& input = {}) {
  std::istringstream in(input);
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("halunet-cli-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("cli: synth, train, eval, score round trip") {
  TempDir dir;
  const auto train_path = dir / "train.hfj";
  const auto test_path = dir / "test.hfj";
  const auto model = dir / "m.ckpt";
  REQUIRE(cli({"synth", "--out", train_path, "--n", "600", "--seed", "1"}).code == 0);
  REQUIRE(cli({"synth", "--out", test_path, "--n", "400", "--seed", "2"}).code == 0);

  auto t = cli({"train", "--data", train_path, "--out", model, "--seed", "3", "--epochs", "8",
                "--quiet"});
  INFO(t.err);
  REQUIRE(t.code == 0);
  CHECK(fs::exists(model + ".report.json"));
  REQUIRE(cli({"train", "--data", train_path, "--out", dir / "lr.json", "--baseline", "logistic"})
              .code == 0);

  auto e = cli({"eval", "--data", test_path, "--model", model, "--baseline", "pe,tnll,logistic",
                "--logistic-model", dir / "lr.json", "--out", dir / "ev"});
  INFO(e.err);
  REQUIRE(e.code == 0);
  std::vector<std::string> ids;
  for (const std::string name : {"halunet", "pe", "tnll", "logistic"}) {
    const auto prefix = dir / ("ev." + name);
    REQUIRE(fs::exists(prefix + ".eval.json"));
    REQUIRE(fs::exists(prefix + ".curve.txt"));
    const auto scores = load_scores(prefix + ".scores.tsv");
    CHECK(scores.size() == 400);
    std::vector<std::string> these;
    for (const auto& s : scores) these.push_back(s.id);
    if (ids.empty()) ids = these;
    CHECK(these == ids);
  }
  const auto report = nlohmann::json::parse(slurp(dir / "ev.halunet.eval.json"));
  CHECK(report["auroc"].get<double>() >= 0.95);
  CHECK(report["n"].get<int>() == 400);

  // Scoring: one line per record, or one record by id, or a stdin stream.
  auto s = cli({"score", "--model", model, "--data", test_path});
  CHECK(s.code == 0);
  CHECK(count_lines(s.out) == 400);
  auto one = cli({"score", "--model", model, "--data", test_path, "--id", "synth-7"});
  CHECK(one.code == 0);
  CHECK(one.out.rfind("synth-7\t", 0) == 0);
  auto stream = cli({"score", "--model", model, "--data", "-"}, slurp(test_path));
  CHECK(stream.out == s.out);
  CHECK(cli({"score", "--model", model, "--data", test_path, "--id", "nope"}).code == 1);
}

TEST_CASE("cli: flags, config files and checkpoint precedence") {
  TempDir dir;
  const auto data = dir / "d.hfj";
  REQUIRE(cli({"synth", "--out", data, "--n", "80", "--d-emb", "6", "--seed", "5"}).code == 0);

  // Flags pick the architecture; d_emb follows the data.
  const auto m1 = dir / "m1.ckpt";
  REQUIRE(cli({"train", "--data", data, "--out", m1, "--features", "ent,emb", "--encoder", "mixed",
               "--fusion", "attention", "--d-h", "8", "--d-mlp", "8", "--d-a", "4", "--epochs",
               "1", "--quiet"})
              .code == 0);
  const auto ck1 = load_checkpoint(m1);
  CHECK(ck1.config.d_emb == 6);
  CHECK(ck1.config.fusion == FusionKind::kAttention);
  REQUIRE(ck1.config.branches.size() == 2);
  CHECK(ck1.config.branches[0].encoder == EncoderKind::kMlpPool);
  CHECK(ck1.config.d_conv == 8);

  // The config file wins over flags.
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << R"({"fusion": "concat_mlp", "d_h": 4, "d_conv": 4, "pooling_masked": false,
               "branches": [{"feature": "ll", "encoder": "cnn"}], "max_epochs": 1})";
  }
  const auto m2 = dir / "m2.ckpt";
  auto r = cli({"train", "--data", data, "--out", m2, "--fusion", "attention", "--config",
                dir / "cfg.json", "--quiet"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto ck2 = load_checkpoint(m2);
  CHECK(ck2.config.fusion == FusionKind::kConcatMlp);
  CHECK(ck2.config.d_h == 4);
  CHECK_FALSE(ck2.config.pooling_masked);
  const auto rep = nlohmann::json::parse(slurp(m2 + ".report.json"));
  CHECK(rep["epochs"].size() == 1);
  CHECK(rep["model_config"]["fusion"] == "concat_mlp");

  // Per-branch encoders from flags.
  const auto m3 = dir / "m3.ckpt";
  REQUIRE(cli({"train", "--data", data, "--out", m3, "--branches", "ll:mlp_pool,emb:cnn",
               "--epochs", "1", "--quiet"})
              .code == 0);
  const auto ck3 = load_checkpoint(m3);
  CHECK(ck3.config.branches[0].encoder == EncoderKind::kMlpPool);
  CHECK(ck3.config.branches[1].feature == Feature::kEmbedding);

  // Scoring uses the checkpoint's own config; no architecture flags needed.
  CHECK(cli({"score", "--model", m2, "--data", data}).code == 0);
  // A d_emb that contradicts the data is refused.
  CHECK(cli({"train", "--data", data, "--out", dir / "x", "--d-emb", "7"}).code == 1);
}

TEST_CASE("cli: training is reproducible") {
  TempDir dir;
  const auto data = dir / "d.hfj";
  REQUIRE(cli({"synth", "--out", data, "--n", "120", "--seed", "8"}).code == 0);
  const std::vector<std::string> common{"--data", data, "--seed", "4", "--epochs", "2",
                                        "--d-h", "8", "--d-mlp", "8", "--quiet"};
  auto with_out = [&](const std::string& out) {
    auto args = common;
    args.insert(args.begin(), "train");
    args.push_back("--out");
    args.push_back(out);
    return args;
  };
  REQUIRE(cli(with_out(dir / "a.ckpt")).code == 0);
  REQUIRE(cli(with_out(dir / "b.ckpt")).code == 0);
  CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));
  CHECK(slurp(dir / "a.ckpt.report.json") == slurp(dir / "b.ckpt.report.json"));
}

TEST_CASE("cli: gradcheck") {
  auto r = cli({"gradcheck"});
  CHECK(r.code == 0);
  CHECK(r.out.find("(ok)") != std::string::npos);
  auto many = cli({"gradcheck", "--configs", "3", "--seed", "5"});
  CHECK(many.code == 0);
  CHECK(many.out.find("config 2") != std::string::npos);
  // An impossible tolerance fails with a diagnostic.
  auto strict = cli({"gradcheck", "--tol", "0"});
  CHECK(strict.code == 1);
  CHECK(count_lines(strict.err) == 1);
}

TEST_CASE("cli: errors are one line with a nonzero exit") {
  TempDir dir;
  auto unknown = cli({"synth", "--out", dir / "x.hfj", "--bogus"});
  CHECK(unknown.code == 2);
  CHECK(count_lines(unknown.err) == 1);
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);

  auto missing = cli({"eval", "--data", dir / "none.hfj", "--baseline", "pe", "--out", dir / "o"});
  CHECK(missing.code == 1);
  CHECK(count_lines(missing.err) == 1);

  const auto data = dir / "d.hfj";
  REQUIRE(cli({"synth", "--out", data, "--n", "40"}).code == 0);
  std::string text = slurp(data);
  text.replace(text.find("\"version\":1"), 11, "\"version\":9");
  {
    std::ofstream(dir / "v9.hfj") << text;
  }
  auto version = cli({"eval", "--data", dir / "v9.hfj", "--baseline", "pe", "--out", dir / "o"});
  CHECK(version.code == 1);
  CHECK(version.err.find("version") != std::string::npos);
  CHECK(count_lines(version.err) == 1);

  CHECK(cli({"eval", "--data", data, "--out", dir / "o"}).code == 1);
  CHECK(cli({"eval", "--data", data, "--baseline", "logistic", "--out", dir / "o"}).code == 1);
  CHECK(cli({"eval", "--data", data, "--baseline", "magic", "--out", dir / "o"}).code == 1);
  CHECK(cli({"train", "--data", data, "--out", dir / "m", "--lr", "nan"}).code != 0);
  CHECK(cli({"synth", "--out", dir / "s.hfj", "--separability", "3"}).code == 1);

  auto help = cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("gradcheck") != std::string::npos);
}
