#include "halunet/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "halunet/baselines.hpp"
#include "halunet/checkpoint.hpp"
#include "halunet/feature_record.hpp"
#include "halunet/gradcheck.hpp"
#include "halunet/metrics.hpp"
#include "halunet/model.hpp"
#include "halunet/score_file.hpp"
#include "halunet/synth.hpp"
#include "halunet/trainer.hpp"

namespace halunet {
namespace {

using nlohmann::json;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out.flush()) throw Error("write failed for '" + path + "'");
}

json read_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error("config '" + path + "': malformed JSON: " + e.what());
  }
  if (!j.is_object()) throw Error("config '" + path + "': expected a JSON object");
  return j;
}

Dataset load_data(const std::string& path, std::istream& in) {
  if (path == "-") return read_dataset(in);
  return load_dataset(path);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---- synth ----

struct SynthArgs {
  std::string out;
  std::string config;
  SynthConfig cfg;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  app.add_option("--out", a.out, "output HFJ path")->required();
  app.add_option("--config", a.config, "JSON file overriding the flags")->check(CLI::ExistingFile);
  app.add_option("--n", a.cfg.n_records, "number of records")->capture_default_str();
  app.add_option("--d-emb", a.cfg.d_emb, "embedding width")->capture_default_str();
  app.add_option("--l-max", a.cfg.l_max, "max sequence length")->capture_default_str();
  app.add_option("--separability", a.cfg.separability, "signal strength, 0 = none")
      ->capture_default_str();
  app.add_option("--rate", a.cfg.hallucination_rate, "hallucination rate")->capture_default_str();
  app.add_option("--seed", a.cfg.seed, "record seed")->capture_default_str();
  app.add_option("--world-seed", a.cfg.world_seed, "seed of the shared prototype/subspace");
}

int cmd_synth(SynthArgs& a, std::ostream& out) {
  SynthConfig cfg = a.cfg;
  if (!a.config.empty()) {
    const json j = read_config(a.config);
    try {
      cfg.n_records = j.value("n", j.value("n_records", cfg.n_records));
      cfg.d_emb = j.value("d_emb", cfg.d_emb);
      cfg.l_max = j.value("l_max", cfg.l_max);
      cfg.separability = j.value("separability", cfg.separability);
      cfg.hallucination_rate = j.value("hallucination_rate", cfg.hallucination_rate);
      cfg.seed = j.value("seed", cfg.seed);
      cfg.world_seed = j.value("world_seed", cfg.world_seed);
    } catch (const json::exception& e) {
      throw Error("config '" + a.config + "': " + e.what());
    }
  }
  const Dataset ds = generate(cfg);
  save_dataset(ds, a.out);
  std::size_t pos = 0;
  for (const auto& r : ds.records) pos += static_cast<std::size_t>(r.label);
  out << "wrote " << ds.size() << " records (" << pos << " hallucinated) to " << a.out << "\n";
  return 0;
}

// ---- model flags shared by train ----

struct ModelFlags {
  std::string features = "ll,ent,emb";
  std::string encoder = "all-cnn";
  std::string fusion = "concat";
  std::string branches;
  int d_emb = 0;
  int d_conv = 0, d_h = 0, d_mlp = 0, d_a = 0;
  bool unmasked = false;
  CLI::Option* d_emb_opt = nullptr;
};

void add_model_flags(CLI::App& app, ModelFlags& f) {
  app.add_option("--features", f.features, "feature subset, e.g. ll,ent,emb")
      ->capture_default_str();
  app.add_option("--encoder", f.encoder, "branch encoder preset")
      ->check(CLI::IsMember({"all-cnn", "mixed", "all-mlp"}))
      ->capture_default_str();
  app.add_option("--fusion", f.fusion, "fusion kind")
      ->check(CLI::IsMember({"attention", "concat", "concat_mlp"}))
      ->capture_default_str();
  app.add_option("--branches", f.branches,
                 "per-branch encoders, e.g. ll:cnn,emb:mlp_pool (overrides --features/--encoder)");
  f.d_emb_opt = app.add_option("--d-emb", f.d_emb, "embedding width (default: from data)");
  app.add_option("--d-conv", f.d_conv, "conv channels (default: d_h)");
  app.add_option("--d-h", f.d_h, "branch output width");
  app.add_option("--d-mlp", f.d_mlp, "MLP hidden width");
  app.add_option("--d-a", f.d_a, "attention width");
  app.add_flag("--unmasked-pooling", f.unmasked, "average over all l_max positions");
}

ModelConfig model_from_flags(const ModelFlags& f, const Dataset& data) {
  const int d_emb = f.d_emb_opt->count() > 0 ? f.d_emb : data.d_emb;
  ModelConfig cfg = ModelConfig::from_preset(parse_preset(f.encoder), parse_feature_list(f.features),
                                             parse_fusion(f.fusion), d_emb);
  if (!f.branches.empty()) {
    cfg.branches.clear();
    for (const auto& item : split_list(f.branches)) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw Error("--branches entry '" + item + "' needs feature:encoder");
      cfg.branches.push_back({parse_feature(item.substr(0, colon)), parse_encoder(item.substr(colon + 1))});
    }
  }
  cfg.l_max = data.l_max;
  if (f.d_h > 0) cfg.d_h = cfg.d_conv = f.d_h;
  if (f.d_conv > 0) cfg.d_conv = f.d_conv;
  if (f.d_mlp > 0) cfg.d_mlp = f.d_mlp;
  if (f.d_a > 0) cfg.d_a = f.d_a;
  if (f.unmasked) cfg.pooling_masked = false;
  return cfg;
}

void apply_train_json(const json& j, TrainConfig& t) {
  t.lr = j.value("lr", t.lr);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.max_epochs = j.value("max_epochs", t.max_epochs);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.beta1 = j.value("beta1", t.beta1);
  t.beta2 = j.value("beta2", t.beta2);
  t.eps = j.value("eps", t.eps);
  t.val_fraction = j.value("val_fraction", t.val_fraction);
  t.patience = j.value("patience", t.patience);
  t.seed = j.value("seed", t.seed);
}

nlohmann::ordered_json train_config_json(const TrainConfig& t) {
  return {{"lr", t.lr},
          {"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs},
          {"weight_decay", t.weight_decay},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"eps", t.eps},
          {"val_fraction", t.val_fraction},
          {"patience", t.patience},
          {"seed", t.seed}};
}

// ---- train ----

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config;
  std::string baseline;
  ModelFlags model;
  TrainConfig train;
  bool quiet = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
  app.add_option("--data", a.data, "training HFJ file (- for stdin)")->required();
  app.add_option("--out", a.out, "checkpoint path (report goes to <out>.report.json)")
      ->required();
  app.add_option("--config", a.config, "JSON file with model and training keys")
      ->check(CLI::ExistingFile);
  app.add_option("--baseline", a.baseline, "train a baseline instead of HaluNet")
      ->check(CLI::IsMember({"logistic"}));
  app.add_option("--seed", a.train.seed, "training seed")->capture_default_str();
  app.add_option("--lr", a.train.lr, "learning rate")->capture_default_str();
  app.add_option("--batch-size", a.train.batch_size, "batch size")->capture_default_str();
  app.add_option("--epochs", a.train.max_epochs, "max epochs")->capture_default_str();
  app.add_option("--weight-decay", a.train.weight_decay, "AdamW weight decay")
      ->capture_default_str();
  app.add_option("--val-fraction", a.train.val_fraction, "validation hold-out fraction")
      ->capture_default_str();
  app.add_option("--patience", a.train.patience, "early-stopping patience (epochs)")
      ->capture_default_str();
  app.add_flag("--quiet", a.quiet, "no per-epoch lines");
  add_model_flags(app, a.model);
}

int cmd_train(TrainArgs& a, std::istream& in, std::ostream& out) {
  const Dataset data = load_data(a.data, in);
  std::optional<json> file_cfg;
  if (!a.config.empty()) file_cfg = read_config(a.config);

  if (a.baseline == "logistic") {
    const LogisticModel model = logistic_train(data, a.train.seed);
    save_logistic(model, a.out);
    out << "wrote logistic baseline to " << a.out << "\n";
    return 0;
  }

  ModelConfig mcfg = model_from_flags(a.model, data);
  TrainConfig tcfg = a.train;
  if (file_cfg) {
    mcfg = ModelConfig::from_json(file_cfg->dump(), mcfg);
    try {
      apply_train_json(*file_cfg, tcfg);
    } catch (const json::exception& e) {
      throw Error("config '" + a.config + "': " + e.what());
    }
  }
  mcfg.validate();
  tcfg.validate();
  if (mcfg.d_emb != data.d_emb) {
    throw Error("model d_emb " + std::to_string(mcfg.d_emb) + " does not match data d_emb " +
                std::to_string(data.d_emb));
  }
  if (mcfg.l_max != data.l_max) {
    throw Error("model l_max " + std::to_string(mcfg.l_max) + " does not match data l_max " +
                std::to_string(data.l_max));
  }

  auto on_epoch = [&](const EpochStats& e) {
    if (a.quiet) return;
    out << "epoch " << e.epoch << "  loss " << std::fixed << std::setprecision(5) << e.train_loss
        << "  val_auroc " << e.val_auroc << std::defaultfloat << "\n";
  };
  const TrainResult result = train(data, mcfg, tcfg, on_epoch);
  save_checkpoint(result.params, mcfg, a.out);

  nlohmann::ordered_json report = nlohmann::ordered_json::parse(result.report.to_json());
  report["model_config"] = nlohmann::ordered_json::parse(mcfg.to_json());
  report["train_config"] = train_config_json(tcfg);
  write_text(a.out + ".report.json", report.dump(2) + "\n");
  out << "best epoch " << result.report.best_epoch << " of " << result.report.epochs.size()
      << (result.report.stopped_early ? " (stopped early)" : "") << "; wrote " << a.out << "\n";
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string data;
  std::string model;
  std::string baseline;
  std::string logistic_model;
  std::string train_data;
  std::string out;
  std::string accuracy = "faithful";
  std::string aurac_rule = "rectangle";
  std::uint64_t seed = 0;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  app.add_option("--data", a.data, "test HFJ file (- for stdin)")->required();
  app.add_option("--model", a.model, "HaluNet checkpoint")->check(CLI::ExistingFile);
  app.add_option("--baseline", a.baseline, "comma list of pe, pe_sum, tnll, logistic");
  app.add_option("--logistic-model", a.logistic_model, "fitted logistic baseline JSON")
      ->check(CLI::ExistingFile);
  app.add_option("--train-data", a.train_data, "HFJ file to fit the logistic baseline on")
      ->check(CLI::ExistingFile);
  app.add_option("--out", a.out, "output prefix for <out>.<scorer>.{scores.tsv,eval.json,curve.txt}")
      ->required();
  app.add_option("--accuracy", a.accuracy, "retained accuracy: faithful or detection")
      ->check(CLI::IsMember({"faithful", "detection"}))
      ->capture_default_str();
  app.add_option("--aurac-rule", a.aurac_rule, "rectangle or trapezoid")
      ->check(CLI::IsMember({"rectangle", "trapezoid"}))
      ->capture_default_str();
  app.add_option("--seed", a.seed, "seed (logistic fit)")->capture_default_str();
}

ScoredSet score_halunet(const Dataset& ds, const Checkpoint& ck) {
  ScoredSet set;
  set.reserve(ds.size());
  for (const auto& r : ds.records) set.push_back({r.id, score_record(r, ck.params, ck.config), r.label});
  return set;
}

void check_compatible(const ModelConfig& cfg, const Dataset& ds) {
  if (cfg.d_emb != ds.d_emb || cfg.l_max != ds.l_max) {
    throw Error("checkpoint expects d_emb " + std::to_string(cfg.d_emb) + ", l_max " +
                std::to_string(cfg.l_max) + " but data has d_emb " + std::to_string(ds.d_emb) +
                ", l_max " + std::to_string(ds.l_max));
  }
}

int cmd_eval(EvalArgs& a, std::istream& in, std::ostream& out) {
  const Dataset data = load_data(a.data, in);
  struct Job {
    std::string name;
    ScoredSet set;
    ScorerKind kind;
  };
  std::vector<Job> jobs;

  if (!a.model.empty()) {
    const Checkpoint ck = load_checkpoint(a.model);
    check_compatible(ck.config, data);
    jobs.push_back({"halunet", score_halunet(data, ck), ScorerKind::kSupervised});
  }
  for (const auto& b : split_list(a.baseline)) {
    if (b == "pe") {
      jobs.push_back({"pe", score_predictive_entropy(data), ScorerKind::kUnsupervised});
    } else if (b == "pe_sum") {
      jobs.push_back({"pe_sum", score_predictive_entropy(data, EntropyAggregation::kSum),
                      ScorerKind::kUnsupervised});
    } else if (b == "tnll") {
      jobs.push_back({"tnll", score_token_nll(data), ScorerKind::kUnsupervised});
    } else if (b == "logistic") {
      LogisticModel lm;
      if (!a.logistic_model.empty()) {
        lm = load_logistic(a.logistic_model);
      } else if (!a.train_data.empty()) {
        lm = logistic_train(load_dataset(a.train_data), a.seed);
      } else {
        throw Error("logistic baseline needs --logistic-model or --train-data");
      }
      jobs.push_back({"logistic", score_logistic(data, lm), ScorerKind::kSupervised});
    } else {
      throw Error("unknown baseline '" + b + "' (expected pe, pe_sum, tnll or logistic)");
    }
  }
  if (jobs.empty()) throw Error("nothing to evaluate: give --model and/or --baseline");

  EvalOptions opts;
  opts.accuracy =
      a.accuracy == "detection" ? RetainedAccuracy::kDetection : RetainedAccuracy::kFaithfulFraction;
  opts.aurac_rule = a.aurac_rule == "trapezoid" ? AuracRule::kTrapezoid : AuracRule::kRectangle;

  out << std::left << std::setw(10) << "scorer" << std::right << std::setw(9) << "AUROC"
      << std::setw(9) << "AURAC" << std::setw(9) << "RA@50" << std::setw(9) << "F1@B" << "\n";
  for (auto& job : jobs) {
    opts.kind = job.kind;
    const EvalReport rep = evaluate(job.set, opts, job.name);
    const std::string prefix = a.out + "." + job.name;
    save_scores(job.set, prefix + ".scores.tsv");
    write_text(prefix + ".eval.json", eval_report_json(rep));
    write_text(prefix + ".curve.txt", rejection_curve_text(rep));
    out << std::left << std::setw(10) << job.name << std::right << std::fixed
        << std::setprecision(4) << std::setw(9) << rep.auroc << std::setw(9) << rep.aurac
        << std::setw(9) << rep.ra_at_50 << std::setw(9) << rep.f1_at_best << std::defaultfloat
        << "\n";
  }
  return 0;
}

// ---- score ----

struct ScoreArgs {
  std::string data;
  std::string model;
  std::string id;
  std::uint64_t seed = 0;
};

void add_score(CLI::App& app, ScoreArgs& a) {
  app.add_option("--model", a.model, "HaluNet checkpoint")->required()->check(CLI::ExistingFile);
  app.add_option("--data", a.data, "HFJ file, or - to read a stream from stdin")->required();
  app.add_option("--id", a.id, "score only this record");
  app.add_option("--seed", a.seed, "accepted for uniformity; scoring is deterministic");
}

int cmd_score(ScoreArgs& a, std::istream& in, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.model);
  const Dataset data = load_data(a.data, in);
  check_compatible(ck.config, data);
  bool found = a.id.empty();
  out << std::setprecision(9);
  for (const auto& r : data.records) {
    if (!a.id.empty() && r.id != a.id) continue;
    found = true;
    const double p = score_record(r, ck.params, ck.config);
    out << r.id << '\t' << p << '\t' << predict(p) << '\n';
  }
  if (!found) throw Error("no record with id '" + a.id + "'");
  return 0;
}

// ---- gradcheck ----

struct GradArgs {
  std::uint64_t seed = 0;
  int configs = 1;
  int index = 0;
  std::string config;
  double tol = 1e-4;
  double epsilon = 1e-3;
  std::string scheme = "richardson";
};

void add_gradcheck(CLI::App& app, GradArgs& a) {
  app.add_option("--seed", a.seed, "seed")->capture_default_str();
  app.add_option("--configs", a.configs, "number of random small configs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--index", a.index, "first config index")->capture_default_str();
  app.add_option("--config", a.config, "check this model config (JSON) instead of random ones")
      ->check(CLI::ExistingFile);
  app.add_option("--tol", a.tol, "max allowed relative error")->capture_default_str();
  app.add_option("--epsilon", a.epsilon, "finite-difference step")->capture_default_str();
  app.add_option("--scheme", a.scheme, "central, or richardson (central at eps and eps/2 combined)")
      ->check(CLI::IsMember({"central", "richardson"}))
      ->capture_default_str();
}

int cmd_gradcheck(GradArgs& a, std::ostream& out) {
  GradCheckOptions opts;
  opts.epsilon = a.epsilon;
  opts.scheme = a.scheme == "central" ? FiniteDifference::kCentral : FiniteDifference::kRichardson;
  double worst = 0.0;
  auto print = [&](const GradCheckReport& r, const std::string& title) {
    out << title << " " << r.config_json << "\n";
    for (const auto& t : r.tensors) {
      out << "  " << std::left << std::setw(22) << t.name << std::right << std::scientific
          << std::setprecision(3) << t.max_rel_error << std::defaultfloat << "  checked "
          << t.checked << "  kinks " << t.skipped_kinks << "\n";
    }
    worst = std::max(worst, r.max_rel_error);
  };
  if (!a.config.empty()) {
    const ModelConfig cfg = ModelConfig::from_json(read_text(a.config));
    Rng rng(a.seed);
    print(gradcheck_config(cfg, rng, opts), "config");
  } else {
    for (int i = 0; i < a.configs; ++i) {
      print(random_gradcheck(a.seed, a.index + i, opts), "config " + std::to_string(a.index + i));
    }
  }
  out << "max relative error " << std::scientific << std::setprecision(3) << worst
      << std::defaultfloat << (worst < a.tol ? " (ok)" : " (FAILED)") << "\n";
  if (!(worst < a.tol)) {
    throw Error("gradient check failed: max relative error exceeds " + std::to_string(a.tol));
  }
  return 0;
}

std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"HaluNet hallucination detector toolkit", "halunet"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "expand all help");

  SynthArgs synth_args;
  TrainArgs train_args;
  EvalArgs eval_args;
  ScoreArgs score_args;
  GradArgs grad_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic HFJ dataset");
  auto* train_cmd = app.add_subcommand("train", "train HaluNet or the logistic baseline");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and/or baselines");
  auto* score = app.add_subcommand("score", "print p and prediction per record");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_synth(*synth, synth_args);
  add_train(*train_cmd, train_args);
  add_eval(*eval, eval_args);
  add_score(*score, score_args);
  add_gradcheck(*grad, grad_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "halunet: error: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args, out);
    if (train_cmd->parsed()) return cmd_train(train_args, in, out);
    if (eval->parsed()) return cmd_eval(eval_args, in, out);
    if (score->parsed()) return cmd_score(score_args, in, out);
    if (grad->parsed()) return cmd_gradcheck(grad_args, out);
  } catch (const std::exception& e) {
    err << "halunet: error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 2;
}

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("halunet");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), in, out, err);
}

}  // namespace halunet
