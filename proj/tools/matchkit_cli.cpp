#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "matchkit/datagen.hpp"
#include "matchkit/mechanisms.hpp"
#include "matchkit/metrics.hpp"
#include "matchkit/neuralsd.hpp"
#include "matchkit/parallel.hpp"
#include "matchkit/train.hpp"
#include "matchkit/tsd.hpp"
#include "matchkit/verify.hpp"

namespace {

using nlohmann::json;
using namespace matchkit;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerificationFailure = 2;
constexpr int kExitRuntimeError = 3;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

// Every command logs its resolved configuration and mirrors it next to each
// output artifact.
void echo_config(const std::string& command, const json& config,
                 const std::vector<std::string>& artifacts) {
  json echo{{"command", command}, {"config", config}};
  std::cout << echo.dump() << "\n";
  for (const std::string& artifact : artifacts) {
    write_text(artifact + ".config.json", echo.dump(2) + "\n");
  }
}

struct GenDataArgs {
  DatagenConfig config;
  std::string out;
};

int run_gen_data(const GenDataArgs& args) {
  const json cfg{{"n", args.config.n},     {"m", args.config.m},
                 {"count", args.config.count}, {"mechanism", args.config.mechanism},
                 {"seed", args.config.seed},   {"t", args.config.t},
                 {"d", args.config.d},         {"out", args.out}};
  echo_config("gen-data", cfg, {args.out});
  write_dataset(args.out, generate_dataset(args.config));
  std::cout << "wrote " << args.config.count << " records to " << args.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string out;
  TrainConfig config;
};

int run_train(const TrainArgs& args) {
  const json cfg{{"data", args.data},
                 {"out", args.out},
                 {"epochs", args.config.epochs},
                 {"batch_size", args.config.batch_size},
                 {"learning_rate", args.config.learning_rate},
                 {"tau", args.config.tau},
                 {"d_emb", args.config.d_emb},
                 {"clip_l1", args.config.clip_l1_max},
                 {"lambda", args.config.lambda_stability},
                 {"seed", args.config.seed},
                 {"threads", resolve_threads(args.config.threads)}};
  echo_config("train", cfg, {args.out});
  const Dataset dataset = read_dataset(args.data);
  const TrainResult result = train(dataset, args.config);
  save_checkpoint(args.out, result.checkpoint);
  std::ostringstream loss_csv;
  loss_csv << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    loss_csv << (e + 1) << "," << result.epoch_loss[e] << "\n";
  }
  write_text(args.out + ".loss.csv", loss_csv.str());
  std::cout << "final train loss " << result.checkpoint.final_train_loss << "; wrote " << args.out
            << " and " << args.out << ".loss.csv\n";
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string baseline = "rsd";
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;
};

json aggregates_to_json(const EvalResult& result) {
  json agg;
  for (const auto& [model, metrics] : result.aggregates) {
    for (const auto& [metric, a] : metrics) {
      agg[model][metric] = json{{"mean", a.mean}, {"std", a.std}, {"n", a.n}};
    }
  }
  json wilcoxon;
  for (const auto& [metric, p] : result.wilcoxon_p) {
    wilcoxon[metric] = p.has_value() ? json(*p) : json(nullptr);
  }
  return json{{"aggregates", agg}, {"wilcoxon_one_sided_p", wilcoxon}};
}

int run_eval(const EvalArgs& args) {
  if (args.baseline != "rsd") throw CLI::ValidationError("--baseline must be rsd");
  const json cfg{{"ckpt", args.ckpt}, {"data", args.data},   {"baseline", args.baseline},
                 {"out", args.out},   {"seed", args.seed},   {"threads", resolve_threads(args.threads)}};
  echo_config("eval", cfg, {args.out});
  const Checkpoint ckpt = load_checkpoint(args.ckpt);
  const Dataset dataset = read_dataset(args.data);
  const EvalResult result = evaluate(ckpt, dataset, args.seed, args.threads);
  std::ostringstream csv;
  csv << "record_id,model,metric,value\n";
  for (const EvalRow& row : result.rows) {
    csv << row.record_id << "," << row.model << "," << row.metric << "," << row.value << "\n";
  }
  write_text(args.out, csv.str());
  const json summary = aggregates_to_json(result);
  write_text(args.out + ".summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

struct VerifyArgs {
  std::string suite = "all";
  int trials = 1000;
  std::uint64_t seed = 0;
};

int run_verify(const VerifyArgs& args) {
  echo_config("verify", json{{"suite", args.suite}, {"trials", args.trials}, {"seed", args.seed}},
              {});
  std::vector<VerifyReport> reports;
  if (args.suite == "tsd-equiv") reports.push_back(verify_tsd_equiv(args.trials, args.seed));
  else if (args.suite == "sp") reports.push_back(verify_sp(args.trials, args.seed));
  else if (args.suite == "pareto") reports.push_back(verify_pareto(args.trials, args.seed));
  else if (args.suite == "irv") reports.push_back(verify_irv(args.trials, args.seed));
  else if (args.suite == "hungarian") reports.push_back(verify_hungarian(args.trials, args.seed));
  else if (args.suite == "all") reports = verify_all(args.trials, args.seed);
  else throw CLI::ValidationError("unknown suite: " + args.suite);

  bool all_pass = true;
  for (const VerifyReport& report : reports) {
    std::cout << (report.pass ? "PASS" : "FAIL") << " " << report.suite;
    for (const auto& [key, value] : report.stats) std::cout << " " << key << "=" << value;
    std::cout << "\n";
    for (const std::string& failure : report.failures) std::cout << "  " << failure << "\n";
    all_pass = all_pass && report.pass;
  }
  return all_pass ? kExitOk : kExitVerificationFailure;
}

struct RecoverArgs {
  std::string ckpt;
  std::string data;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;
};

int run_recover(const RecoverArgs& args) {
  const json cfg{{"ckpt", args.ckpt}, {"data", args.data}, {"out", args.out},
                 {"seed", args.seed}, {"threads", resolve_threads(args.threads)}};
  echo_config("recover", cfg, {args.out});
  const Checkpoint ckpt = load_checkpoint(args.ckpt);
  const Dataset dataset = read_dataset(args.data);
  const RecoveryResult result = recovery_rate(ckpt, dataset, args.seed, args.threads);
  std::ostringstream csv;
  csv << "record_id,optimal_set_size,neuralsd_hit,rsd_hit\n";
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    csv << dataset.records[i].id << "," << result.optimal_set_size[i] << ","
        << static_cast<int>(result.neural_hit[i]) << "," << static_cast<int>(result.rsd_hit[i])
        << "\n";
  }
  write_text(args.out, csv.str());
  const json summary{{"neuralsd_recovery_rate", result.neural_rate},
                     {"rsd_recovery_rate", result.rsd_rate},
                     {"wilcoxon_one_sided_p",
                      result.wilcoxon_p.has_value() ? json(*result.wilcoxon_p) : json(nullptr)}};
  write_text(args.out + ".summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::string op = "tsd";
  std::vector<int> sizes{20, 40, 80};
  std::uint64_t seed = 0;
  std::string out;
};

double time_callable(const std::function<void()>& fn) {
  using clock = std::chrono::steady_clock;
  fn();  // warm up
  double best = 1e300;
  double total = 0.0;
  int reps = 0;
  while (reps < 3 || total < 0.2) {
    const auto start = clock::now();
    fn();
    const double seconds = std::chrono::duration<double>(clock::now() - start).count();
    best = std::min(best, seconds);
    total += seconds;
    ++reps;
    if (reps > 200) break;
  }
  return best;
}

int run_bench(const BenchArgs& args) {
  const json cfg{{"op", args.op}, {"sizes", args.sizes}, {"seed", args.seed}, {"out", args.out}};
  echo_config("bench", cfg, args.out.empty() ? std::vector<std::string>{} : std::vector<std::string>{args.out});
  std::ostringstream csv;
  csv << "op,n,seconds\n";
  std::vector<double> log_n, log_t;
  for (int size : args.sizes) {
    Rng rng(splitmix64(args.seed ^ static_cast<std::uint64_t>(size)));
    double seconds = 0.0;
    if (args.op == "tsd") {
      const PreferenceProfile profile = random_profile(size, size, rng);
      const PreferenceTensorData prefs = build_preference_tensor(profile);
      const Mat ranking = build_ranking_matrix(Ranking{rng.permutation(2 * size)}, size, size);
      seconds = time_callable([&] { tsd_forward(prefs, ranking); });
    } else if (args.op == "ranking") {
      auto [xw, xf] = sample_contexts(size, size, 10, rng);
      const Instance instance(std::move(xw), std::move(xf));
      const RankingParams params = RankingParams::init(10, 10, 0.1, args.seed);
      seconds = time_callable([&] {
        ad::Tape tape(false);
        const RankingParamTensors pt = make_param_tensors(tape, params, false);
        ranking_block(tape, contexts_tensor(tape, instance), pt, params.tau);
      });
    } else {
      throw CLI::ValidationError("unknown op: " + args.op);
    }
    csv << args.op << "," << size << "," << seconds << "\n";
    log_n.push_back(std::log(static_cast<double>(size)));
    log_t.push_back(std::log(seconds));
  }
  // least-squares slope of log t on log n
  const double xbar = mean(log_n), ybar = mean(log_t);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < log_n.size(); ++i) {
    num += (log_n[i] - xbar) * (log_t[i] - ybar);
    den += (log_n[i] - xbar) * (log_n[i] - xbar);
  }
  const double slope = den == 0.0 ? 0.0 : num / den;
  std::cout << csv.str();
  std::cout << "loglog_slope," << slope << "\n";
  if (!args.out.empty()) write_text(args.out, csv.str() + "loglog_slope," + std::to_string(slope) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NeuralSD: strategy-proof matching mechanisms learned from examples"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic example-matching dataset");
  gen->add_option("--n", gen_args.config.n, "Workers per instance")->capture_default_str();
  gen->add_option("--m", gen_args.config.m, "Firms per instance")->capture_default_str();
  gen->add_option("--count", gen_args.config.count, "Number of records")->capture_default_str();
  gen->add_option("--mechanism", gen_args.config.mechanism, "Example mechanism: da | eh | mh")
      ->check(CLI::IsMember({"da", "eh", "mh"}))
      ->capture_default_str();
  gen->add_option("--seed", gen_args.config.seed, "Base RNG seed")->capture_default_str();
  gen->add_option("--t", gen_args.config.t, "Acceptability threshold (squared distance)")
      ->capture_default_str();
  gen->add_option("--d", gen_args.config.d, "Context dimension")->capture_default_str();
  gen->add_option("--out", gen_args.out, "Output JSONL path (.gz for gzip)")->required();

  TrainArgs train_args;
  CLI::App* tr = app.add_subcommand("train", "Train the ranking block on a dataset");
  tr->add_option("--data", train_args.data, "Training dataset path")->required();
  tr->add_option("--epochs", train_args.config.epochs, "Epochs")->capture_default_str();
  tr->add_option("--batch-size", train_args.config.batch_size, "Mini-batch size")->capture_default_str();
  tr->add_option("--tau", train_args.config.tau, "SoftSort temperature")->capture_default_str();
  tr->add_option("--d-emb", train_args.config.d_emb, "Attention embedding dimension")->capture_default_str();
  tr->add_option("--lr", train_args.config.learning_rate, "Adam learning rate")->capture_default_str();
  tr->add_option("--clip-l1", train_args.config.clip_l1_max, "Max gradient L1 norm")->capture_default_str();
  tr->add_option("--lambda", train_args.config.lambda_stability, "Stability regularizer weight")
      ->capture_default_str();
  tr->add_option("--seed", train_args.config.seed, "Init/shuffle seed")->capture_default_str();
  tr->add_option("--threads", train_args.config.threads, "Worker threads (0 = auto)")->capture_default_str();
  tr->add_option("--out", train_args.out, "Checkpoint output path")->required();

  EvalArgs eval_args;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint against the RSD baseline");
  ev->add_option("--ckpt", eval_args.ckpt, "Checkpoint path")->required();
  ev->add_option("--data", eval_args.data, "Test dataset path")->required();
  ev->add_option("--baseline", eval_args.baseline, "Baseline mechanism")->capture_default_str();
  ev->add_option("--seed", eval_args.seed, "Baseline RNG seed")->capture_default_str();
  ev->add_option("--threads", eval_args.threads, "Worker threads (0 = auto)")->capture_default_str();
  ev->add_option("--out", eval_args.out, "Metrics CSV output path")->required();

  VerifyArgs verify_args;
  CLI::App* vf = app.add_subcommand("verify", "Run property-oracle suites");
  vf->add_option("--suite", verify_args.suite, "sp | pareto | irv | tsd-equiv | hungarian | all")
      ->check(CLI::IsMember({"sp", "pareto", "irv", "tsd-equiv", "hungarian", "all"}))
      ->capture_default_str();
  vf->add_option("--trials", verify_args.trials, "Randomized trials")->capture_default_str();
  vf->add_option("--seed", verify_args.seed, "RNG seed")->capture_default_str();

  RecoverArgs recover_args;
  CLI::App* rc = app.add_subcommand("recover", "Recovery rate of optimal rankings (n = m = 3)");
  rc->add_option("--ckpt", recover_args.ckpt, "Checkpoint path")->required();
  rc->add_option("--data", recover_args.data, "Test dataset path (n = m = 3)")->required();
  rc->add_option("--seed", recover_args.seed, "Baseline RNG seed")->capture_default_str();
  rc->add_option("--threads", recover_args.threads, "Worker threads (0 = auto)")->capture_default_str();
  rc->add_option("--out", recover_args.out, "Per-record CSV output path")->required();

  BenchArgs bench_args;
  CLI::App* bn = app.add_subcommand("bench", "Wall-time growth of tsd / ranking forward passes");
  bn->add_option("--op", bench_args.op, "tsd | ranking")
      ->check(CLI::IsMember({"tsd", "ranking"}))
      ->capture_default_str();
  bn->add_option("--sizes", bench_args.sizes, "Sizes n (n = m)")->delimiter(',')->capture_default_str();
  bn->add_option("--seed", bench_args.seed, "RNG seed")->capture_default_str();
  bn->add_option("--out", bench_args.out, "Optional CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return run_gen_data(gen_args);
    if (tr->parsed()) return run_train(train_args);
    if (ev->parsed()) return run_eval(eval_args);
    if (vf->parsed()) return run_verify(verify_args);
    if (rc->parsed()) return run_recover(recover_args);
    if (bn->parsed()) return run_bench(bench_args);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitUsage;
}
