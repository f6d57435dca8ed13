#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "matchkit/datagen.hpp"
#include "matchkit/ranking_net.hpp"

namespace matchkit {

struct TrainConfig {
  int epochs = 5;
  int batch_size = 4;
  // The tie-break offsets keep SoftSort near-hard at tau = 0.1, so gradients
  // are minute and Adam needs a large step to make progress; 0.2 trains
  // reliably at n = 3..10 where smaller rates stall or drift.
  double learning_rate = 0.2;
  double tau = 0.1;
  int d_emb = 10;
  double clip_l1_max = 10.0;
  double lambda_stability = 0.0;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = resolve from environment/hardware
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  bool operator==(const TrainConfig&) const = default;
};

struct Checkpoint {
  int format_version = 1;
  RankingParams params;
  TrainConfig config;
  double final_train_loss = 0.0;
};

// Scales all gradients by max_norm / ||g||_1 when the L1 norm exceeds it.
void clip_grad_l1(std::span<double> grads, double max_norm);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  int t = 0;
};

// Standard Adam with bias correction.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1, double beta2, double eps);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_loss;  // mean loss per epoch
};

// Shuffled mini-batch training of the ranking block through TSD. Deterministic
// given (dataset, config), independent of the thread count. Throws on a
// non-finite loss, naming the record.
TrainResult train(const Dataset& dataset, const TrainConfig& config);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
std::string checkpoint_to_string(const Checkpoint& ckpt);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;
  int n = 0;
};

struct EvalRow {
  int record_id = 0;
  std::string model;   // "neuralsd" | "rsd"
  std::string metric;  // hd | bp | sv | irv | rw
  double value = 0.0;
};

struct EvalResult {
  std::vector<EvalRow> rows;
  // aggregates[model][metric]
  std::map<std::string, std::map<std::string, Aggregate>> aggregates;
  // One-sided Wilcoxon p (NeuralSD better than RSD) per metric; absent when
  // the test is degenerate (all paired differences zero).
  std::map<std::string, std::optional<double>> wilcoxon_p;
};

// Per-record forward_infer + metrics, with an RSD baseline on the same
// records drawn from per-record seeds derived from baseline_seed.
EvalResult evaluate(const Checkpoint& ckpt, const Dataset& dataset, std::uint64_t baseline_seed,
                    int threads = 0);

struct RecoveryResult {
  double neural_rate = 0.0;
  double rsd_rate = 0.0;
  std::vector<int> optimal_set_size;
  std::vector<std::uint8_t> neural_hit;
  std::vector<std::uint8_t> rsd_hit;
  std::optional<double> wilcoxon_p;  // paired per-record hits, H1: neural > rsd
};

// Recovery rate of optimal rankings on an n = m = 3 dataset.
RecoveryResult recovery_rate(const Checkpoint& ckpt, const Dataset& dataset,
                             std::uint64_t baseline_seed, int threads = 0);

}  // namespace matchkit
