#include "matchkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "matchkit/metrics.hpp"
#include "matchkit/neuralsd.hpp"
#include "matchkit/parallel.hpp"

namespace matchkit {

using nlohmann::json;

void clip_grad_l1(std::span<double> grads, double max_norm) {
  if (max_norm <= 0.0) throw std::invalid_argument("clip_grad_l1: max_norm must be positive");
  double norm = 0.0;
  for (double g : grads) norm += std::fabs(g);
  if (norm <= max_norm) return;
  const double factor = max_norm / norm;
  for (double& g : grads) g *= factor;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, state.t);
  const double bc2 = 1.0 - std::pow(beta2, state.t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

namespace {

struct RecordPass {
  double loss = 0.0;
  std::vector<double> grads;
};

RecordPass record_forward_backward(const DatasetRecord& rec, const RankingParams& params,
                                   double tau, double lambda, int dataset_size) {
  ad::Tape tape(true);
  const RankingParamTensors pt = make_param_tensors(tape, params, true);
  const ForwardTrainResult fwd = forward_train(tape, rec.profile, rec.instance, pt, tau);
  ad::Tensor loss;
  if (lambda > 0.0) {
    const PreferenceVectors pv = preference_vectors(rec.profile);
    loss = loss_with_stability_reg(tape, fwd.soft_matching, rec.example, pv, lambda, dataset_size);
  } else {
    loss = matching_loss(tape, fwd.soft_matching, rec.example);
  }
  RecordPass out;
  out.loss = loss.scalar_value();
  if (!std::isfinite(out.loss)) {
    throw std::runtime_error("train: non-finite loss at record " + std::to_string(rec.id));
  }
  tape.backward(loss);
  out.grads.reserve(static_cast<std::size_t>(params.num_params()));
  const auto append = [&](const ad::Tensor& t, std::size_t count) {
    const std::vector<double>& g = t.grad();
    if (g.empty()) {
      out.grads.insert(out.grads.end(), count, 0.0);
    } else {
      out.grads.insert(out.grads.end(), g.begin(), g.end());
    }
  };
  const std::size_t mat = static_cast<std::size_t>(params.d) * params.d_emb;
  append(pt.wq, mat);
  append(pt.wk, mat);
  append(pt.wv, mat);
  append(pt.w, static_cast<std::size_t>(params.d_emb));
  append(pt.b, 1);
  return out;
}

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  if (dataset.records.empty()) throw std::invalid_argument("train: empty dataset");
  const int n = dataset.records.front().instance.n;
  const int m = dataset.records.front().instance.m;
  const int d = dataset.records.front().instance.d;
  for (const DatasetRecord& rec : dataset.records) {
    if (rec.instance.n != n || rec.instance.m != m || rec.instance.d != d) {
      throw std::invalid_argument("train: records must share n, m, d");
    }
  }
  const int threads = resolve_threads(config.threads);
  const int record_count = static_cast<int>(dataset.records.size());

  RankingParams params = RankingParams::init(d, config.d_emb, config.tau, config.seed);
  std::vector<double> flat = params.flatten();
  AdamState adam;

  TrainResult result;
  result.epoch_loss.reserve(static_cast<std::size_t>(config.epochs));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(splitmix64(config.seed ^ (0xE70C0000ULL + static_cast<std::uint64_t>(epoch))));
    const std::vector<int> visit = shuffle_rng.permutation(record_count);
    double epoch_loss_sum = 0.0;

    for (int start = 0; start < record_count; start += config.batch_size) {
      const int batch = std::min(config.batch_size, record_count - start);
      params.unflatten(flat);
      std::vector<RecordPass> passes(static_cast<std::size_t>(batch));
      parallel_for(batch, threads, [&](int b) {
        const DatasetRecord& rec = dataset.records[static_cast<std::size_t>(visit[static_cast<std::size_t>(start + b)])];
        passes[static_cast<std::size_t>(b)] = record_forward_backward(
            rec, params, config.tau, config.lambda_stability, record_count);
      });
      // Fixed-order reduction keeps results independent of the thread count.
      std::vector<double> grads(flat.size(), 0.0);
      double batch_loss = 0.0;
      for (const RecordPass& pass : passes) {
        batch_loss += pass.loss;
        for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += pass.grads[i];
      }
      const double inv = 1.0 / batch;
      batch_loss *= inv;
      for (double& g : grads) g *= inv;
      epoch_loss_sum += batch_loss * batch;

      clip_grad_l1(grads, config.clip_l1_max);
      adam_step(flat, grads, adam, config.learning_rate, config.adam_beta1, config.adam_beta2,
                config.adam_eps);
    }
    result.epoch_loss.push_back(epoch_loss_sum / record_count);
  }

  params.unflatten(flat);
  result.checkpoint.params = params;
  result.checkpoint.config = config;
  result.checkpoint.final_train_loss = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();
  return result;
}

namespace {

json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"tau", c.tau},
              {"d_emb", c.d_emb},
              {"clip_l1_max", c.clip_l1_max},
              {"lambda_stability", c.lambda_stability},
              {"seed", c.seed},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.tau = j.at("tau").get<double>();
  c.d_emb = j.at("d_emb").get<int>();
  c.clip_l1_max = j.at("clip_l1_max").get<double>();
  c.lambda_stability = j.at("lambda_stability").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  return c;
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  const json j{{"format_version", ckpt.format_version},
               {"d", ckpt.params.d},
               {"d_emb", ckpt.params.d_emb},
               {"tau", ckpt.params.tau},
               {"params",
                json{{"wq", ckpt.params.wq},
                     {"wk", ckpt.params.wk},
                     {"wv", ckpt.params.wv},
                     {"w", ckpt.params.w},
                     {"b", ckpt.params.b}}},
               {"train_config", train_config_to_json(ckpt.config)},
               {"final_train_loss", ckpt.final_train_loss}};
  return j.dump(2);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << checkpoint_to_string(ckpt) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  json j;
  in >> j;
  Checkpoint ckpt;
  ckpt.format_version = j.at("format_version").get<int>();
  if (ckpt.format_version != 1) throw std::runtime_error("unsupported checkpoint version");
  ckpt.params.d = j.at("d").get<int>();
  ckpt.params.d_emb = j.at("d_emb").get<int>();
  ckpt.params.tau = j.at("tau").get<double>();
  ckpt.params.wq = j.at("params").at("wq").get<std::vector<double>>();
  ckpt.params.wk = j.at("params").at("wk").get<std::vector<double>>();
  ckpt.params.wv = j.at("params").at("wv").get<std::vector<double>>();
  ckpt.params.w = j.at("params").at("w").get<std::vector<double>>();
  ckpt.params.b = j.at("params").at("b").get<double>();
  ckpt.config = train_config_from_json(j.at("train_config"));
  ckpt.final_train_loss = j.at("final_train_loss").get<double>();
  return ckpt;
}

namespace {

struct RecordEval {
  std::vector<EvalRow> rows;
};

void push_metrics(std::vector<EvalRow>& rows, int id, const std::string& model,
                  const MatchingMatrix& predicted, const DatasetRecord& rec) {
  const PreferenceProfile& profile = rec.profile;
  rows.push_back({id, model, "hd", hamming_distance(predicted.to_mat(), rec.example.to_mat())});
  if (rec.mechanism_tag == "da") {
    rows.push_back({id, model, "bp", num_blocking_pairs(predicted, profile)});
    rows.push_back({id, model, "sv", stability_violation(predicted.to_mat(), profile)});
    rows.push_back({id, model, "irv", ir_violation(predicted, profile)});
  } else {
    const RewardSpec spec = reward_spec_for(rec);
    const double optimal = matching_reward(rec.example, profile, spec);
    if (optimal == 0.0) throw std::runtime_error("evaluate: degenerate record (zero optimal reward)");
    rows.push_back({id, model, "rw", matching_reward(predicted, profile, spec) / optimal});
  }
}

}  // namespace

EvalResult evaluate(const Checkpoint& ckpt, const Dataset& dataset, std::uint64_t baseline_seed,
                    int threads) {
  if (dataset.records.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (dataset.records.front().instance.d != ckpt.params.d) {
    throw std::invalid_argument("evaluate: checkpoint context dimension mismatch");
  }
  const int count = static_cast<int>(dataset.records.size());
  std::vector<RecordEval> evals(static_cast<std::size_t>(count));
  parallel_for(count, resolve_threads(threads), [&](int idx) {
    const DatasetRecord& rec = dataset.records[static_cast<std::size_t>(idx)];
    const MatchingMatrix neural = forward_infer(rec.profile, rec.instance, ckpt.params);
    Rng rsd_rng(splitmix64(baseline_seed ^ static_cast<std::uint64_t>(rec.id)));
    const MatchingMatrix baseline = rsd(rec.profile, rsd_rng);
    push_metrics(evals[static_cast<std::size_t>(idx)].rows, rec.id, "neuralsd", neural, rec);
    push_metrics(evals[static_cast<std::size_t>(idx)].rows, rec.id, "rsd", baseline, rec);
  });

  EvalResult result;
  for (const RecordEval& ev : evals) {
    result.rows.insert(result.rows.end(), ev.rows.begin(), ev.rows.end());
  }

  std::map<std::string, std::map<std::string, std::vector<double>>> by_model_metric;
  for (const EvalRow& row : result.rows) by_model_metric[row.model][row.metric].push_back(row.value);
  for (const auto& [model, metrics] : by_model_metric) {
    for (const auto& [metric, values] : metrics) {
      result.aggregates[model][metric] =
          Aggregate{mean(values), sample_std(values), static_cast<int>(values.size())};
    }
  }
  for (const auto& [metric, neural_values] : by_model_metric["neuralsd"]) {
    const std::vector<double>& rsd_values = by_model_metric["rsd"][metric];
    try {
      // Lower is better except for the reward ratio.
      const WilcoxonResult w = metric == "rw" ? wilcoxon_one_sided(rsd_values, neural_values)
                                              : wilcoxon_one_sided(neural_values, rsd_values);
      result.wilcoxon_p[metric] = w.p;
    } catch (const std::domain_error&) {
      result.wilcoxon_p[metric] = std::nullopt;
    }
  }
  return result;
}

RecoveryResult recovery_rate(const Checkpoint& ckpt, const Dataset& dataset,
                             std::uint64_t baseline_seed, int threads) {
  if (dataset.records.empty()) throw std::invalid_argument("recovery_rate: empty dataset");
  for (const DatasetRecord& rec : dataset.records) {
    if (rec.instance.n != 3 || rec.instance.m != 3) {
      throw std::invalid_argument("recovery_rate: requires n = m = 3 records");
    }
  }
  const int count = static_cast<int>(dataset.records.size());
  RecoveryResult out;
  out.optimal_set_size.assign(static_cast<std::size_t>(count), 0);
  out.neural_hit.assign(static_cast<std::size_t>(count), 0);
  out.rsd_hit.assign(static_cast<std::size_t>(count), 0);
  parallel_for(count, resolve_threads(threads), [&](int idx) {
    const DatasetRecord& rec = dataset.records[static_cast<std::size_t>(idx)];
    const std::vector<Ranking> optimal = optimal_rankings(rec.profile, rec.example);
    out.optimal_set_size[static_cast<std::size_t>(idx)] = static_cast<int>(optimal.size());
    const Ranking predicted = hard_ranking(rec.instance, ckpt.params);
    out.neural_hit[static_cast<std::size_t>(idx)] = ranking_in_set(predicted, optimal) ? 1 : 0;
    Rng rsd_rng(splitmix64(baseline_seed ^ static_cast<std::uint64_t>(rec.id)));
    const Ranking random{rsd_rng.permutation(6)};
    out.rsd_hit[static_cast<std::size_t>(idx)] = ranking_in_set(random, optimal) ? 1 : 0;
  });
  double neural_sum = 0.0, rsd_sum = 0.0;
  std::vector<double> neural_vals, rsd_vals;
  neural_vals.reserve(static_cast<std::size_t>(count));
  rsd_vals.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    neural_sum += out.neural_hit[static_cast<std::size_t>(i)];
    rsd_sum += out.rsd_hit[static_cast<std::size_t>(i)];
    neural_vals.push_back(out.neural_hit[static_cast<std::size_t>(i)]);
    rsd_vals.push_back(out.rsd_hit[static_cast<std::size_t>(i)]);
  }
  out.neural_rate = neural_sum / count;
  out.rsd_rate = rsd_sum / count;
  try {
    out.wilcoxon_p = wilcoxon_one_sided(rsd_vals, neural_vals).p;  // H1: rsd < neural
  } catch (const std::domain_error&) {
    out.wilcoxon_p = std::nullopt;
  }
  return out;
}

}  // namespace matchkit
