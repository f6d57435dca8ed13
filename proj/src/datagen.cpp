#include "matchkit/datagen.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace matchkit {

using nlohmann::json;

std::pair<Mat, Mat> sample_contexts(int n, int m, int d, Rng& rng) {
  Mat xw(n, d), xf(m, d);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c) xw.at(i, c) = rng.normal(1.0, 1.0);
  }
  for (int j = 0; j < m; ++j) {
    for (int c = 0; c < d; ++c) xf.at(j, c) = rng.normal(-1.0, 1.0);
  }
  return {std::move(xw), std::move(xf)};
}

namespace {

double squared_distance(const Mat& a, int i, const Mat& b, int j) {
  double s = 0.0;
  for (int c = 0; c < a.cols; ++c) {
    const double diff = a.at(i, c) - b.at(j, c);
    s += diff * diff;
  }
  return s;
}

// Orders opposite-side agents by squared distance (index tie-break) and slots
// the unmatch option after the last agent within the threshold.
LinearOrder order_by_distance(const std::vector<double>& dist2, double t) {
  const int k = static_cast<int>(dist2.size());
  std::vector<int> by_distance(static_cast<std::size_t>(k));
  std::iota(by_distance.begin(), by_distance.end(), 0);
  std::stable_sort(by_distance.begin(), by_distance.end(), [&](int a, int b) {
    return dist2[static_cast<std::size_t>(a)] < dist2[static_cast<std::size_t>(b)];
  });
  std::vector<int> best_to_worst;
  best_to_worst.reserve(static_cast<std::size_t>(k) + 1);
  std::size_t cursor = 0;
  while (cursor < by_distance.size() &&
         dist2[static_cast<std::size_t>(by_distance[cursor])] <= t) {
    best_to_worst.push_back(by_distance[cursor++]);
  }
  best_to_worst.push_back(k);  // unmatch option
  while (cursor < by_distance.size()) best_to_worst.push_back(by_distance[cursor++]);
  return LinearOrder::from_best_to_worst(best_to_worst);
}

}  // namespace

PreferenceProfile euclidean_preferences(const Mat& contexts_w, const Mat& contexts_f, double t) {
  const int n = contexts_w.rows;
  const int m = contexts_f.rows;
  // The threshold lives on the distance scale: a partner beats the unmatch
  // option iff the Euclidean distance between the contexts is at most t.
  // (Against squared distances, t = 8 would leave every pair unacceptable
  // under the N(+-1, I) context distributions and collapse every mechanism
  // to the all-unmatched matching.)
  const double t2 = t * t;
  PreferenceProfile profile;
  profile.workers.reserve(static_cast<std::size_t>(n));
  profile.firms.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < n; ++i) {
    std::vector<double> dist2(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) dist2[static_cast<std::size_t>(j)] = squared_distance(contexts_w, i, contexts_f, j);
    profile.workers.push_back(order_by_distance(dist2, t2));
  }
  for (int j = 0; j < m; ++j) {
    std::vector<double> dist2(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) dist2[static_cast<std::size_t>(i)] = squared_distance(contexts_f, j, contexts_w, i);
    profile.firms.push_back(order_by_distance(dist2, t2));
  }
  return profile;
}

std::uint64_t derive_record_seed(std::uint64_t base_seed, int record_index) {
  return splitmix64(splitmix64(base_seed) ^ static_cast<std::uint64_t>(record_index));
}

DatasetRecord generate_record(const DatagenConfig& config, int record_index) {
  DatasetRecord rec;
  rec.id = record_index;
  rec.record_seed = derive_record_seed(config.seed, record_index);
  Rng rng(rec.record_seed);
  auto [xw, xf] = sample_contexts(config.n, config.m, config.d, rng);
  rec.instance = Instance(std::move(xw), std::move(xf));
  rec.profile = euclidean_preferences(rec.instance.contexts_w, rec.instance.contexts_f, config.t);
  rec.mechanism_tag = config.mechanism;
  if (config.mechanism == "da") {
    rec.example = deferred_acceptance(rec.profile);
  } else if (config.mechanism == "eh") {
    rec.example = hungarian_matching(rec.profile, RewardSpec::eh());
  } else if (config.mechanism == "mh") {
    const int pick = config.n / 3;
    const std::vector<int> perm = rng.permutation(config.n);
    rec.mh_selected.assign(perm.begin(), perm.begin() + pick);
    std::sort(rec.mh_selected.begin(), rec.mh_selected.end());
    rec.example = hungarian_matching(rec.profile, RewardSpec::mh(rec.mh_selected));
  } else {
    throw std::invalid_argument("generate_record: unknown mechanism '" + config.mechanism + "'");
  }
  return rec;
}

Dataset generate_dataset(const DatagenConfig& config) {
  Dataset ds;
  ds.generator = Rng::generator_id();
  ds.config = config;
  ds.records.reserve(static_cast<std::size_t>(config.count));
  for (int i = 0; i < config.count; ++i) ds.records.push_back(generate_record(config, i));
  return ds;
}

RewardSpec reward_spec_for(const DatasetRecord& record) {
  if (record.mechanism_tag == "eh") return RewardSpec::eh();
  if (record.mechanism_tag == "mh") return RewardSpec::mh(record.mh_selected);
  throw std::invalid_argument("reward_spec_for: record has no reward mechanism");
}

namespace {

json config_to_json(const DatagenConfig& c) {
  return json{{"n", c.n},       {"m", c.m}, {"count", c.count}, {"mechanism", c.mechanism},
              {"seed", c.seed}, {"t", c.t}, {"d", c.d}};
}

DatagenConfig config_from_json(const json& j) {
  DatagenConfig c;
  c.n = j.at("n").get<int>();
  c.m = j.at("m").get<int>();
  c.count = j.at("count").get<int>();
  c.mechanism = j.at("mechanism").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.t = j.at("t").get<double>();
  c.d = j.at("d").get<int>();
  return c;
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows; ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols; ++j) row.push_back(m.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j.at(0).size()) : 0;
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int c = 0; c < cols; ++c) m.at(i, c) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

json record_to_json(const DatasetRecord& rec) {
  json orders_w = json::array();
  for (const LinearOrder& o : rec.profile.workers) orders_w.push_back(o.ranks());
  json orders_f = json::array();
  for (const LinearOrder& o : rec.profile.firms) orders_f.push_back(o.ranks());

  json pairs = json::array();
  json unmatched_workers = json::array();
  json unmatched_firms = json::array();
  for (int i = 0; i < rec.example.n(); ++i) {
    if (rec.example.worker_partner(i) == rec.example.m()) unmatched_workers.push_back(i);
  }
  for (int j = 0; j < rec.example.m(); ++j) {
    if (rec.example.firm_partner(j) == rec.example.n()) unmatched_firms.push_back(j);
  }
  for (const auto& [i, j] : rec.example.pairs()) pairs.push_back(json::array({i, j}));

  json out{{"id", rec.id},
           {"n", rec.instance.n},
           {"m", rec.instance.m},
           {"contexts_w", mat_to_json(rec.instance.contexts_w)},
           {"contexts_f", mat_to_json(rec.instance.contexts_f)},
           {"worker_orders", std::move(orders_w)},
           {"firm_orders", std::move(orders_f)},
           {"matching",
            json{{"pairs", std::move(pairs)},
                 {"unmatched_workers", std::move(unmatched_workers)},
                 {"unmatched_firms", std::move(unmatched_firms)}}},
           {"mechanism", rec.mechanism_tag},
           {"seed", rec.record_seed}};
  if (rec.mechanism_tag == "mh") out["mh_selected"] = rec.mh_selected;
  return out;
}

DatasetRecord record_from_json(const json& j) {
  DatasetRecord rec;
  rec.id = j.at("id").get<int>();
  const int n = j.at("n").get<int>();
  const int m = j.at("m").get<int>();
  rec.instance = Instance(mat_from_json(j.at("contexts_w")), mat_from_json(j.at("contexts_f")));
  if (rec.instance.n != n || rec.instance.m != m) {
    throw std::runtime_error("dataset record: context shapes disagree with n/m");
  }
  for (const auto& ranks : j.at("worker_orders")) {
    rec.profile.workers.push_back(LinearOrder(ranks.get<std::vector<int>>()));
  }
  for (const auto& ranks : j.at("firm_orders")) {
    rec.profile.firms.push_back(LinearOrder(ranks.get<std::vector<int>>()));
  }
  std::vector<std::pair<int, int>> pairs;
  for (const auto& p : j.at("matching").at("pairs")) {
    pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  }
  rec.example = MatchingMatrix::from_pairs(n, m, pairs);
  rec.mechanism_tag = j.at("mechanism").get<std::string>();
  if (j.contains("mh_selected")) rec.mh_selected = j.at("mh_selected").get<std::vector<int>>();
  rec.record_seed = j.at("seed").get<std::uint64_t>();
  return rec;
}

bool has_gz_suffix(const std::string& path) {
  return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

void write_all(const std::string& path, const std::string& text) {
  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    const int written = gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
    gzclose(f);
    if (written != static_cast<int>(text.size())) {
      throw std::runtime_error("short gzip write: " + path);
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_all(const std::string& path) {
  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
    std::string text;
    char buf[1 << 16];
    int got = 0;
    while ((got = gzread(f, buf, sizeof(buf))) > 0) text.append(buf, static_cast<std::size_t>(got));
    gzclose(f);
    return text;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& dataset) {
  std::string text;
  const json header{{"format_version", dataset.format_version},
                    {"generator", dataset.generator},
                    {"config", config_to_json(dataset.config)}};
  text += header.dump();
  text += '\n';
  for (const DatasetRecord& rec : dataset.records) {
    text += record_to_json(rec).dump();
    text += '\n';
  }
  write_all(path, text);
}

Dataset read_dataset(const std::string& path) {
  const std::string text = read_all(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path);
  const json header = json::parse(line);
  Dataset ds;
  ds.format_version = header.at("format_version").get<int>();
  if (ds.format_version != 1) throw std::runtime_error("unsupported dataset format version");
  ds.generator = header.at("generator").get<std::string>();
  ds.config = config_from_json(header.at("config"));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ds.records.push_back(record_from_json(json::parse(line)));
  }
  return ds;
}

}  // namespace matchkit
