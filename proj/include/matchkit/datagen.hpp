#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "matchkit/dense.hpp"
#include "matchkit/matching.hpp"
#include "matchkit/mechanisms.hpp"
#include "matchkit/rng.hpp"

namespace matchkit {

struct DatagenConfig {
  int n = 10;
  int m = 10;
  int count = 1000;
  std::string mechanism = "da";  // da | eh | mh
  std::uint64_t seed = 0;
  double t = 8.0;  // Euclidean acceptability threshold (squared distance)
  int d = 10;

  bool operator==(const DatagenConfig&) const = default;
};

struct DatasetRecord {
  int id = 0;
  Instance instance;
  PreferenceProfile profile;
  MatchingMatrix example = MatchingMatrix::all_unmatched(1, 1);
  std::string mechanism_tag;
  std::vector<int> mh_selected;  // empty unless mechanism = mh
  std::uint64_t record_seed = 0;

  bool operator==(const DatasetRecord&) const = default;
};

struct Dataset {
  int format_version = 1;
  std::string generator;
  DatagenConfig config;
  std::vector<DatasetRecord> records;
};

// Worker rows ~ N(+1, I), firm rows ~ N(-1, I), d-dimensional.
std::pair<Mat, Mat> sample_contexts(int n, int m, int d, Rng& rng);

// Closer (squared Euclidean) is better; a partner is above the unmatch option
// iff its squared distance is at most t; ties break toward the lower index.
PreferenceProfile euclidean_preferences(const Mat& contexts_w, const Mat& contexts_f, double t);

std::uint64_t derive_record_seed(std::uint64_t base_seed, int record_index);

DatasetRecord generate_record(const DatagenConfig& config, int record_index);
Dataset generate_dataset(const DatagenConfig& config);

// JSONL: one header object then one object per record; transparently
// gzip-compressed when the path ends in ".gz".
void write_dataset(const std::string& path, const Dataset& dataset);
Dataset read_dataset(const std::string& path);

RewardSpec reward_spec_for(const DatasetRecord& record);

}  // namespace matchkit
