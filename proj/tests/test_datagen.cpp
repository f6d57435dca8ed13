#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "matchkit/datagen.hpp"
#include "matchkit/metrics.hpp"

using namespace matchkit;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("datagen_test_") + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("context sampler hits the configured means") {
  Rng rng(91);
  auto [xw, xf] = sample_contexts(10000, 200, 10, rng);
  for (int c = 0; c < 10; ++c) {
    double s = 0.0;
    for (int i = 0; i < xw.rows; ++i) s += xw.at(i, c);
    CHECK(std::fabs(s / xw.rows - 1.0) < 0.05);
  }
  double s = 0.0;
  for (int j = 0; j < xf.rows; ++j) {
    for (int c = 0; c < 10; ++c) s += xf.at(j, c);
  }
  CHECK(std::fabs(s / (xf.rows * 10) + 1.0) < 0.05);
}

TEST_CASE("context sampler is reproducible") {
  Rng a(17), b(17);
  CHECK(sample_contexts(5, 4, 10, a) == sample_contexts(5, 4, 10, b));
}

TEST_CASE("euclidean preferences respect the acceptability threshold") {
  Mat xw(1, 1, 0.0);
  Mat xf(2, 1, 0.0);
  xf.at(0, 0) = 7.9;
  xf.at(1, 0) = 8.1;
  const PreferenceProfile p = euclidean_preferences(xw, xf, 8.0);
  const LinearOrder& o = p.workers[0];
  CHECK(o.prefers(0, o.unmatch_option()));   // distance 7.9 <= 8
  CHECK(o.prefers(o.unmatch_option(), 1));   // distance 8.1 > 8
  // boundary: exactly t is still acceptable
  Mat xb(1, 1, 0.0);
  Mat fb(1, 1, 8.0);
  const PreferenceProfile pb = euclidean_preferences(xb, fb, 8.0);
  CHECK(pb.workers[0].prefers(0, 1));
}

TEST_CASE("equidistant partners break toward the lower index") {
  Mat xw(1, 1, 0.0);
  Mat xf(2, 1, 0.0);
  xf.at(0, 0) = 2.0;
  xf.at(1, 0) = -2.0;
  const PreferenceProfile p = euclidean_preferences(xw, xf, 8.0);
  CHECK(p.workers[0].prefers(0, 1));
}

TEST_CASE("derived preferences are strict total orders") {
  Rng rng(92);
  for (int t = 0; t < 20; ++t) {
    auto [xw, xf] = sample_contexts(6, 5, 10, rng);
    const PreferenceProfile p = euclidean_preferences(xw, xf, 8.0);
    CHECK(p.n() == 6);
    CHECK(p.m() == 5);
    // LinearOrder construction validates the permutation property.
  }
}

TEST_CASE("datasets regenerate byte-identically and round-trip") {
  const DatagenConfig cfg{.n = 3, .m = 3, .count = 12, .mechanism = "da", .seed = 99, .t = 8.0, .d = 10};
  const Dataset ds = generate_dataset(cfg);
  const std::string path1 = temp_path("a.jsonl");
  const std::string path2 = temp_path("b.jsonl");
  write_dataset(path1, ds);
  write_dataset(path2, generate_dataset(cfg));
  CHECK(slurp(path1) == slurp(path2));

  const Dataset parsed = read_dataset(path1);
  CHECK(parsed.config == cfg);
  CHECK(parsed.generator == Rng::generator_id());
  REQUIRE(parsed.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) CHECK(parsed.records[i] == ds.records[i]);
  std::remove(path1.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("gzip datasets round-trip by extension") {
  const DatagenConfig cfg{.n = 2, .m = 2, .count = 5, .mechanism = "eh", .seed = 7, .t = 8.0, .d = 4};
  const Dataset ds = generate_dataset(cfg);
  const std::string path = temp_path("c.jsonl.gz");
  write_dataset(path, ds);
  const Dataset parsed = read_dataset(path);
  REQUIRE(parsed.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) CHECK(parsed.records[i] == ds.records[i]);
  std::remove(path.c_str());
}

TEST_CASE("stored preferences re-derive from stored contexts") {
  const DatagenConfig cfg{.n = 4, .m = 4, .count = 8, .mechanism = "da", .seed = 3, .t = 8.0, .d = 10};
  for (const DatasetRecord& rec : generate_dataset(cfg).records) {
    CHECK(euclidean_preferences(rec.instance.contexts_w, rec.instance.contexts_f, cfg.t) ==
          rec.profile);
  }
}

TEST_CASE("persisted examples satisfy their mechanism's properties") {
  {
    const DatagenConfig cfg{.n = 4, .m = 4, .count = 15, .mechanism = "da", .seed = 5, .t = 8.0, .d = 10};
    for (const DatasetRecord& rec : generate_dataset(cfg).records) {
      CHECK(validate_matching(rec.example.to_mat(), 4, 4).empty());
      CHECK(is_stable(rec.example, rec.profile));
    }
  }
  {
    const DatagenConfig cfg{.n = 3, .m = 3, .count = 15, .mechanism = "eh", .seed = 6, .t = 8.0, .d = 10};
    for (const DatasetRecord& rec : generate_dataset(cfg).records) {
      double best = -1.0;
      enumerate_matchings(3, 3, [&](const MatchingMatrix& mu) {
        best = std::max(best, matching_reward(mu, rec.profile, RewardSpec::eh()));
      });
      CHECK(matching_reward(rec.example, rec.profile, RewardSpec::eh()) == best);
    }
  }
}

TEST_CASE("mh records persist the selected workers and use them") {
  const DatagenConfig cfg{.n = 6, .m = 6, .count = 10, .mechanism = "mh", .seed = 11, .t = 8.0, .d = 10};
  for (const DatasetRecord& rec : generate_dataset(cfg).records) {
    CHECK(rec.mh_selected.size() == 2);  // floor(6 / 3)
    const RewardSpec spec = reward_spec_for(rec);
    CHECK(spec.alpha(rec.mh_selected[0]) == 2.0);
    CHECK(hungarian_matching(rec.profile, spec) == rec.example);
  }
}

TEST_CASE("unknown mechanisms are rejected") {
  DatagenConfig cfg;
  cfg.mechanism = "rsd";
  CHECK_THROWS_AS(generate_record(cfg, 0), std::invalid_argument);
}
