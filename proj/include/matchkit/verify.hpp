#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace matchkit {

struct VerifyReport {
  std::string suite;
  bool pass = true;
  std::vector<std::string> failures;
  std::map<std::string, double> stats;
};

// TSD output equals discrete SD elementwise on random hard-ranking instances
// with n, m in 1..6 (n != m included).
VerifyReport verify_tsd_equiv(int trials, std::uint64_t seed);

// Exhaustive misreport search on n = m = 3: SD under fixed random rankings
// and NeuralSD inference under random parameters admit no profitable lie.
VerifyReport verify_sp(int trials, std::uint64_t seed);

// SD / NeuralSD outputs are never Pareto dominated (exhaustive, n = m = 3).
VerifyReport verify_pareto(int trials, std::uint64_t seed);

// IRV of SD stays within 1/2 on random instances (n, m <= 8) and the
// adversarial profile (passively matched agents rank partners last) attains
// at least 0.45.
VerifyReport verify_irv(int trials, std::uint64_t seed);

// Hungarian mechanism objective equals factorial brute force (n = m <= 4).
VerifyReport verify_hungarian(int trials, std::uint64_t seed);

std::vector<VerifyReport> verify_all(int trials, std::uint64_t seed);

}  // namespace matchkit
