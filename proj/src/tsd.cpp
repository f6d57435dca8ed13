#include "matchkit/tsd.hpp"

#include <cmath>
#include <stdexcept>

namespace matchkit {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

PreferenceTensorData build_preference_tensor(const PreferenceProfile& profile) {
  const int n = profile.n();
  const int m = profile.m();
  PreferenceTensorData out;
  out.n = n;
  out.m = m;
  const std::size_t wsz = static_cast<std::size_t>(m + 1) * (m + 1);
  const std::size_t fsz = static_cast<std::size_t>(n + 1) * (n + 1);
  out.worker.assign(static_cast<std::size_t>(n) * wsz, 0.0);
  out.firm.assign(static_cast<std::size_t>(m) * fsz, 0.0);
  for (int i = 0; i < n; ++i) {
    const LinearOrder& o = profile.workers[static_cast<std::size_t>(i)];
    for (int j = 0; j <= m; ++j) {
      out.worker[static_cast<std::size_t>(i) * wsz + static_cast<std::size_t>(j) * (m + 1) +
                 static_cast<std::size_t>(o.ord(j) - 1)] = 1.0;
    }
  }
  for (int j = 0; j < m; ++j) {
    const LinearOrder& o = profile.firms[static_cast<std::size_t>(j)];
    for (int i = 0; i <= n; ++i) {
      out.firm[static_cast<std::size_t>(j) * fsz + static_cast<std::size_t>(i) * (n + 1) +
               static_cast<std::size_t>(o.ord(i) - 1)] = 1.0;
    }
  }
  return out;
}

Mat build_ranking_matrix(const Ranking& ranking, int n, int m) {
  validate_ranking(ranking, n, m);
  Mat r(n + m, n + m, 0.0);
  for (int k = 0; k < n + m; ++k) r.at(ranking.order[static_cast<std::size_t>(k)], k) = 1.0;
  return r;
}

Ranking ranking_from_matrix(const Mat& r, int n, int m) {
  if (r.rows != n + m || r.cols != n + m) {
    throw std::invalid_argument("ranking_from_matrix: wrong shape");
  }
  Ranking out;
  out.order.resize(static_cast<std::size_t>(n + m));
  for (int k = 0; k < n + m; ++k) {
    int best = 0;
    for (int a = 1; a < n + m; ++a) {
      if (r.at(a, k) > r.at(best, k)) best = a;
    }
    out.order[static_cast<std::size_t>(k)] = best;
  }
  validate_ranking(out, n, m);
  return out;
}

Tensor find_counterpart(Tape& tape, Tensor p) {
  Tensor c = tape.colsum(p);
  c = tape.cumsum_row(c);
  c = tape.triangle_window(c);
  return tape.matvec(p, c);
}

RankingMasks create_ranking_masks(Tape& tape, Tensor r, int n, int m) {
  if (r.shape() != Shape::mat(n + m, n + m)) {
    throw std::invalid_argument("create_ranking_masks: ranking matrix has wrong shape");
  }
  RankingMasks masks;
  masks.worker.reserve(static_cast<std::size_t>(n + m));
  masks.firm.reserve(static_cast<std::size_t>(n + m));
  for (int k = 0; k < n + m; ++k) {
    const Tensor df = tape.col_segment(r, k, n, n + m);
    const Tensor dw = tape.col_segment(r, k, 0, n);
    masks.worker.push_back(
        tape.scale(tape.transpose(tape.repeat_rows(tape.append_zero(df), m + 1)), -1.0));
    masks.firm.push_back(
        tape.scale(tape.transpose(tape.repeat_rows(tape.append_zero(dw), n + 1)), -1.0));
  }
  return masks;
}

Tensor tsd(Tape& tape, Tensor pw, Tensor pf, Tensor r, int n, int m) {
  if (pw.shape() != Shape::stack(n, m + 1, m + 1) || pf.shape() != Shape::stack(m, n + 1, n + 1) ||
      r.shape() != Shape::mat(n + m, n + m)) {
    throw std::invalid_argument("tsd: shape mismatch");
  }
  const RankingMasks masks = create_ranking_masks(tape, r, n, m);

  std::vector<double> mask_w_vals(static_cast<std::size_t>(m + 1), 1.0);
  mask_w_vals.back() = 0.0;
  std::vector<double> mask_f_vals(static_cast<std::size_t>(n + 1), 1.0);
  mask_f_vals.back() = 0.0;
  const Tensor mask_w = tape.constant(Shape::vec(m + 1), std::move(mask_w_vals));
  const Tensor mask_f = tape.constant(Shape::vec(n + 1), std::move(mask_f_vals));
  const Tensor ones_n1 = tape.constant_fill(Shape::vec(n + 1), 1.0);
  const Tensor ones_m1 = tape.constant_fill(Shape::vec(m + 1), 1.0);

  Tensor acc = tape.constant_fill(Shape::mat(n + 1, m + 1), 0.0);
  for (int k = 0; k < n + m; ++k) {
    const Tensor d_w = tape.col_segment(r, k, 0, n);
    const Tensor d_f = tape.col_segment(r, k, n, n + m);
    const Tensor p_w = tape.stack_contract(pw, d_w);
    const Tensor p_f = tape.stack_contract(pf, d_f);
    const Tensor c_w = find_counterpart(tape, p_w);
    const Tensor c_f = find_counterpart(tape, p_f);
    const Tensor m_w = tape.outer(tape.append_zero(d_w), c_w);
    const Tensor m_f = tape.outer(tape.append_zero(d_f), c_f);
    acc = tape.add(tape.add(acc, m_w), tape.transpose(m_f));
    const Tensor v_w = tape.scale(
        tape.transpose(tape.repeat_rows(tape.elementwise_mul(c_w, mask_w), m + 1)), -1.0);
    const Tensor v_f = tape.scale(
        tape.transpose(tape.repeat_rows(tape.elementwise_mul(c_f, mask_f), n + 1)), -1.0);
    pw = tape.stack_add_matrix(tape.stack_add_matrix(pw, masks.worker[static_cast<std::size_t>(k)]), v_w);
    pf = tape.stack_add_matrix(tape.stack_add_matrix(pf, masks.firm[static_cast<std::size_t>(k)]), v_f);
    const Tensor s_w = tape.slice(tape.sub(ones_n1, c_f), 0, n);
    const Tensor s_f = tape.slice(tape.sub(ones_m1, c_w), 0, m);
    pw = tape.stack_scale(tape.relu(pw), s_w);
    pf = tape.stack_scale(tape.relu(pf), s_f);
  }
  return acc;
}

namespace {

// Forward-only TSD with reused buffers; arithmetic order matches the tape
// implementation exactly so outputs compare equal.
struct RawTsd {
  int n, m, n1, m1;
  std::vector<double> w_stack, f_stack;
  const Mat* r = nullptr;
  Mat acc;
  std::vector<double> p_w, p_f, c_w, c_f, d_w, d_f, cs;

  RawTsd(const PreferenceTensorData& prefs, const Mat& ranking)
      : n(prefs.n), m(prefs.m), n1(prefs.n + 1), m1(prefs.m + 1),
        w_stack(prefs.worker), f_stack(prefs.firm), r(&ranking), acc(n1, m1, 0.0) {
    if (ranking.rows != n + m || ranking.cols != n + m) {
      throw std::invalid_argument("tsd_forward: ranking matrix has wrong shape");
    }
    p_w.resize(static_cast<std::size_t>(m1) * m1);
    p_f.resize(static_cast<std::size_t>(n1) * n1);
    c_w.resize(static_cast<std::size_t>(m1));
    c_f.resize(static_cast<std::size_t>(n1));
    d_w.resize(static_cast<std::size_t>(n));
    d_f.resize(static_cast<std::size_t>(m));
    cs.resize(static_cast<std::size_t>(std::max(m1, n1)));
  }

  // FindCounterpart on a p x q row-major buffer.
  void counterpart(const std::vector<double>& mat, int p, int q, std::vector<double>& out) {
    for (int j = 0; j < q; ++j) cs[static_cast<std::size_t>(j)] = 0.0;
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < q; ++j) cs[static_cast<std::size_t>(j)] += mat[static_cast<std::size_t>(i) * q + j];
    }
    double run = 0.0;
    for (int j = 0; j < q; ++j) {
      run += cs[static_cast<std::size_t>(j)];
      const double x = run;
      cs[static_cast<std::size_t>(j)] = x <= 0.0 ? 0.0 : x <= 1.0 ? x : x <= 2.0 ? 2.0 - x : 0.0;
    }
    for (int i = 0; i < p; ++i) {
      double s = 0.0;
      for (int j = 0; j < q; ++j) s += mat[static_cast<std::size_t>(i) * q + j] * cs[static_cast<std::size_t>(j)];
      out[static_cast<std::size_t>(i)] = s;
    }
  }

  void step(int k) {
    for (int i = 0; i < n; ++i) d_w[static_cast<std::size_t>(i)] = r->at(i, k);
    for (int j = 0; j < m; ++j) d_f[static_cast<std::size_t>(j)] = r->at(n + j, k);

    const std::size_t wsz = static_cast<std::size_t>(m1) * m1;
    const std::size_t fsz = static_cast<std::size_t>(n1) * n1;
    std::fill(p_w.begin(), p_w.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      const double wgt = d_w[static_cast<std::size_t>(i)];
      if (wgt == 0.0) continue;
      const double* src = w_stack.data() + static_cast<std::size_t>(i) * wsz;
      for (std::size_t e = 0; e < wsz; ++e) p_w[e] += wgt * src[e];
    }
    std::fill(p_f.begin(), p_f.end(), 0.0);
    for (int j = 0; j < m; ++j) {
      const double wgt = d_f[static_cast<std::size_t>(j)];
      if (wgt == 0.0) continue;
      const double* src = f_stack.data() + static_cast<std::size_t>(j) * fsz;
      for (std::size_t e = 0; e < fsz; ++e) p_f[e] += wgt * src[e];
    }

    counterpart(p_w, m1, m1, c_w);
    counterpart(p_f, n1, n1, c_f);

    // M <- (M + M_w) + M_f^T
    for (int i = 0; i < n; ++i) {
      const double wgt = d_w[static_cast<std::size_t>(i)];
      for (int j = 0; j <= m; ++j) acc.at(i, j) += wgt * c_w[static_cast<std::size_t>(j)];
    }
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j < m; ++j) acc.at(i, j) += d_f[static_cast<std::size_t>(j)] * c_f[static_cast<std::size_t>(i)];
    }

    // P_W: rows j<m get (+(-d_f[j])) + (-c_w[j]); then ReLU; then scale by 1-c_f[i].
    for (int i = 0; i < n; ++i) {
      const double s = 1.0 - c_f[static_cast<std::size_t>(i)];
      double* mat = w_stack.data() + static_cast<std::size_t>(i) * wsz;
      for (int j = 0; j <= m; ++j) {
        const double u = j < m ? -d_f[static_cast<std::size_t>(j)] : 0.0;
        const double v = j < m ? -c_w[static_cast<std::size_t>(j)] : 0.0;
        double* row = mat + static_cast<std::size_t>(j) * m1;
        for (int l = 0; l <= m; ++l) {
          double x = (row[l] + u) + v;
          x = x > 0.0 ? x : 0.0;
          row[l] = x * s;
        }
      }
    }
    for (int j = 0; j < m; ++j) {
      const double s = 1.0 - c_w[static_cast<std::size_t>(j)];
      double* mat = f_stack.data() + static_cast<std::size_t>(j) * fsz;
      for (int i = 0; i <= n; ++i) {
        const double u = i < n ? -d_w[static_cast<std::size_t>(i)] : 0.0;
        const double v = i < n ? -c_f[static_cast<std::size_t>(i)] : 0.0;
        double* row = mat + static_cast<std::size_t>(i) * n1;
        for (int l = 0; l <= n; ++l) {
          double x = (row[l] + u) + v;
          x = x > 0.0 ? x : 0.0;
          row[l] = x * s;
        }
      }
    }
  }
};

}  // namespace

Mat tsd_forward(const PreferenceTensorData& prefs, const Mat& r) {
  RawTsd state(prefs, r);
  for (int k = 0; k < prefs.n + prefs.m; ++k) state.step(k);
  return state.acc;
}

namespace {

struct SdTrace {
  std::vector<int> matched_round;  // 1-based round, 0 = never
  std::vector<bool> passive;
};

SdTrace trace_sd(const PreferenceProfile& profile, const Ranking& ranking) {
  const int n = profile.n();
  const int m = profile.m();
  SdTrace tr{std::vector<int>(static_cast<std::size_t>(n + m), 0),
             std::vector<bool>(static_cast<std::size_t>(n + m), false)};
  for (int k = 0; k < n + m; ++k) {
    const int a = ranking.order[static_cast<std::size_t>(k)];
    if (tr.matched_round[static_cast<std::size_t>(a)] != 0) continue;
    const bool is_worker = a < n;
    const LinearOrder& pref =
        is_worker ? profile.workers[static_cast<std::size_t>(a)]
                  : profile.firms[static_cast<std::size_t>(a - n)];
    for (int rk = 1; rk <= pref.num_options(); ++rk) {
      const int opt = pref.option_at(rk);
      if (opt == pref.unmatch_option()) {
        tr.matched_round[static_cast<std::size_t>(a)] = k + 1;
        break;
      }
      const int partner = is_worker ? n + opt : opt;
      if (tr.matched_round[static_cast<std::size_t>(partner)] == 0) {
        tr.matched_round[static_cast<std::size_t>(a)] = k + 1;
        tr.matched_round[static_cast<std::size_t>(partner)] = k + 1;
        tr.passive[static_cast<std::size_t>(partner)] = true;
        break;
      }
    }
  }
  return tr;
}

bool is_zero_matrix(const double* mat, std::size_t sz) {
  for (std::size_t e = 0; e < sz; ++e) {
    if (mat[e] != 0.0) return false;
  }
  return true;
}

// Admissibility per FindCounterpart's conditions: binary with at most one 1
// per row and per column.
bool admissible(const double* mat, int p, int q, bool& binary_ok) {
  std::vector<double> colsum(static_cast<std::size_t>(q), 0.0);
  binary_ok = true;
  for (int i = 0; i < p; ++i) {
    double rowsum = 0.0;
    for (int j = 0; j < q; ++j) {
      const double v = mat[static_cast<std::size_t>(i) * q + j];
      if (v != 0.0 && v != 1.0) binary_ok = false;
      rowsum += v;
      colsum[static_cast<std::size_t>(j)] += v;
    }
    if (rowsum > 1.0) return false;
  }
  for (int j = 0; j < q; ++j) {
    if (colsum[static_cast<std::size_t>(j)] > 1.0) return false;
  }
  return binary_ok;
}

}  // namespace

InvariantReport tsd_loop_invariant_probe(const PreferenceProfile& profile,
                                         const Ranking& ranking, int upto_k) {
  const int n = profile.n();
  const int m = profile.m();
  validate_ranking(ranking, n, m);
  if (upto_k < 0 || upto_k > n + m) {
    throw std::invalid_argument("tsd_loop_invariant_probe: bad iteration bound");
  }
  const PreferenceTensorData prefs = build_preference_tensor(profile);
  const Mat r = build_ranking_matrix(ranking, n, m);
  const SdTrace tr = trace_sd(profile, ranking);
  RawTsd state(prefs, r);
  const std::size_t wsz = static_cast<std::size_t>(m + 1) * (m + 1);
  const std::size_t fsz = static_cast<std::size_t>(n + 1) * (n + 1);

  const auto fail = [](const char* what, int it) {
    return InvariantReport{false, what, it};
  };

  for (int k = 1; k <= upto_k; ++k) {
    state.step(k - 1);
    // (A)/(B): admissible per-agent matrices.
    for (int i = 0; i < n; ++i) {
      bool binary_ok = true;
      if (!admissible(state.w_stack.data() + static_cast<std::size_t>(i) * wsz, m + 1, m + 1, binary_ok)) {
        return fail("(A) worker preference matrix is not admissible", k);
      }
    }
    for (int j = 0; j < m; ++j) {
      bool binary_ok = true;
      if (!admissible(state.f_stack.data() + static_cast<std::size_t>(j) * fsz, n + 1, n + 1, binary_ok)) {
        return fail("(B) firm preference matrix is not admissible", k);
      }
    }
    // (C): zero matrix iff passively matched by round k.
    for (int a = 0; a < n + m; ++a) {
      const bool passively_matched =
          tr.passive[static_cast<std::size_t>(a)] && tr.matched_round[static_cast<std::size_t>(a)] <= k;
      const double* mat = a < n ? state.w_stack.data() + static_cast<std::size_t>(a) * wsz
                                : state.f_stack.data() + static_cast<std::size_t>(a - n) * fsz;
      const std::size_t sz = a < n ? wsz : fsz;
      if (is_zero_matrix(mat, sz) != passively_matched) {
        return fail("(C) zero-matrix state disagrees with passive matching", k);
      }
    }
    // (D): in non-zero matrices, rows of matched agents are zero and all other
    // rows equal the input.
    for (int i = 0; i < n; ++i) {
      const double* mat = state.w_stack.data() + static_cast<std::size_t>(i) * wsz;
      if (is_zero_matrix(mat, wsz)) continue;
      const double* init = prefs.worker.data() + static_cast<std::size_t>(i) * wsz;
      for (int j = 0; j < m; ++j) {
        const bool opt_matched = tr.matched_round[static_cast<std::size_t>(n + j)] != 0 &&
                                 tr.matched_round[static_cast<std::size_t>(n + j)] <= k;
        for (int l = 0; l <= m; ++l) {
          const double v = mat[static_cast<std::size_t>(j) * (m + 1) + l];
          const double v0 = init[static_cast<std::size_t>(j) * (m + 1) + l];
          if (opt_matched ? v != 0.0 : v != v0) {
            return fail("(D) worker stack row disagrees with matched-agent bookkeeping", k);
          }
        }
      }
      for (int l = 0; l <= m; ++l) {  // unmatch row never changes
        if (mat[static_cast<std::size_t>(m) * (m + 1) + l] != init[static_cast<std::size_t>(m) * (m + 1) + l]) {
          return fail("(D) worker stack unmatch row changed", k);
        }
      }
    }
    for (int j = 0; j < m; ++j) {
      const double* mat = state.f_stack.data() + static_cast<std::size_t>(j) * fsz;
      if (is_zero_matrix(mat, fsz)) continue;
      const double* init = prefs.firm.data() + static_cast<std::size_t>(j) * fsz;
      for (int i = 0; i < n; ++i) {
        const bool opt_matched = tr.matched_round[static_cast<std::size_t>(i)] != 0 &&
                                 tr.matched_round[static_cast<std::size_t>(i)] <= k;
        for (int l = 0; l <= n; ++l) {
          const double v = mat[static_cast<std::size_t>(i) * (n + 1) + l];
          const double v0 = init[static_cast<std::size_t>(i) * (n + 1) + l];
          if (opt_matched ? v != 0.0 : v != v0) {
            return fail("(D) firm stack row disagrees with matched-agent bookkeeping", k);
          }
        }
      }
      for (int l = 0; l <= n; ++l) {
        if (mat[static_cast<std::size_t>(n) * (n + 1) + l] != init[static_cast<std::size_t>(n) * (n + 1) + l]) {
          return fail("(D) firm stack unmatch row changed", k);
        }
      }
    }
    // (E): accumulated matrix equals the partial SD result.
    const Mat partial = run_sd_partial(profile, ranking, k);
    if (!(state.acc == partial)) {
      return fail("(E) accumulated matching differs from partial SD", k);
    }
  }
  return InvariantReport{};
}

}  // namespace matchkit
