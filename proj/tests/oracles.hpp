#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// They favour the most literal formula over speed and share no code with the
// library.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using cplx = std::complex<double>;

inline std::vector<cplx> dft(const std::vector<cplx>& x, bool inverse = false) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * cplx(std::cos(angle), std::sin(angle));
    }
    out[k] = inverse ? acc / static_cast<double>(n) : acc;
  }
  return out;
}

// Analytic-signal magnitude after zeroing every bin outside [lo, hi] Hz.
inline std::vector<double> band_envelope(const std::vector<double>& x, double fs, double lo, double hi) {
  const std::size_t n = x.size();
  std::vector<cplx> spec = dft(std::vector<cplx>(x.begin(), x.end()));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t mirror = std::min(k, n - k);
    const double f = static_cast<double>(mirror) * fs / static_cast<double>(n);
    const bool in_band = f >= lo && f <= hi;
    if (!in_band || k == 0) {
      spec[k] = 0.0;
    } else if (2 * k < n) {
      spec[k] *= 2.0;
    } else if (2 * k > n) {
      spec[k] = 0.0;
    }
  }
  const auto analytic = dft(spec, true);
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) out[t] = std::abs(analytic[t]);
  return out;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (double v : a) ma += v;
  for (double v : b) mb += v;
  ma /= n;
  mb /= n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  if (da == 0.0 || db == 0.0) return 0.0;
  return num / std::sqrt(da * db);
}

inline Eigen::MatrixXd random_graph(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) w(i, j) = w(j, i) = u(rng);
  }
  return w;
}

inline std::vector<double> strength(const Eigen::MatrixXd& w) {
  const auto n = w.rows();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) s += w(i, j);
    }
    out[static_cast<std::size_t>(i)] = s / static_cast<double>(n - 1);
  }
  return out;
}

inline std::vector<double> clustering(const Eigen::MatrixXd& w) {
  const auto n = w.rows();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index k = 0; k < n; ++k) {
        if (j == i || k == i || j == k) continue;
        s += std::cbrt(w(i, j) * w(i, k) * w(j, k));
      }
    }
    const double ki = static_cast<double>(n - 1);
    out[static_cast<std::size_t>(i)] = s / (ki * (ki - 1.0));
  }
  return out;
}

// Leading eigenvector by dense symmetric eigendecomposition, unit norm, made nonnegative.
inline std::vector<double> centrality(const Eigen::MatrixXd& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(w);
  Eigen::VectorXd v = solver.eigenvectors().col(w.rows() - 1);
  if (v.sum() < 0.0) v = -v;
  v /= v.norm();
  return {v.data(), v.data() + v.size()};
}

inline double pair_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Average precision by sweeping every distinct score as a ">=" threshold.
inline double sweep_average_precision(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> thresholds = s;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double positives = 0.0;
  for (int v : y) positives += v;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, predicted = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) {
        predicted += 1.0;
        tp += y[i];
      }
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / predicted);
    prev_recall = recall;
  }
  return ap;
}

struct SignedRankExact {
  double statistic = 0.0;
  double p_value = 1.0;
  int n = 0;
};

// Two-sided exact p by enumerating all 2^n sign patterns of the mid-ranked |d|.
inline SignedRankExact signed_rank_enumeration(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
  }
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double below = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) below += 1.0;
      else if (std::abs(d[j]) == std::abs(d[i])) equal += 1.0;
    }
    rank[i] = below + (equal + 1.0) / 2.0;
  }
  double total = 0.0, w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += rank[i];
    if (d[i] > 0.0) w_plus += rank[i];
  }
  const double observed = std::min(w_plus, total - w_plus);
  std::uint64_t extreme = 0;
  const std::uint64_t patterns = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < patterns; ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1U) w += rank[i];
    }
    if (std::min(w, total - w) <= observed + 1e-9) ++extreme;
  }
  return {observed, static_cast<double>(extreme) / static_cast<double>(patterns), static_cast<int>(n)};
}

}  // namespace oracle
