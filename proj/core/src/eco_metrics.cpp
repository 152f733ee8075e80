#include "ecogrid/eco_metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

namespace ecogrid {

double surprisal(double p, double k) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument(fmt::format("surprisal needs 0 < p <= 1 (got {})", p));
  if (!(k > 0.0)) throw std::invalid_argument(fmt::format("scale k must be positive (got {})", k));
  return -k * std::log(p);
}

double indeterminacy(double p, double k) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(fmt::format("indeterminacy needs 0 <= p <= 1 (got {})", p));
  if (!(k > 0.0)) throw std::invalid_argument(fmt::format("scale k must be positive (got {})", k));
  if (p == 0.0) return 0.0;
  return -k * p * std::log(p);
}

double tstp(const Eigen::MatrixXd& T) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < T.cols(); ++j) {
    for (Eigen::Index i = 0; i < T.rows(); ++i) {
      const double v = T(i, j);
      if (v < 0.0 || std::isnan(v)) throw std::invalid_argument(fmt::format("negative flow T({}, {}) = {}", i, j, v));
      total += v;
    }
  }
  return total;
}

namespace {

double require_throughput(const Eigen::MatrixXd& T) {
  const double total = tstp(T);
  if (!(total > 0.0)) throw std::invalid_argument("total system throughput is zero");
  return total;
}

}  // namespace

// Both sums are accumulated in extended precision: when the ratio is small,
// ASC is a difference of much larger terms and double rounding would show
// up in the ratio.
double ascendency(const Eigen::MatrixXd& T) {
  const double total_d = require_throughput(T);
  using Wide = long double;
  std::vector<Wide> rows(static_cast<std::size_t>(T.rows()), 0.0L);
  std::vector<Wide> cols(static_cast<std::size_t>(T.cols()), 0.0L);
  Wide total = 0.0L;
  for (Eigen::Index j = 0; j < T.cols(); ++j) {
    for (Eigen::Index i = 0; i < T.rows(); ++i) {
      const Wide v = T(i, j);
      rows[static_cast<std::size_t>(i)] += v;
      cols[static_cast<std::size_t>(j)] += v;
      total += v;
    }
  }
  Wide sum = 0.0L;
  for (Eigen::Index j = 0; j < T.cols(); ++j) {
    for (Eigen::Index i = 0; i < T.rows(); ++i) {
      const Wide v = T(i, j);
      if (v > 0.0L) {
        sum += v * std::log2(v * total / (rows[static_cast<std::size_t>(i)] * cols[static_cast<std::size_t>(j)]));
      }
    }
  }
  const auto asc = static_cast<double>(sum);
  // Mutual information is nonnegative; clip summation noise.
  return asc < 0.0 && asc > -1e-12 * total_d ? 0.0 : asc;
}

double development_capacity(const Eigen::MatrixXd& T) {
  require_throughput(T);
  long double total = 0.0L;
  for (Eigen::Index j = 0; j < T.cols(); ++j) {
    for (Eigen::Index i = 0; i < T.rows(); ++i) total += T(i, j);
  }
  long double sum = 0.0L;
  for (Eigen::Index j = 0; j < T.cols(); ++j) {
    for (Eigen::Index i = 0; i < T.rows(); ++i) {
      const long double v = T(i, j);
      if (v > 0.0L) sum -= v * std::log2(v / total);
    }
  }
  return static_cast<double>(sum);
}

double robustness(double asc, double dc) {
  if (!(dc >= 0.0) || !(asc >= 0.0)) {
    throw std::invalid_argument(fmt::format("robustness needs asc >= 0 and dc >= 0 (got {}, {})", asc, dc));
  }
  if (dc == 0.0) {
    if (asc > 0.0) throw std::invalid_argument(fmt::format("ascendency {} exceeds zero capacity", asc));
    return 0.0;
  }
  double a = asc / dc;
  if (a > 1.0 + 1e-9) throw std::invalid_argument(fmt::format("ascendency {} exceeds development capacity {}", asc, dc));
  a = std::min(a, 1.0);
  if (a == 0.0 || a == 1.0) return 0.0;
  return -a * std::log(a);
}

EcoMetrics metrics(const Eigen::MatrixXd& T) {
  EcoMetrics m;
  m.tstp = require_throughput(T);
  m.asc = ascendency(T);
  m.dc = development_capacity(T);
  m.ratio = m.dc > 0.0 ? std::min(m.asc / m.dc, 1.0) : 1.0;
  m.robustness = robustness(m.asc, m.dc);
  return m;
}

EcoMetrics metrics(const EcoFlowMatrix& matrix) { return metrics(matrix.T); }

}  // namespace ecogrid
