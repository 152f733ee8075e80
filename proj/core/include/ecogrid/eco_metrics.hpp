#pragma once

// Information-theoretic measures over a nonnegative flow matrix.

#include <Eigen/Dense>

#include "ecogrid/eco_matrix.hpp"

namespace ecogrid {

/// -k ln p. Requires 0 < p <= 1 and k > 0.
double surprisal(double p, double k = 1.0);

/// -k p ln p, with value 0 at p = 0. Requires 0 <= p <= 1 and k > 0.
double indeterminacy(double p, double k = 1.0);

/// Sum of all flows. Throws std::invalid_argument on a negative entry.
double tstp(const Eigen::MatrixXd& T);

/// TSTp-scaled mutual information of the flow distribution, in flow*bits:
///   sum_ij T_ij log2(T_ij TSTp / (T_i. T_.j))
/// with row sums T_i. and column sums T_.j. Zero entries contribute nothing.
double ascendency(const Eigen::MatrixXd& T);

/// TSTp-scaled entropy of the flow distribution, in flow*bits:
///   -sum_ij T_ij log2(T_ij / TSTp)
double development_capacity(const Eigen::MatrixXd& T);

/// -a ln a with a = asc/dc (a := 1 when dc = 0). The result lies in [0, 1/e]
/// and peaks at a = 1/e. Throws if asc exceeds dc by more than 1e-9 relative.
double robustness(double asc, double dc);

struct EcoMetrics {
  double tstp = 0.0;
  double asc = 0.0;
  double dc = 0.0;
  double ratio = 1.0;       // asc / dc
  double robustness = 0.0;  // R_ECO
};

/// All measures for one matrix. Throws std::invalid_argument when TSTp = 0.
EcoMetrics metrics(const Eigen::MatrixXd& T);
EcoMetrics metrics(const EcoFlowMatrix& matrix);

}  // namespace ecogrid
