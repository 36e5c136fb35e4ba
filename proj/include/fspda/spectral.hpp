#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "fspda/graph.hpp"
#include "fspda/sampling.hpp"

namespace fspda {

// Expected per-coordinate Laplacian block of A^T R A, R = E[I(xi_a)]
// (n x n; every coordinate carries the same block because masks are
// exchangeable across coordinates). Symmetric PSD with the consensus
// direction in its kernel.
Eigen::MatrixXd expected_laplacian(const GraphSampler& sampler,
                                   const IncidenceMatrix& incidence);

// Plain graph Laplacian block A^T A.
Eigen::MatrixXd graph_laplacian(const IncidenceMatrix& incidence);

// Orthonormal basis of the complement of the consensus direction
// (n x (n-1)); used to deflate the consensus mode before eigen solves.
Eigen::MatrixXd consensus_complement_basis(int n);

// Moore-Penrose pseudo-inverse of a PSD matrix whose kernel is exactly the
// consensus direction.
Eigen::MatrixXd consensus_pinv(const Eigen::MatrixXd& psd);

enum class SpectralMode { Exact, MonteCarlo };

struct SpectralReport {
  double rho_min = 0, rho_max = 0;        // spectrum of A^T R A on range(K)
  double rho_bar_min = 0, rho_bar_max = 0;  // spectrum of A^T A on range(K)
  double sigma_A_sq = 0;
  std::string method;  // "exact-enumeration" | "monte-carlo(N)"
  std::optional<long> mc_samples;
  std::optional<double> mc_stderr;
  bool period_averaged = false;  // PeriodicLocalUpdate constants
};

// Computes the Assumption-2/4 constants. sigma_A^2 is the largest eigenvalue,
// on range(K), of M = E[(A(xi)^T A)^2] - (A^T R A)^2. Exact mode enumerates
// every (edge pattern x mask pattern) outcome and fails loudly when the
// outcome count exceeds `enumeration_cap` (advising Monte Carlo);
// Monte Carlo mode reports the sample count and a standard-error estimate of
// the top-eigenvector quadratic form.
SpectralReport spectral_constants(const GraphSampler& sampler,
                                  const IncidenceMatrix& incidence,
                                  SpectralMode mode,
                                  long mc_samples = 100000,
                                  std::uint64_t mc_seed = 0x5EC7,
                                  double enumeration_cap = 1048576.0);

}  // namespace fspda
