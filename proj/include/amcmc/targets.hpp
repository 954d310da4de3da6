#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "amcmc/sparse_core.hpp"

namespace amcmc {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// A differentiable log-density known up to a constant. Evaluations must be
/// pure and reentrant; one model may be shared read-only by many chains.
class TargetModel {
  public:
    virtual ~TargetModel() = default;

    virtual Index dim() const = 0;
    virtual std::string name() const = 0;
    virtual double log_density(const Vector& x) const = 0;
    virtual Vector grad_log_density(const Vector& x) const = 0;

    /// Exact covariance when the target is Gaussian.
    virtual std::optional<DenseSymMatrix> analytic_covariance() const { return std::nullopt; }
};

/// Sparse pattern (off-diagonal nonzeros) of a symmetric sparse matrix.
SparsityPattern pattern_of(const SparseMatrix& m);

/*------------------------------------------------------------------------------
 *  Gaussian with sparse precision
 *----------------------------------------------------------------------------*/
class GaussianTarget final : public TargetModel {
  public:
    GaussianTarget(Vector mean, SparseMatrix precision, std::string name = "gaussian");

    /// Stationary AR(1) chain with unit marginal variance: tridiagonal precision.
    static GaussianTarget ar1(Index n, double rho);
    /// Independent coordinates with the given standard deviations.
    static GaussianTarget independent(const Vector& sd);
    /// Dense covariance given directly.
    static GaussianTarget from_covariance(const Vector& mean, const Eigen::MatrixXd& covariance);

    Index dim() const override { return static_cast<Index>(mean_.size()); }
    std::string name() const override { return name_; }
    double log_density(const Vector& x) const override;
    Vector grad_log_density(const Vector& x) const override;
    std::optional<DenseSymMatrix> analytic_covariance() const override;

    const SparseMatrix& precision() const { return precision_; }
    const Vector& mean() const { return mean_; }

  private:
    Vector mean_;
    SparseMatrix precision_;
    std::string name_;
};

/*------------------------------------------------------------------------------
 *  Lattice GMRF posterior
 *----------------------------------------------------------------------------*/
struct LatticeGmrfParams {
    Index side = 10;
    double kappa2 = 0.1;
    int alpha = 2;
    double sigma_obs = 0.5;
    /// Number of observed nodes; negative means n/4 (at least 1).
    Index n_obs = -1;
    std::uint64_t seed = 1;
};

/// Posterior of a lattice GMRF prior observed with Gaussian noise at a
/// random subset of nodes:
///
///   log pi(x | y) = -|y - A x|^2 / (2 sigma^2) - x^T Q x / 2 + const,
///
/// with Q = K (alpha = 1) or K^T K (alpha = 2), K = kappa2*I + G and G the
/// 5-point graph Laplacian of the side x side lattice.
class LatticeGmrfPosterior final : public TargetModel {
  public:
    explicit LatticeGmrfPosterior(const LatticeGmrfParams& params);

    Index dim() const override { return static_cast<Index>(prior_precision_.rows()); }
    std::string name() const override { return "lattice_gmrf"; }
    double log_density(const Vector& x) const override;
    Vector grad_log_density(const Vector& x) const override;
    std::optional<DenseSymMatrix> analytic_covariance() const override;

    const LatticeGmrfParams& params() const { return params_; }
    const SparseMatrix& prior_precision() const { return prior_precision_; }
    const SparseMatrix& observation_matrix() const { return obs_; }
    const Vector& observations() const { return y_; }
    const std::vector<Index>& observed_nodes() const { return nodes_; }

    /// Q + A^T A / sigma^2
    SparseMatrix posterior_precision() const;
    Vector posterior_mean() const;

  private:
    LatticeGmrfParams params_;
    SparseMatrix prior_precision_;
    SparseMatrix obs_;
    std::vector<Index> nodes_;
    Vector y_;
};

/// 5-point graph Laplacian of a side x side lattice (row-major node order).
SparseMatrix lattice_laplacian(Index side);

/// Builds the lattice posterior; throws std::invalid_argument when side < 3,
/// alpha is not 1 or 2, or n_obs exceeds the number of nodes.
LatticeGmrfPosterior build_lattice_gmrf(const LatticeGmrfParams& params);

/*------------------------------------------------------------------------------
 *  Adaptive smoothing spline posterior
 *----------------------------------------------------------------------------*/
struct XyData {
    std::vector<double> t;
    std::vector<double> y;
};

/// Two numeric columns t,y; optional header line. Throws std::runtime_error
/// naming the offending line.
XyData load_xy_csv(const std::filesystem::path& path);

/// Heteroscedastic synthetic series on [0, 60]: a damped oscillation whose
/// noise level has a bump in the middle, loosely shaped like crash-helmet
/// accelerometer data.
XyData synthetic_spline_data(std::size_t count, std::uint64_t seed);

/// Parameter layout: (x[0..n), v[0..n), log tau_x, log tau_v).
///
///   log pi = -1/2 sum_k e^{-2 (A v)_k} (y_k - (A x)_k)^2 - sum_k (A v)_k
///            - tau_x/2 x^T Q x - tau_v/2 v^T Q v
///            + n/2 log tau_x + n/2 log tau_v - tau_x - tau_v
///            + log tau_x + log tau_v          (log-scale Jacobian)
class SplinePosterior final : public TargetModel {
  public:
    SplinePosterior(Index n_basis, XyData data);

    Index dim() const override { return 2 * n_ + 2; }
    std::string name() const override { return "spline"; }
    double log_density(const Vector& theta) const override;
    Vector grad_log_density(const Vector& theta) const override;

    Index n_basis() const { return n_; }
    const SparseMatrix& observation_matrix() const { return obs_; }
    /// Second-order random-walk structure matrix (with a 1e-8 ridge).
    const SparseMatrix& structure_matrix() const { return q_; }
    const XyData& data() const { return data_; }
    double knot_spacing() const { return h_; }

    /// Conditional dependence graph implied by the model structure.
    SparsityPattern dependence_pattern() const;

  private:
    Index n_;
    XyData data_;
    double t0_ = 0.0;
    double h_ = 1.0;
    SparseMatrix obs_;
    SparseMatrix q_;
};

/// Piecewise-linear interpolation matrix of `t` on n equally spaced knots over [t0, t0 + (n-1) h].
SparseMatrix linear_interpolation_matrix(const std::vector<double>& t, Index n, double t0, double h);
/// D^T D / h^3 + ridge*I with D the (n-2) x n second-difference operator.
SparseMatrix rw2_precision(Index n, double h, double ridge = 1e-8);

SplinePosterior build_spline(Index n_basis, XyData data);

}  // namespace amcmc
