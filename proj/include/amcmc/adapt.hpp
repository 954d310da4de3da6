#pragma once

// Adaptation backends. Both expose the implicit proposal covariance Sigma_p
// through three transforms so the samplers never see which one is in use:
//
//   sample_noise(z)           -> vector with covariance Sigma_p for z ~ N(0, I)
//   precondition_gradient(g)  -> Sigma_p g
//   whiten(g)                 -> w with |w|^2 = g^T Sigma_p g
//
// All three are the identity until `warmup` samples have been absorbed.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "amcmc/sparse_core.hpp"
#include "json.hpp"

namespace amcmc {

struct AdaptOptions {
    /// Samples absorbed before the transforms stop being the identity.
    std::uint64_t warmup = 100;
    /// Initial ridge delta: the running second-moment blocks start as delta*I
    /// and the ridge then fades as delta/i.
    double ridge = 1e-3;
};

/// x̄ <- (i/(i+1)) x̄ + x/(i+1), with i the number of samples already in x̄.
Vector mean_update(const Vector& mean, const Vector& x, std::uint64_t i);

enum class ScalingOp { sample_noise, precondition_gradient, whiten };

class Adaptation {
  public:
    explicit Adaptation(AdaptOptions options) : options_(options) {}
    virtual ~Adaptation() = default;

    virtual Index dim() const = 0;
    virtual std::string_view kind() const = 0;
    virtual std::unique_ptr<Adaptation> clone() const = 0;

    /// Absorbs a chain state: running mean first, then the second-moment
    /// estimate with the freshly updated mean. Ignored once frozen.
    void update(const Vector& x);

    std::uint64_t count() const { return count_; }
    const Vector& mean() const { return mean_; }
    bool ready() const { return count_ >= options_.warmup; }
    const AdaptOptions& options() const { return options_; }

    void freeze() { frozen_ = true; }
    void unfreeze() { frozen_ = false; }
    bool frozen() const { return frozen_; }

    Vector sample_noise(const Vector& z) const { return ready() ? noise_impl(z) : z; }
    Vector precondition_gradient(const Vector& g) const { return ready() ? precondition_impl(g) : g; }
    Vector whiten(const Vector& g) const { return ready() ? whiten_impl(g) : g; }

    /// Sigma_p^{-1} and Sigma_p as dense matrices in original coordinates
    /// (identity before warmup). Intended for diagnostics at desk scale.
    Eigen::MatrixXd proposal_precision() const;
    Eigen::MatrixXd proposal_covariance() const;

    virtual nlohmann::json to_json() const = 0;

  protected:
    virtual void absorb(const Vector& centered) = 0;
    virtual Vector noise_impl(const Vector& z) const = 0;
    virtual Vector precondition_impl(const Vector& g) const = 0;
    virtual Vector whiten_impl(const Vector& g) const = 0;
    virtual Eigen::MatrixXd precision_impl() const = 0;
    virtual Eigen::MatrixXd covariance_impl() const = 0;

    nlohmann::json base_json() const;
    void load_base_json(const nlohmann::json& j);

    AdaptOptions options_;
    Vector mean_;
    std::uint64_t count_ = 0;
    bool frozen_ = false;
};

/// Backend-agnostic entry point for the three transforms.
Vector scaling_apply(const Adaptation& adaptation, ScalingOp op, const Vector& v);

/*------------------------------------------------------------------------------
 *  Empirical covariance backend
 *----------------------------------------------------------------------------*/
class CovarianceAdaptation final : public Adaptation {
  public:
    explicit CovarianceAdaptation(Index n, AdaptOptions options = {});

    /// State as if `count` samples with the given mean and covariance had
    /// been absorbed (used for tests and restarts).
    static CovarianceAdaptation from_moments(const Vector& mean, const DenseSymMatrix& covariance,
                                             std::uint64_t count, AdaptOptions options = {});
    static CovarianceAdaptation from_json(const nlohmann::json& j);

    Index dim() const override { return static_cast<Index>(mean_.size()); }
    std::string_view kind() const override { return "covariance"; }
    std::unique_ptr<Adaptation> clone() const override;

    /// Sigma <- (i/(i+1)) Sigma + (1/(i+1)) u u^T with u = x - x̄ already
    /// centered on the updated mean; the factor follows by a rank-1 update.
    void cov_update(const Vector& centered);

    /// Running empirical covariance (the recursion value, no ridge).
    const DenseSymMatrix& covariance() const { return cov_; }
    /// Lower factor C with C C^T = covariance() + ridge()*I.
    const SparseLowerTriangular& factor() const { return chol_; }
    double ridge() const { return ridge_; }
    std::uint64_t refactorizations() const { return refactorizations_; }

    nlohmann::json to_json() const override;

  protected:
    void absorb(const Vector& centered) override { cov_update(centered); }
    Vector noise_impl(const Vector& z) const override;
    Vector precondition_impl(const Vector& g) const override;
    Vector whiten_impl(const Vector& g) const override;
    Eigen::MatrixXd precision_impl() const override;
    Eigen::MatrixXd covariance_impl() const override;

  private:
    void refactorize();

    DenseSymMatrix cov_;
    SparseLowerTriangular chol_;
    double ridge_ = 0.0;
    std::uint64_t refactorizations_ = 0;
};

/*------------------------------------------------------------------------------
 *  Sparse precision-Cholesky backend
 *----------------------------------------------------------------------------*/

/// Sufficient statistics for regressing coordinate j on its regressor set
/// A_j (permuted coordinates, all indices > j).
struct RowRegressionState {
    Index row = 0;
    std::vector<Index> regressors;
    /// Running second moment over A_j, no ridge.
    DenseSymMatrix gram;
    /// Inverse of gram (+ ridge/i * I while `ridged`).
    DenseSymMatrix gram_inv;
    /// Second moments of (X_{A_j}, X_j) with X_j: |A_j| + 1 entries, the last
    /// one is the diagonal moment of X_j.
    Vector cross;
    bool ridged = true;
    /// Sample count at which dropping the ridge is next attempted.
    std::uint64_t next_release = 0;
    /// Sample count at which gram_inv is next re-inverted densely.
    std::uint64_t next_refresh = 0;
};

struct LUpdateStats {
    std::uint64_t clamp_events = 0;
    std::uint64_t sm_fallbacks = 0;
    std::uint64_t refreshes = 0;
    double min_d = 0.0;  // smallest D_jj of the last update
};

class PrecisionAdaptation final : public Adaptation {
  public:
    /// `regressors[j]` is A_j in permuted coordinates (indices > j).
    PrecisionAdaptation(Permutation perm, std::vector<std::vector<Index>> regressors, AdaptOptions options = {});

    /// Dense regressor sets A_j = {j+1, ..., n-1}, identity permutation.
    static PrecisionAdaptation full(Index n, AdaptOptions options = {});
    /// Diagonal proposal: every A_j empty.
    static PrecisionAdaptation diagonal(Index n, AdaptOptions options = {});
    static PrecisionAdaptation from_json(const nlohmann::json& j);

    Index dim() const override { return perm_.size(); }
    std::string_view kind() const override { return "precision"; }
    std::unique_ptr<Adaptation> clone() const override;

    /// Absorbs one centered sample (original coordinates) and rebuilds the
    /// factor L with L L^T estimating the precision in permuted coordinates.
    void l_update(const Vector& centered);

    const SparseLowerTriangular& factor() const { return factor_; }
    const Permutation& permutation() const { return perm_; }
    const std::vector<RowRegressionState>& rows() const { return rows_; }
    /// Latest D_jj (conditional variances), permuted coordinates.
    const Vector& conditional_variances() const { return d_; }
    const LUpdateStats& stats() const { return stats_; }

    nlohmann::json to_json() const override;

  protected:
    void absorb(const Vector& centered) override { l_update(centered); }
    Vector noise_impl(const Vector& z) const override;
    Vector precondition_impl(const Vector& g) const override;
    Vector whiten_impl(const Vector& g) const override;
    Eigen::MatrixXd precision_impl() const override;
    Eigen::MatrixXd covariance_impl() const override;

  private:
    void update_row(RowRegressionState& row, const Vector& z, std::uint64_t i);
    bool try_release(RowRegressionState& row, std::uint64_t i);
    void reinvert(RowRegressionState& row, std::uint64_t i);
    void initialize_factor();

    Permutation perm_;
    std::vector<RowRegressionState> rows_;
    SparseLowerTriangular factor_;
    Vector d_;
    LUpdateStats stats_;
    std::vector<double> u_;
    std::vector<double> work_;
    std::vector<double> beta_;
};

/// Restores either backend from its JSON form.
std::unique_ptr<Adaptation> adaptation_from_json(const nlohmann::json& j);

}  // namespace amcmc
