#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "amcmc/adapt.hpp"
#include "amcmc/sparse_core.hpp"

namespace amcmc {

/// b = n sum(lambda) / (sum sqrt(lambda))^2 over eigenvalues of
/// Sigma_true Sigma_p^{-1}; 1 is optimal. Throws std::invalid_argument if
/// either matrix is not SPD.
double efficiency_b(const DenseSymMatrix& sigma_true, const DenseSymMatrix& sigma_p);
double efficiency_b(const DenseSymMatrix& sigma_true, const Adaptation& adapt);

/// b from a spectrum.
double efficiency_b_from_eigenvalues(const Vector& lambda);

/// Keeps the factor of Sigma_true so repeated evaluations only need the
/// proposal precision.
class BFactorTracker {
  public:
    explicit BFactorTracker(const DenseSymMatrix& sigma_true);

    double evaluate_precision(const Eigen::MatrixXd& proposal_precision) const;
    double evaluate(const Adaptation& adapt) const { return evaluate_precision(adapt.proposal_precision()); }

  private:
    Eigen::MatrixXd l_true_;
};

/// Ring buffer of accept indicators.
class AcceptanceWindow {
  public:
    explicit AcceptanceWindow(std::size_t window);

    void push(bool accepted);
    /// Fraction accepted over the trailing window (or fewer, early on);
    /// 0 when empty.
    double rate() const;
    std::size_t filled() const { return filled_; }

  private:
    std::vector<char> buf_;
    std::size_t next_ = 0;
    std::size_t filled_ = 0;
    std::size_t accepted_ = 0;
};

enum class TimingComponent { cov_update, l_update, sample_cov, sample_prec };

std::string to_string(TimingComponent c);
std::optional<TimingComponent> parse_timing_component(std::string_view s);

struct TimingResult {
    std::string component;
    Index n = 0;
    double mean_ns = 0.0;
};

/// Mean wall-clock time of one operation at dimension n, after warm-up reps.
/// The precision-backend components use a tridiagonal regressor pattern.
/// Throws std::invalid_argument when reps == 0.
TimingResult timing_probe(TimingComponent component, Index n, std::uint64_t reps, std::uint64_t seed = 7);

}  // namespace amcmc
