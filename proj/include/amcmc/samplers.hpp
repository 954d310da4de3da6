#pragma once

// MHRW and MALA kernels over a pluggable adaptation backend, Robbins-Monro
// step-size tuning and the chain driver.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "amcmc/adapt.hpp"
#include "amcmc/structure.hpp"
#include "amcmc/targets.hpp"
#include "json.hpp"

namespace amcmc {

enum class Kernel { mhrw, mala };
enum class Backend { covariance, precision };

std::string to_string(Kernel k);
std::string to_string(Backend b);
std::optional<Kernel> parse_kernel(std::string_view s);
std::optional<Backend> parse_backend(std::string_view s);

/// 0.234 for MHRW, 0.574 for MALA.
double default_target_rate(Kernel k);
/// 2.38/sqrt(n) for MHRW, n^{-1/6} for MALA.
double default_sigma(Kernel k, Index n);

struct ScaleState {
    double log_sigma = 0.0;
    double target_rate = 0.234;
    double step_c = 1.0;
    double step_kappa = 0.7;

    double sigma() const;
};

/// log sigma += min(1, c k^{-kappa}) (accept_prob - target), k >= 1.
ScaleState scale_update(const ScaleState& scale, double accept_prob, std::uint64_t k);

struct ChainState {
    Vector x;
    double log_pi = 0.0;
    Vector grad;  // empty for MHRW
    std::uint64_t iter = 0;
    std::uint64_t accepts = 0;
};

/// Evaluates the cache at x0; throws TargetEvaluationError when the density
/// (or, for MALA, the gradient) is not finite there.
ChainState init_chain(const TargetModel& target, const Vector& x0, Kernel kernel);

/// One RNG stream per chain.
class RandomSource {
  public:
    explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

    Vector normal(Index n);
    double uniform();

    std::string state() const;
    void set_state(const std::string& s);

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

struct StepResult {
    bool accepted = false;
    double accept_prob = 0.0;
    double log_alpha = 0.0;
};

/// Log acceptance ratio of a MALA move x -> y (whitened-gradient form):
///   log pi(y) - log pi(x) - s^2/8 |w_y|^2 + (x - y)^T (g_y + g_x)/2 + s^2/8 |w_x|^2
/// with w = whiten(g), so |w|^2 = g^T Sigma_p g.
double mala_log_alpha(const Adaptation& adapt, double sigma, const Vector& x, double log_pi_x, const Vector& grad_x,
                      const Vector& y, double log_pi_y, const Vector& grad_y);

/// Proposal mean x + (sigma^2/2) Sigma_p grad plus sigma * noise(Sigma_p).
StepResult mala_step(ChainState& chain, const Adaptation& adapt, const ScaleState& scale, const TargetModel& target,
                     RandomSource& rng);
/// x + sigma * noise(Sigma_p), accepted with min(1, pi(y)/pi(x)).
StepResult mhrw_step(ChainState& chain, const Adaptation& adapt, const ScaleState& scale, const TargetModel& target,
                     RandomSource& rng);

/*------------------------------------------------------------------------------
 *  Driver
 *----------------------------------------------------------------------------*/
struct RunConfig {
    Kernel kernel = Kernel::mala;
    Backend backend = Backend::precision;
    std::uint64_t iterations = 10000;
    std::uint64_t thin = 1;
    std::uint64_t seed = 1;
    AdaptOptions adapt;
    /// Adaptation is frozen after this many iterations; 0 never freezes.
    std::uint64_t freeze_after = 0;
    /// b-measure snapshot period (0 = off); needs an analytic covariance.
    std::uint64_t bfactor_every = 0;
    std::uint64_t acceptance_window = 1000;
    std::uint64_t acceptance_every = 100;
    /// Coordinates written to the trace; empty means the first min(n, 5).
    std::vector<Index> trace_coords;
    double step_c = 1.0;
    double step_kappa = 0.7;
    std::optional<double> initial_sigma;
    std::optional<double> target_rate;
    /// Precision backend regressor sets; full pattern when absent.
    std::optional<RegressorSets> structure;
    /// Starting point; zero when absent.
    std::optional<Vector> x0;
};

struct TraceRow {
    std::uint64_t iter = 0;
    double log_pi = 0.0;
    double acceptance_rate = 0.0;
    double sigma = 0.0;
    std::vector<double> coords;
};

struct SeriesPoint {
    std::uint64_t iter = 0;
    double value = 0.0;
};

struct RunResult {
    std::vector<Index> trace_coords;
    std::vector<TraceRow> trace;
    std::vector<SeriesPoint> acceptance;
    std::vector<SeriesPoint> bfactor;
    ChainState chain;
    ScaleState scale;
    std::unique_ptr<Adaptation> adaptation;
    nlohmann::json checkpoint;
};

/// Raised when the run cannot continue; carries a checkpoint of the last
/// consistent state.
class RunAbortedError : public std::runtime_error {
  public:
    RunAbortedError(const std::string& what, nlohmann::json checkpoint)
        : std::runtime_error(what), checkpoint_(std::move(checkpoint)) {}
    const nlohmann::json& checkpoint() const { return checkpoint_; }

  private:
    nlohmann::json checkpoint_;
};

/// Called after every iteration with the post-step state.
using StepObserver = std::function<void(const ChainState&, const StepResult&)>;

std::unique_ptr<Adaptation> make_adaptation(const RunConfig& config, Index n);

RunResult run_chain(const RunConfig& config, const TargetModel& target, const StepObserver& observer = {});

nlohmann::json make_checkpoint(const ChainState& chain, const ScaleState& scale, const Adaptation& adapt,
                               const RandomSource& rng);

}  // namespace amcmc
