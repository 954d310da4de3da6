#include "amcmc/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "amcmc/diagnostics.hpp"
#include "amcmc/errors.hpp"

namespace amcmc {

std::string to_string(Kernel k) { return k == Kernel::mhrw ? "mhrw" : "mala"; }
std::string to_string(Backend b) { return b == Backend::covariance ? "covariance" : "precision"; }

std::optional<Kernel> parse_kernel(std::string_view s) {
    if (s == "mhrw") return Kernel::mhrw;
    if (s == "mala") return Kernel::mala;
    return std::nullopt;
}

std::optional<Backend> parse_backend(std::string_view s) {
    if (s == "covariance") return Backend::covariance;
    if (s == "precision") return Backend::precision;
    return std::nullopt;
}

double default_target_rate(Kernel k) { return k == Kernel::mhrw ? 0.234 : 0.574; }

double default_sigma(Kernel k, Index n) {
    const double dn = static_cast<double>(std::max<Index>(n, 1));
    return k == Kernel::mhrw ? 2.38 / std::sqrt(dn) : std::pow(dn, -1.0 / 6.0);
}

double ScaleState::sigma() const { return std::exp(log_sigma); }

ScaleState scale_update(const ScaleState& scale, double accept_prob, std::uint64_t k) {
    ScaleState out = scale;
    const double gamma = std::min(1.0, scale.step_c * std::pow(static_cast<double>(std::max<std::uint64_t>(k, 1)),
                                                                -scale.step_kappa));
    out.log_sigma += gamma * (accept_prob - scale.target_rate);
    return out;
}

ChainState init_chain(const TargetModel& target, const Vector& x0, Kernel kernel) {
    if (x0.size() != target.dim()) throw std::invalid_argument("init_chain: starting point has wrong dimension");
    ChainState c;
    c.x = x0;
    c.log_pi = target.log_density(x0);
    if (!std::isfinite(c.log_pi)) throw TargetEvaluationError("log-density is not finite at the starting point");
    if (kernel == Kernel::mala) {
        c.grad = target.grad_log_density(x0);
        if (!c.grad.allFinite()) throw TargetEvaluationError("gradient is not finite at the starting point");
    }
    return c;
}

/*------------------------------------------------------------------------------
 *  RandomSource
 *----------------------------------------------------------------------------*/
Vector RandomSource::normal(Index n) {
    Vector z(n);
    for (Index i = 0; i < n; ++i) z[i] = normal_(engine_);
    return z;
}

double RandomSource::uniform() { return uniform_(engine_); }

std::string RandomSource::state() const {
    std::ostringstream os;
    os << engine_ << ' ' << normal_;
    return os.str();
}

void RandomSource::set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_ >> normal_;
    if (!is) throw std::invalid_argument("RandomSource: malformed state");
}

/*------------------------------------------------------------------------------
 *  Kernels
 *----------------------------------------------------------------------------*/
namespace {

void check_current(const ChainState& chain) {
    if (!std::isfinite(chain.log_pi)) throw TargetEvaluationError("current state has a non-finite log-density");
}

StepResult accept_or_reject(double log_alpha, RandomSource& rng) {
    StepResult r;
    r.log_alpha = log_alpha;
    if (std::isnan(log_alpha)) {
        r.accept_prob = 0.0;
        return r;
    }
    r.accept_prob = log_alpha >= 0.0 ? 1.0 : std::exp(log_alpha);
    // always draw so the stream does not depend on the outcome
    const double u = rng.uniform();
    r.accepted = log_alpha >= 0.0 || std::log(u) < log_alpha;
    return r;
}

}  // namespace

double mala_log_alpha(const Adaptation& adapt, double sigma, const Vector& x, double log_pi_x, const Vector& grad_x,
                      const Vector& y, double log_pi_y, const Vector& grad_y) {
    const double s2_8 = sigma * sigma / 8.0;
    const double wx = adapt.whiten(grad_x).squaredNorm();
    const double wy = adapt.whiten(grad_y).squaredNorm();
    return log_pi_y - log_pi_x - s2_8 * wy + 0.5 * (x - y).dot(grad_y + grad_x) + s2_8 * wx;
}

StepResult mala_step(ChainState& chain, const Adaptation& adapt, const ScaleState& scale, const TargetModel& target,
                     RandomSource& rng) {
    check_current(chain);
    const double sigma = scale.sigma();
    const Vector noise = adapt.sample_noise(rng.normal(target.dim()));
    const Vector y = chain.x + (0.5 * sigma * sigma) * adapt.precondition_gradient(chain.grad) + sigma * noise;

    ++chain.iter;
    const double log_pi_y = y.allFinite() ? target.log_density(y) : std::numeric_limits<double>::quiet_NaN();
    StepResult r;
    Vector grad_y;
    if (std::isfinite(log_pi_y)) {
        grad_y = target.grad_log_density(y);
        if (grad_y.allFinite()) {
            r = accept_or_reject(mala_log_alpha(adapt, sigma, chain.x, chain.log_pi, chain.grad, y, log_pi_y, grad_y),
                                 rng);
        } else {
            r = accept_or_reject(std::numeric_limits<double>::quiet_NaN(), rng);
        }
    } else {
        r = accept_or_reject(std::numeric_limits<double>::quiet_NaN(), rng);
    }
    if (r.accepted) {
        chain.x = y;
        chain.log_pi = log_pi_y;
        chain.grad = std::move(grad_y);
        ++chain.accepts;
    }
    return r;
}

StepResult mhrw_step(ChainState& chain, const Adaptation& adapt, const ScaleState& scale, const TargetModel& target,
                     RandomSource& rng) {
    check_current(chain);
    const Vector y = chain.x + scale.sigma() * adapt.sample_noise(rng.normal(target.dim()));
    ++chain.iter;
    const double log_pi_y = y.allFinite() ? target.log_density(y) : std::numeric_limits<double>::quiet_NaN();
    const StepResult r =
        accept_or_reject(std::isfinite(log_pi_y) ? log_pi_y - chain.log_pi : std::numeric_limits<double>::quiet_NaN(),
                         rng);
    if (r.accepted) {
        chain.x = y;
        chain.log_pi = log_pi_y;
        ++chain.accepts;
    }
    return r;
}

/*------------------------------------------------------------------------------
 *  Driver
 *----------------------------------------------------------------------------*/
std::unique_ptr<Adaptation> make_adaptation(const RunConfig& config, Index n) {
    if (config.backend == Backend::covariance) return std::make_unique<CovarianceAdaptation>(n, config.adapt);
    if (config.structure) {
        if (config.structure->perm.size() != n) throw std::invalid_argument("structure dimension does not match target");
        return std::make_unique<PrecisionAdaptation>(config.structure->perm, config.structure->sets, config.adapt);
    }
    return std::make_unique<PrecisionAdaptation>(PrecisionAdaptation::full(n, config.adapt));
}

nlohmann::json make_checkpoint(const ChainState& chain, const ScaleState& scale, const Adaptation& adapt,
                               const RandomSource& rng) {
    nlohmann::json j;
    j["version"] = 1;
    j["iter"] = chain.iter;
    j["accepts"] = chain.accepts;
    j["x"] = std::vector<double>(chain.x.data(), chain.x.data() + chain.x.size());
    j["log_pi"] = chain.log_pi;
    j["log_sigma"] = scale.log_sigma;
    j["target_rate"] = scale.target_rate;
    j["rng"] = rng.state();
    j["adaptation"] = adapt.to_json();
    return j;
}

RunResult run_chain(const RunConfig& config, const TargetModel& target, const StepObserver& observer) {
    const Index n = target.dim();
    if (config.thin == 0) throw std::invalid_argument("thin must be >= 1");
    if (config.acceptance_window == 0) throw std::invalid_argument("acceptance_window must be >= 1");

    RunResult out;
    out.trace_coords = config.trace_coords;
    if (out.trace_coords.empty()) {
        for (Index i = 0; i < std::min<Index>(n, 5); ++i) out.trace_coords.push_back(i);
    }
    for (Index c : out.trace_coords) {
        if (c < 0 || c >= n) throw std::invalid_argument("trace coordinate " + std::to_string(c) + " out of range");
    }

    auto adapt = make_adaptation(config, n);
    ScaleState scale;
    scale.target_rate = config.target_rate.value_or(default_target_rate(config.kernel));
    scale.step_c = config.step_c;
    scale.step_kappa = config.step_kappa;
    scale.log_sigma = std::log(config.initial_sigma.value_or(default_sigma(config.kernel, n)));

    RandomSource rng(config.seed);
    ChainState chain = init_chain(target, config.x0.value_or(Vector::Zero(n)), config.kernel);

    std::optional<BFactorTracker> tracker;
    if (config.bfactor_every > 0) {
        auto cov = target.analytic_covariance();
        if (!cov) throw std::invalid_argument("bfactor requested but target '" + target.name() + "' has no analytic covariance");
        tracker.emplace(*cov);
        out.bfactor.push_back({0, tracker->evaluate(*adapt)});
    }

    AcceptanceWindow window(config.acceptance_window);
    for (std::uint64_t k = 1; k <= config.iterations; ++k) {
        StepResult r;
        const ChainState saved = chain;
        try {
            r = config.kernel == Kernel::mala ? mala_step(chain, *adapt, scale, target, rng)
                                              : mhrw_step(chain, *adapt, scale, target, rng);
            scale = scale_update(scale, r.accept_prob, k);
            if (config.freeze_after > 0 && k > config.freeze_after) adapt->freeze();
            adapt->update(chain.x);
        } catch (const std::exception& e) {
            throw RunAbortedError("iteration " + std::to_string(k) + ": " + e.what(),
                                  make_checkpoint(saved, scale, *adapt, rng));
        }
        window.push(r.accepted);
        if (observer) observer(chain, r);

        if (k % config.thin == 0) {
            TraceRow row;
            row.iter = k;
            row.log_pi = chain.log_pi;
            row.acceptance_rate = window.rate();
            row.sigma = scale.sigma();
            for (Index c : out.trace_coords) row.coords.push_back(chain.x[c]);
            out.trace.push_back(std::move(row));
        }
        if (config.acceptance_every > 0 && k % config.acceptance_every == 0) out.acceptance.push_back({k, window.rate()});
        if (tracker && k % config.bfactor_every == 0) out.bfactor.push_back({k, tracker->evaluate(*adapt)});
    }

    out.checkpoint = make_checkpoint(chain, scale, *adapt, rng);
    out.chain = std::move(chain);
    out.scale = scale;
    out.adaptation = std::move(adapt);
    return out;
}

}  // namespace amcmc
