#include "doctest.h"

#include <cmath>
#include <random>
#include <string>

#include "amcmc/diagnostics.hpp"
#include "amcmc/samplers.hpp"
#include "oracles.hpp"

using namespace amcmc;

TEST_CASE("efficiency_b: worked examples") {
    std::mt19937_64 rng(1);
    const auto s = DenseSymMatrix::from_eigen(oracle::random_spd(6, rng));
    CHECK(efficiency_b(s, s) == doctest::Approx(1.0).epsilon(1e-12));
    auto scaled = s;
    scaled.scale(7.5);
    CHECK(efficiency_b(s, scaled) == doctest::Approx(1.0).epsilon(1e-12));

    Eigen::Matrix2d d = Eigen::Vector2d(1.0, 4.0).asDiagonal();
    CHECK(efficiency_b(DenseSymMatrix::from_eigen(d), DenseSymMatrix::identity(2)) ==
          doctest::Approx(10.0 / 9.0));
    Vector lam(2);
    lam << 1, 4;
    CHECK(efficiency_b_from_eigenvalues(lam) == doctest::Approx(10.0 / 9.0));
}

TEST_CASE("efficiency_b rejects non-SPD input") {
    Eigen::Matrix2d bad;
    bad << 1, 2, 2, 1;
    CHECK_THROWS_AS(efficiency_b(DenseSymMatrix::from_eigen(bad), DenseSymMatrix::identity(2)), std::invalid_argument);
    CHECK_THROWS_AS(efficiency_b(DenseSymMatrix::identity(2), DenseSymMatrix::from_eigen(bad)), std::invalid_argument);
}

TEST_CASE("efficiency_b >= 1 and invariant under congruence") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 1 + trial % 50;
        const Eigen::MatrixXd a = oracle::random_spd(n, rng, 0.1);
        const Eigen::MatrixXd b = oracle::random_spd(n, rng, 0.1);
        const double bv = efficiency_b(DenseSymMatrix::from_eigen(a), DenseSymMatrix::from_eigen(b));
        CHECK(bv >= 1.0 - 1e-12);
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) + 0.3 * Eigen::MatrixXd::Random(n, n);
        const double bc = efficiency_b(DenseSymMatrix::from_eigen(m.transpose() * a * m),
                                       DenseSymMatrix::from_eigen(m.transpose() * b * m));
        CHECK(bc == doctest::Approx(bv).epsilon(1e-8));
    }
}

TEST_CASE("BFactorTracker agrees with the direct call") {
    const auto t = GaussianTarget::ar1(8, 0.6);
    const auto sigma = *t.analytic_covariance();
    auto a = PrecisionAdaptation::full(8);
    CHECK(BFactorTracker(sigma).evaluate(a) ==
          doctest::Approx(efficiency_b(sigma, DenseSymMatrix::identity(8))).epsilon(1e-12));
    CHECK(efficiency_b(sigma, a) == doctest::Approx(efficiency_b(sigma, DenseSymMatrix::identity(8))).epsilon(1e-12));
}

TEST_CASE("b-curve of a full-pattern run on a 25-D Gaussian") {
    LatticeGmrfParams p;
    p.side = 5;
    const auto t = build_lattice_gmrf(p);
    RunConfig rc;
    rc.iterations = 20000;
    rc.bfactor_every = 1000;
    rc.seed = 5;
    const auto res = run_chain(rc, t);
    CHECK(res.bfactor.front().value ==
          doctest::Approx(efficiency_b(*t.analytic_covariance(), DenseSymMatrix::identity(25))).epsilon(1e-12));
    CHECK(res.bfactor.back().value < 1.5);
    // least-squares slope of log b over snapshots
    double mx = 0, my = 0;
    const double m = static_cast<double>(res.bfactor.size());
    for (const auto& s : res.bfactor) {
        mx += static_cast<double>(s.iter);
        my += std::log(s.value);
    }
    mx /= m;
    my /= m;
    double sxy = 0, sxx = 0;
    for (const auto& s : res.bfactor) {
        sxy += (static_cast<double>(s.iter) - mx) * (std::log(s.value) - my);
        sxx += (static_cast<double>(s.iter) - mx) * (static_cast<double>(s.iter) - mx);
    }
    CHECK(sxy / sxx <= 0.0);
}

TEST_CASE("AcceptanceWindow") {
    AcceptanceWindow all(5);
    for (int k = 0; k < 12; ++k) all.push(true);
    CHECK(all.rate() == 1.0);
    AcceptanceWindow alt(10);
    for (int k = 0; k < 31; ++k) alt.push(k % 2 == 0);
    CHECK(alt.rate() == 0.5);
    CHECK(alt.filled() == 10);
    AcceptanceWindow fresh(4);
    CHECK(fresh.rate() == 0.0);
    fresh.push(true);
    fresh.push(false);
    CHECK(fresh.rate() == 0.5);
    CHECK_THROWS_AS(AcceptanceWindow(0), std::invalid_argument);
}

TEST_CASE("timing_probe guards and labels") {
    CHECK_THROWS_AS(timing_probe(TimingComponent::l_update, 10, 0), std::invalid_argument);
    for (auto c : {TimingComponent::cov_update, TimingComponent::l_update, TimingComponent::sample_cov,
                   TimingComponent::sample_prec}) {
        const auto r = timing_probe(c, 20, 5);
        CHECK(r.component == to_string(c));
        CHECK(r.n == 20);
        CHECK(r.mean_ns > 0.0);
        CHECK(parse_timing_component(r.component) == c);
    }
    CHECK_FALSE(parse_timing_component("bogus"));
}

TEST_CASE("sparse sampling vs dense sampling at n = 400 (logged only)") {
    const auto prec = timing_probe(TimingComponent::sample_prec, 400, 200);
    const auto cov = timing_probe(TimingComponent::sample_cov, 400, 200);
    MESSAGE("sample_prec " << prec.mean_ns << " ns, sample_cov " << cov.mean_ns << " ns"
                           << std::string(prec.mean_ns <= cov.mean_ns ? "" : "  (precision slower on this machine)"));
}
