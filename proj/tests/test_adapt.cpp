#include "doctest.h"

#include <chrono>
#include <random>

#include "amcmc/adapt.hpp"
#include "amcmc/structure.hpp"
#include "amcmc/targets.hpp"
#include "oracles.hpp"

using namespace amcmc;

namespace {

AdaptOptions no_warmup() {
    AdaptOptions o;
    o.warmup = 0;
    return o;
}

std::vector<std::vector<Index>> tridiagonal_sets(Index n) {
    std::vector<std::vector<Index>> s(static_cast<std::size_t>(n));
    for (Index j = 0; j + 1 < n; ++j) s[static_cast<std::size_t>(j)] = {j + 1};
    return s;
}

Eigen::MatrixXd factor_product(const PrecisionAdaptation& a) {
    const Eigen::MatrixXd l = a.factor().to_dense();
    return l * l.transpose();
}

}  // namespace

TEST_CASE("mean_update: worked examples") {
    Vector v(2);
    v << 3, -1;
    CHECK(mean_update(Vector::Zero(2), v, 0) == v);
    Vector m(2), x(2);
    m << 2, 2;
    x << 4, 0;
    const Vector r = mean_update(m, x, 1);
    CHECK(r[0] == doctest::Approx(3.0));
    CHECK(r[1] == doctest::Approx(1.0));

    std::mt19937_64 rng(1);
    Vector mean = Vector::Zero(4);
    Vector sum = Vector::Zero(4);
    for (int k = 0; k < 500; ++k) {
        const Vector s = oracle::random_vector(4, rng);
        mean = mean_update(mean, s, static_cast<std::uint64_t>(k));
        sum += s;
    }
    CHECK(oracle::rel_frobenius(mean, sum / 500.0) < 1e-12);
}

TEST_CASE("cov_update follows the running-moment recursion") {
    CovarianceAdaptation a(2, no_warmup());
    Vector x1(2), x2(2);
    x1 << 1, 0;
    x2 << -1, 0;
    a.update(x1);
    a.update(x2);
    // dense recursion oracle: mean first, then covariance with the new mean
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    int i = 0;
    for (const Eigen::Vector2d& x : {Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0)}) {
        mean = (i / (i + 1.0)) * mean + x / (i + 1.0);
        cov = (i / (i + 1.0)) * cov + (x - mean) * (x - mean).transpose() / (i + 1.0);
        ++i;
    }
    CHECK((a.covariance().to_eigen() - cov).norm() < 1e-14);
    CHECK((a.mean() - mean).norm() < 1e-14);

    // sample equal to the current mean: covariance only shrinks by i/(i+1)
    const Eigen::MatrixXd before = a.covariance().to_eigen();
    a.update(a.mean());
    CHECK((a.covariance().to_eigen() - before * (2.0 / 3.0)).norm() < 1e-14);

    // factor product equals covariance + ridge
    const Eigen::MatrixXd c = a.factor().to_dense();
    CHECK(oracle::rel_frobenius(c * c.transpose(),
                                a.covariance().to_eigen() + a.ridge() * Eigen::MatrixXd::Identity(2, 2)) < 1e-12);
}

TEST_CASE("cov_update estimates a 2-D covariance from 500 samples") {
    std::mt19937_64 rng(77);
    Eigen::Matrix2d sigma;
    sigma << 2, 1, 1, 2;
    const Eigen::Matrix2d l = sigma.llt().matrixL();
    CovarianceAdaptation a(2, no_warmup());
    for (int k = 0; k < 500; ++k) a.update(l * oracle::random_vector(2, rng));
    CHECK((a.covariance().to_eigen() - sigma).norm() < 0.3);
}

TEST_CASE("l_update: scalar case") {
    PrecisionAdaptation a = PrecisionAdaptation::full(1, no_warmup());
    for (int k = 0; k < 10; ++k) a.l_update(Vector::Constant(1, k % 2 ? 2.0 : -2.0));
    CHECK(a.factor().diagonal(0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("l_update: 2x2 worked example") {
    Eigen::Matrix2d sigma;
    sigma << 2, 1, 1, 2;
    const Eigen::Matrix2d c = sigma.llt().matrixL();
    PrecisionAdaptation a = PrecisionAdaptation::full(2, no_warmup());
    for (int rep = 0; rep < 3; ++rep) {
        for (int k = 0; k < 2; ++k) {
            for (double s : {1.0, -1.0}) a.l_update(s * std::sqrt(2.0) * c.col(k));
        }
    }
    Eigen::Matrix2d want;
    want << 1 / std::sqrt(1.5), 0, -0.5 / std::sqrt(1.5), 1 / std::sqrt(2.0);
    CHECK((a.factor().to_dense() - want).norm() < 1e-10);
    CHECK(a.conditional_variances()[0] == doctest::Approx(1.5));
    CHECK(a.conditional_variances()[1] == doctest::Approx(2.0));
    CHECK((factor_product(a) - sigma.inverse()).norm() < 1e-10);

    // precondition_gradient(g) = Sigma g
    Vector g(2);
    g << 0.3, -1.2;
    CHECK((a.precondition_gradient(g) - sigma * g).norm() < 1e-10);
    CHECK(a.whiten(g).squaredNorm() == doctest::Approx(g.dot(sigma * g)));
}

TEST_CASE("l_update: full pattern equals the inverse batch ECM") {
    std::mt19937_64 rng(10);
    for (Index n : {3, 10, 20}) {
        PrecisionAdaptation a = PrecisionAdaptation::full(n, no_warmup());
        std::vector<Vector> zs;
        const Eigen::MatrixXd mix = oracle::random_spd(n, rng).llt().matrixL();
        for (int k = 0; k < 200; ++k) {
            zs.push_back(mix * oracle::random_vector(n, rng));
            a.l_update(zs.back());
        }
        const Eigen::MatrixXd target = oracle::second_moment(zs).inverse();
        CHECK(oracle::rel_frobenius(factor_product(a), target) < 1e-6);
        CHECK(a.stats().clamp_events == 0);
        for (const auto& row : a.rows()) {
            CHECK_FALSE(row.ridged);
            // gram_inv is the inverse of the running Gram
            if (!row.regressors.empty()) {
                CHECK(oracle::rel_frobenius(row.gram_inv.to_eigen(), row.gram.to_eigen().inverse()) < 1e-6);
            }
        }
    }
}

TEST_CASE("transforms are the identity before warmup") {
    AdaptOptions o;
    o.warmup = 50;
    PrecisionAdaptation p = PrecisionAdaptation::full(3, o);
    CovarianceAdaptation c(3, o);
    std::mt19937_64 rng(3);
    for (int k = 0; k < 49; ++k) {
        const Vector x = 3.0 * oracle::random_vector(3, rng);
        p.update(x);
        c.update(x);
    }
    const Vector g = oracle::random_vector(3, rng);
    for (const Adaptation* a : {static_cast<const Adaptation*>(&p), static_cast<const Adaptation*>(&c)}) {
        CHECK(a->sample_noise(g) == g);
        CHECK(a->precondition_gradient(g) == g);
        CHECK(a->whiten(g) == g);
        CHECK(scaling_apply(*a, ScalingOp::whiten, g) == g);
    }
    p.update(g);
    CHECK(p.ready());
    CHECK_FALSE(p.precondition_gradient(g) == g);
}

TEST_CASE("transforms are consistent with the implicit proposal covariance") {
    std::mt19937_64 rng(31);
    const Index n = 6;
    PrecisionAdaptation p = PrecisionAdaptation::full(n, no_warmup());
    CovarianceAdaptation c(n, no_warmup());
    const Eigen::MatrixXd mix = oracle::random_spd(n, rng).llt().matrixL();
    for (int k = 0; k < 300; ++k) {
        const Vector x = mix * oracle::random_vector(n, rng);
        p.update(x);
        c.update(x);
    }
    for (const Adaptation* a : {static_cast<const Adaptation*>(&p), static_cast<const Adaptation*>(&c)}) {
        const Eigen::MatrixXd sp = a->proposal_covariance();
        CHECK(oracle::rel_frobenius(a->proposal_precision() * sp, Eigen::MatrixXd::Identity(n, n)) < 1e-10);
        const Vector g = oracle::random_vector(n, rng);
        CHECK((a->precondition_gradient(g) - sp * g).norm() < 1e-10 * (sp * g).norm());
        CHECK(a->whiten(g).squaredNorm() == doctest::Approx(g.dot(sp * g)).epsilon(1e-10));
        // noise has covariance Sigma_p: the linear map z -> noise(z) is a square root of Sigma_p
        Eigen::MatrixXd root(n, n);
        for (Index k = 0; k < n; ++k) root.col(k) = a->sample_noise(Vector::Unit(n, k));
        CHECK(oracle::rel_frobenius(root * root.transpose(), sp) < 1e-10);
    }
}

TEST_CASE("permuted and unpermuted states give identical transforms") {
    std::mt19937_64 rng(41);
    const Index n = 7;
    std::vector<std::vector<Index>> full_sets(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
        for (Index k = j + 1; k < n; ++k) full_sets[static_cast<std::size_t>(j)].push_back(k);
    }
    PrecisionAdaptation plain(Permutation::identity(n), full_sets, no_warmup());
    PrecisionAdaptation perm(Permutation::from_forward({3, 6, 0, 2, 5, 1, 4}), full_sets, no_warmup());
    const Eigen::MatrixXd mix = oracle::random_spd(n, rng).llt().matrixL();
    for (int k = 0; k < 100; ++k) {
        const Vector x = mix * oracle::random_vector(n, rng);
        plain.update(x);
        perm.update(x);
    }
    const Vector g = oracle::random_vector(n, rng);
    CHECK((plain.precondition_gradient(g) - perm.precondition_gradient(g)).norm() < 1e-10);
    CHECK(plain.whiten(g).squaredNorm() == doctest::Approx(perm.whiten(g).squaredNorm()).epsilon(1e-10));
    CHECK((plain.proposal_covariance() - perm.proposal_covariance()).norm() < 1e-10);
}

TEST_CASE("D > 0 and L invertible after every update") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> pick(1, 9);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = pick(rng);
        const auto g = oracle::random_graph(n, 0.4, rng);
        const auto sets = build_regressor_sets(g);
        PrecisionAdaptation a(sets.perm, sets.sets, no_warmup());
        for (int k = 0; k < 200; ++k) {
            a.update(oracle::random_vector(n, rng) * (1.0 + k % 3));
            REQUIRE(a.factor().has_positive_diagonal());
            REQUIRE(a.conditional_variances().minCoeff() > 0.0);
        }
        CHECK(a.stats().clamp_events == 0);
    }
}

TEST_CASE("l_update on rank-deficient input keeps its ridge") {
    PrecisionAdaptation a = PrecisionAdaptation::full(3, no_warmup());
    Vector x(3);
    x << 1.0, 1.0, 1.0;
    for (int k = 0; k < 40; ++k) a.l_update((k % 2 ? 1.0 : -1.0) * x);
    CHECK(a.factor().has_positive_diagonal());
    CHECK(a.rows()[0].ridged);
    CHECK(a.rows()[1].ridged);
    CHECK_FALSE(a.rows()[2].ridged);
}

TEST_CASE("sparse consistency: tridiagonal sets recover an AR(1) precision") {
    const Index n = 20;
    const auto target = GaussianTarget::ar1(n, 0.8);
    const Eigen::MatrixXd q = Eigen::MatrixXd(target.precision());
    const Eigen::MatrixXd l = q.inverse().llt().matrixL();
    PrecisionAdaptation a(Permutation::identity(n), tridiagonal_sets(n), no_warmup());
    std::mt19937_64 rng(5);
    std::vector<double> errors;
    std::uint64_t done = 0;
    for (std::uint64_t checkpoint : {1000u, 10000u, 100000u}) {
        for (; done < checkpoint; ++done) a.update(l * oracle::random_vector(n, rng));
        errors.push_back(oracle::rel_frobenius(a.proposal_precision(), q));
    }
    CHECK(errors[1] < errors[0]);
    CHECK(errors[2] < errors[1]);
    CHECK(errors[2] < 0.05);
}

TEST_CASE("per-row l_update cost is flat in N for a tridiagonal pattern") {
    auto per_row_ns = [](Index n) {
        PrecisionAdaptation a(Permutation::identity(n), tridiagonal_sets(n), no_warmup());
        std::mt19937_64 rng(1);
        std::vector<Vector> pool;
        for (int k = 0; k < 16; ++k) pool.push_back(oracle::random_vector(n, rng));
        for (int k = 0; k < 64; ++k) a.l_update(pool[k % 16]);
        double best = 1e300;
        for (int trial = 0; trial < 3; ++trial) {
            const auto t0 = std::chrono::steady_clock::now();
            for (int k = 0; k < 300; ++k) a.l_update(pool[k % 16]);
            const auto t1 = std::chrono::steady_clock::now();
            best = std::min(best, std::chrono::duration<double, std::nano>(t1 - t0).count() / 300.0 / n);
        }
        return best;
    };
    const double small = per_row_ns(400);
    const double large = per_row_ns(1600);
    MESSAGE("per-row ns: n=400 " << small << ", n=1600 " << large);
    CHECK(large / small <= 2.5);
}

TEST_CASE("frozen adaptation ignores updates") {
    CovarianceAdaptation a(2, no_warmup());
    a.update(Vector::Ones(2));
    a.freeze();
    a.update(Vector::Constant(2, 5.0));
    CHECK(a.count() == 1);
    a.unfreeze();
    a.update(Vector::Constant(2, 5.0));
    CHECK(a.count() == 2);
}

TEST_CASE("checkpoint round-trip is exact and continues identically") {
    std::mt19937_64 rng(17);
    const Index n = 5;
    const auto sets = build_regressor_sets(oracle::random_graph(n, 0.5, rng));
    PrecisionAdaptation p(sets.perm, sets.sets, no_warmup());
    CovarianceAdaptation c(n, no_warmup());
    for (int k = 0; k < 37; ++k) {
        const Vector x = oracle::random_vector(n, rng);
        p.update(x);
        c.update(x);
    }
    auto p2 = adaptation_from_json(nlohmann::json::parse(p.to_json().dump()));
    auto c2 = adaptation_from_json(nlohmann::json::parse(c.to_json().dump()));
    CHECK(p2->kind() == "precision");
    CHECK(c2->kind() == "covariance");
    for (int k = 0; k < 20; ++k) {
        const Vector x = oracle::random_vector(n, rng);
        p.update(x);
        p2->update(x);
        c.update(x);
        c2->update(x);
    }
    const Vector g = oracle::random_vector(n, rng);
    CHECK(p.precondition_gradient(g) == p2->precondition_gradient(g));
    CHECK(c.precondition_gradient(g) == c2->precondition_gradient(g));
    CHECK(p.to_json() == p2->to_json());

    auto bad = p.to_json();
    bad["rows"][0]["cross"] = std::vector<double>{1, 2, 3, 4, 5, 6, 7};
    CHECK_THROWS(adaptation_from_json(bad));
}
