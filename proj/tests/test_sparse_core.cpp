#include "doctest.h"

#include <random>

#include "amcmc/errors.hpp"
#include "amcmc/sparse_core.hpp"
#include "oracles.hpp"

using namespace amcmc;

namespace {

SparsityPattern path_graph(Index n) {
    std::vector<std::pair<Index, Index>> e;
    for (Index i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
    return SparsityPattern::from_edges(n, e);
}

SparsityPattern star_graph(Index n, Index hub) {
    std::vector<std::pair<Index, Index>> e;
    for (Index i = 0; i < n; ++i) {
        if (i != hub) e.emplace_back(hub, i);
    }
    return SparsityPattern::from_edges(n, e);
}

SparsityPattern lattice_graph(Index m) {
    std::vector<std::pair<Index, Index>> e;
    for (Index r = 0; r < m; ++r) {
        for (Index c = 0; c < m; ++c) {
            if (c + 1 < m) e.emplace_back(r * m + c, r * m + c + 1);
            if (r + 1 < m) e.emplace_back(r * m + c, (r + 1) * m + c);
        }
    }
    return SparsityPattern::from_edges(m * m, e);
}

SparseLowerTriangular random_lower(Index n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::bernoulli_distribution coin(0.15);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
        m(j, j) = 1.0 + std::abs(u(rng));
        for (Index i = j + 1; i < n; ++i) {
            if (coin(rng)) m(i, j) = u(rng);
        }
    }
    return SparseLowerTriangular::from_dense(m);
}

}  // namespace

TEST_CASE("SparsityPattern basics") {
    std::vector<std::pair<Index, Index>> e = {{0, 1}, {1, 0}, {2, 2}, {3, 1}};
    auto p = SparsityPattern::from_edges(4, e);
    CHECK(p.is_symmetric());
    CHECK_FALSE(p.has_self_loops());
    CHECK(p.edge_count() == 2);
    CHECK(p.contains(1, 3));
    CHECK(p.contains(3, 1));
    CHECK_FALSE(p.contains(0, 2));
    CHECK(p.edges() == std::vector<std::pair<Index, Index>>{{0, 1}, {1, 3}});
}

TEST_CASE("Permutation validation and conjugation") {
    CHECK_THROWS_AS(Permutation::from_forward({0, 0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(Permutation::from_forward({0, 3}), std::invalid_argument);
    auto p = Permutation::from_forward({2, 0, 1});
    for (Index i = 0; i < 3; ++i) CHECK(p.forward(p.inverse(i)) == i);
    Vector x(3);
    x << 10, 20, 30;
    const Vector y = p.to_permuted(x);
    CHECK(y[0] == 30);
    CHECK(y[1] == 10);
    CHECK(p.to_original(y) == x);
}

TEST_CASE("symbolic_cholesky: worked examples") {
    CHECK(symbolic_cholesky(path_graph(4)).nnz() == 7);
    CHECK(symbolic_cholesky(SparsityPattern(5)).nnz() == 5);
    CHECK(symbolic_cholesky(star_graph(6, 0)).nnz() == 21);
}

TEST_CASE("symbolic_cholesky matches boolean elimination on random graphs") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 2 + trial % 29;
        const auto g = oracle::random_graph(n, 0.12, rng);
        const auto sym = symbolic_cholesky(g);
        const auto fill = oracle::boolean_fill(g);
        for (int j = 0; j < n; ++j) {
            auto col = sym.indices(j);
            REQUIRE(!col.empty());
            CHECK(col[0] == j);
            std::vector<int> expect;
            for (int i = j; i < n; ++i) {
                if (fill[i][j]) expect.push_back(i);
            }
            CHECK(std::vector<int>(col.begin(), col.end()) == expect);
            // superset of the strictly lower input pattern
            for (Index i : g.indices(j)) {
                if (i > j) CHECK(sym.contains(j, i));
            }
        }
    }
}

TEST_CASE("elimination tree of a path is a chain") {
    auto parent = elimination_tree(path_graph(5));
    CHECK(parent == std::vector<Index>{1, 2, 3, 4, -1});
}

TEST_CASE("amd_order: star graph defers the hub with zero fill") {
    const auto g = star_graph(10, 0);
    const auto p = amd_order(g);
    // hub ties with the last leaf at degree 1; lowest index puts it second to last
    CHECK(p.forward(8) == 0);
    CHECK(factor_nnz(g.permuted(p)) == 19);
    CHECK(oracle::boolean_fill_count(g.permuted(p)) == 19);
    CHECK(oracle::boolean_fill_count(g) == 55);
}

TEST_CASE("amd_order: diagonal, path and lattice") {
    CHECK(factor_nnz(SparsityPattern(7).permuted(amd_order(SparsityPattern(7)))) == 7);
    const auto path = path_graph(12);
    CHECK(factor_nnz(path.permuted(amd_order(path))) <= factor_nnz(path));
    CHECK(factor_nnz(path.permuted(amd_order(path))) == 23);
    for (Index m : {4, 7, 10, 15}) {
        const auto g = lattice_graph(m);
        const auto p = amd_order(g);
        CHECK(factor_nnz(g.permuted(p)) <= factor_nnz(g));
        CHECK(factor_nnz(g.permuted(p)) == oracle::boolean_fill_count(g.permuted(p)));
    }
}

TEST_CASE("amd_order returns a valid permutation on random graphs") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 1 + trial;
        const auto g = oracle::random_graph(n, 0.2, rng);
        const auto p = amd_order(g);
        CHECK(p.size() == n);
        std::vector<Index> f(p.forward().begin(), p.forward().end());
        std::ranges::sort(f);
        for (int i = 0; i < n; ++i) CHECK(f[i] == i);
    }
}

TEST_CASE("solve_lower and solve_lower_transpose") {
    Vector b(2);
    b << 2, 3;
    CHECK(solve_lower(SparseLowerTriangular::identity(2), b) == b);
    CHECK(solve_lower_transpose(SparseLowerTriangular::identity(2), b) == b);

    Eigen::MatrixXd l(2, 2);
    l << 2, 0, 1, 1;
    const auto f = SparseLowerTriangular::from_dense(l);
    const Vector y = solve_lower(f, b);
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(2.0));
    const Vector yt = solve_lower_transpose(f, b);
    CHECK(yt[0] == doctest::Approx(-0.5));
    CHECK(yt[1] == doctest::Approx(3.0));

    std::mt19937_64 rng(3);
    for (int t = 0; t < 5; ++t) {
        const auto lf = random_lower(50, rng);
        const Vector rhs = oracle::random_vector(50, rng);
        const Eigen::MatrixXd dense = lf.to_dense();
        CHECK((dense * solve_lower(lf, rhs) - rhs).lpNorm<Eigen::Infinity>() < 1e-10);
        CHECK((dense.transpose() * solve_lower_transpose(lf, rhs) - rhs).lpNorm<Eigen::Infinity>() < 1e-10);
        // solve then multiply is the identity
        CHECK((lf.multiply(solve_lower(lf, rhs)) - rhs).lpNorm<Eigen::Infinity>() < 1e-10);
        CHECK((lf.multiply_transpose(solve_lower_transpose(lf, rhs)) - rhs).lpNorm<Eigen::Infinity>() < 1e-10);
    }
}

TEST_CASE("solve_lower rejects a singular factor") {
    Eigen::MatrixXd l(2, 2);
    l << 1, 0, 1, 0;
    auto f = SparseLowerTriangular::from_dense(l);
    Vector b = Vector::Ones(2);
    CHECK_THROWS_AS(solve_lower(f, b), SingularFactorError);
    CHECK_THROWS_AS(solve_lower_transpose(f, b), SingularFactorError);
}

TEST_CASE("DenseSymMatrix storage") {
    Eigen::MatrixXd m(3, 3);
    m << 4, 1, 2, 1, 5, 3, 2, 3, 6;
    auto s = DenseSymMatrix::from_eigen(m);
    CHECK(s(0, 2) == 2);
    CHECK(s(2, 0) == 2);
    CHECK(s.trace() == 15);
    Vector x(3);
    x << 1, -1, 2;
    CHECK((s.multiply(x) - m * x).norm() < 1e-14);
    CHECK(s.quadratic(x) == doctest::Approx(x.dot(m * x)));
    CHECK(s.to_eigen() == m);
}

TEST_CASE("sherman_morrison_update: worked examples") {
    Vector u(2);
    u << 1, 0;
    const auto r = sherman_morrison_update(DenseSymMatrix::identity(2), 1.0, u);
    CHECK(r(0, 0) == doctest::Approx(0.5));
    CHECK(r(1, 1) == doctest::Approx(1.0));
    CHECK(r(1, 0) == doctest::Approx(0.0));

    std::mt19937_64 rng(2);
    const auto a = DenseSymMatrix::from_eigen(oracle::random_spd(5, rng));
    const auto zero = sherman_morrison_update(a, 0.5, Vector::Zero(5));
    CHECK((zero.to_eigen() - a.to_eigen() / 0.5).norm() < 1e-14);

    const Eigen::MatrixXd m = oracle::random_spd(5, rng);
    const Vector v = oracle::random_vector(5, rng);
    const double decay = 9.0 / 10.0;
    const auto got = sherman_morrison_update(DenseSymMatrix::from_eigen(m.inverse()), decay, v);
    const Eigen::MatrixXd want = (decay * m + v * v.transpose()).inverse();
    CHECK(oracle::rel_frobenius(got.to_eigen(), want) < 1e-8);
}

TEST_CASE("sherman_morrison_update composed 100 times tracks dense inversion") {
    std::mt19937_64 rng(8);
    const int n = 10;
    Eigen::MatrixXd m = oracle::random_spd(n, rng);
    auto inv = DenseSymMatrix::from_eigen(m.inverse());
    for (int k = 2; k <= 101; ++k) {
        const double decay = (k - 1.0) / k;
        const Vector u = oracle::random_vector(n, rng) / std::sqrt(static_cast<double>(k));
        inv = sherman_morrison_update(inv, decay, u);
        m = decay * m + u * u.transpose();
    }
    CHECK(oracle::rel_frobenius(inv.to_eigen(), m.inverse()) < 1e-6);
}

TEST_CASE("sherman_morrison_update flags a degenerate denominator") {
    auto neg = DenseSymMatrix::identity(2, -1.0);
    Vector u(2);
    u << 2, 0;
    CHECK_THROWS_AS(sherman_morrison_update(neg, 1.0, u), UpdateDegenerateError);
}

TEST_CASE("dense_chol: worked examples") {
    const auto id = dense_chol(DenseSymMatrix::identity(4));
    CHECK(id.to_dense() == Eigen::MatrixXd::Identity(4, 4));

    Eigen::MatrixXd m(2, 2);
    m << 4, 2, 2, 5;
    const Eigen::MatrixXd l = dense_chol(DenseSymMatrix::from_eigen(m)).to_dense();
    Eigen::MatrixXd want(2, 2);
    want << 2, 0, 1, 2;
    CHECK((l - want).norm() < 1e-14);

    std::mt19937_64 rng(4);
    const Eigen::MatrixXd a = oracle::random_spd(20, rng);
    const Eigen::MatrixXd la = dense_chol(DenseSymMatrix::from_eigen(a)).to_dense();
    CHECK(oracle::rel_frobenius(la * la.transpose(), a) < 1e-10);

    Eigen::MatrixXd bad(2, 2);
    bad << 1, 2, 2, 1;
    CHECK_THROWS_AS(dense_chol(DenseSymMatrix::from_eigen(bad)), FactorizationError);
}

TEST_CASE("chol_rank1_update: worked examples") {
    auto f = dense_chol(DenseSymMatrix::identity(2));
    const Eigen::MatrixXd before = f.to_dense();
    chol_rank1_update(f, 1.0, 1.0, Vector::Zero(2));
    CHECK(f.to_dense() == before);

    Vector u(2);
    u << std::sqrt(2.0), 0;
    chol_rank1_update(f, 0.5, 0.5, u);
    const Eigen::MatrixXd l = f.to_dense();
    CHECK(l(0, 0) == doctest::Approx(std::sqrt(1.5)));
    CHECK(l(1, 1) == doctest::Approx(std::sqrt(0.5)));
    CHECK(l(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("chol_rank1_update tracks a batch ECM over 20 updates") {
    std::mt19937_64 rng(12);
    const int n = 8;
    std::vector<Vector> xs;
    for (int k = 0; k < n + 2; ++k) xs.push_back(oracle::random_vector(n, rng));
    Eigen::MatrixXd s = oracle::second_moment(xs);
    auto f = dense_chol(DenseSymMatrix::from_eigen(s));
    double count = static_cast<double>(xs.size());
    for (int k = 0; k < 20; ++k) {
        const Vector u = oracle::random_vector(n, rng);
        xs.push_back(u);
        chol_rank1_update(f, count / (count + 1.0), 1.0 / (count + 1.0), u);
        count += 1.0;
    }
    const Eigen::MatrixXd l = f.to_dense();
    CHECK(oracle::rel_frobenius(l * l.transpose(), oracle::second_moment(xs)) < 1e-6);
    CHECK(f.has_positive_diagonal());
}

TEST_CASE("cholesky_on_pattern reproduces the dense factor") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 2 + trial % 29;
        const auto g = oracle::random_graph(n, 0.15, rng);
        const Eigen::MatrixXd a = oracle::random_spd_on_pattern(g, rng);
        const auto f = cholesky_on_pattern(DenseSymMatrix::from_eigen(a), symbolic_cholesky(g));
        const Eigen::MatrixXd dense = a.llt().matrixL();
        CHECK((f.to_dense() - dense).norm() < 1e-10 * dense.norm());
    }
}
