#include "amcmc/sparse_core.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "amcmc/errors.hpp"

namespace amcmc {

namespace {

void sort_unique(std::vector<Index>& v) {
    std::ranges::sort(v);
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

std::size_t as_size(Index i) { return static_cast<std::size_t>(i); }

}  // namespace

/*------------------------------------------------------------------------------
 *  SparsityPattern
 *----------------------------------------------------------------------------*/
SparsityPattern::SparsityPattern(Index n) : lists_(as_size(n)) {
    if (n < 0) throw std::invalid_argument("SparsityPattern: negative dimension");
}

SparsityPattern SparsityPattern::from_edges(Index n, std::span<const std::pair<Index, Index>> edges) {
    SparsityPattern p(n);
    for (auto [i, j] : edges) {
        if (i < 0 || j < 0 || i >= n || j >= n) {
            throw std::out_of_range("SparsityPattern: edge (" + std::to_string(i) + ", " +
                                    std::to_string(j) + ") outside [0, " + std::to_string(n) + ")");
        }
        if (i == j) continue;
        p.lists_[as_size(i)].push_back(j);
        p.lists_[as_size(j)].push_back(i);
    }
    for (auto& l : p.lists_) sort_unique(l);
    return p;
}

SparsityPattern SparsityPattern::from_lists(std::vector<std::vector<Index>> lists) {
    SparsityPattern p;
    const auto n = static_cast<Index>(lists.size());
    for (auto& l : lists) {
        sort_unique(l);
        if (!l.empty() && (l.front() < 0 || l.back() >= n)) {
            throw std::out_of_range("SparsityPattern: index outside [0, n)");
        }
    }
    p.lists_ = std::move(lists);
    return p;
}

std::size_t SparsityPattern::nnz() const {
    std::size_t total = 0;
    for (const auto& l : lists_) total += l.size();
    return total;
}

bool SparsityPattern::contains(Index i, Index j) const {
    const auto& l = lists_[as_size(i)];
    return std::ranges::binary_search(l, j);
}

bool SparsityPattern::is_symmetric() const {
    for (Index i = 0; i < size(); ++i) {
        for (Index j : indices(i)) {
            if (!contains(j, i)) return false;
        }
    }
    return true;
}

bool SparsityPattern::has_self_loops() const {
    for (Index i = 0; i < size(); ++i) {
        if (contains(i, i)) return true;
    }
    return false;
}

std::vector<std::pair<Index, Index>> SparsityPattern::edges() const {
    std::vector<std::pair<Index, Index>> out;
    for (Index i = 0; i < size(); ++i) {
        for (Index j : indices(i)) {
            if (i < j) out.emplace_back(i, j);
        }
    }
    return out;
}

std::size_t SparsityPattern::edge_count() const {
    std::size_t count = 0;
    for (Index i = 0; i < size(); ++i) {
        for (Index j : indices(i)) count += (i < j) ? 1 : 0;
    }
    return count;
}

SparsityPattern SparsityPattern::permuted(const Permutation& perm) const {
    if (perm.size() != size()) throw std::invalid_argument("SparsityPattern::permuted: size mismatch");
    std::vector<std::vector<Index>> out(lists_.size());
    for (Index k = 0; k < size(); ++k) {
        auto& dst = out[as_size(k)];
        for (Index j : indices(perm.forward(k))) dst.push_back(perm.inverse(j));
        std::ranges::sort(dst);
    }
    SparsityPattern p;
    p.lists_ = std::move(out);
    return p;
}

void SparsityPattern::add_edge(Index i, Index j) {
    if (i == j) return;
    auto insert = [](std::vector<Index>& l, Index v) {
        auto it = std::ranges::lower_bound(l, v);
        if (it == l.end() || *it != v) l.insert(it, v);
    };
    insert(lists_[as_size(i)], j);
    insert(lists_[as_size(j)], i);
}

/*------------------------------------------------------------------------------
 *  Permutation
 *----------------------------------------------------------------------------*/
Permutation Permutation::identity(Index n) {
    std::vector<Index> f(as_size(n));
    std::iota(f.begin(), f.end(), Index{0});
    return from_forward(std::move(f));
}

Permutation Permutation::from_forward(std::vector<Index> forward) {
    const auto n = static_cast<Index>(forward.size());
    std::vector<Index> inverse(forward.size(), -1);
    for (Index k = 0; k < n; ++k) {
        const Index i = forward[as_size(k)];
        if (i < 0 || i >= n || inverse[as_size(i)] != -1) {
            throw std::invalid_argument("Permutation: not a bijection on [0, " + std::to_string(n) + ")");
        }
        inverse[as_size(i)] = k;
    }
    Permutation p;
    p.forward_ = std::move(forward);
    p.inverse_ = std::move(inverse);
    return p;
}

bool Permutation::is_identity() const {
    for (Index k = 0; k < size(); ++k) {
        if (forward(k) != k) return false;
    }
    return true;
}

Vector Permutation::to_permuted(const Vector& x) const {
    Vector y(x.size());
    for (Index k = 0; k < size(); ++k) y[k] = x[forward(k)];
    return y;
}

Vector Permutation::to_original(const Vector& y) const {
    Vector x(y.size());
    for (Index k = 0; k < size(); ++k) x[forward(k)] = y[k];
    return x;
}

/*------------------------------------------------------------------------------
 *  SparseLowerTriangular
 *----------------------------------------------------------------------------*/
SparseLowerTriangular::SparseLowerTriangular(const SparsityPattern& column_pattern)
    : n_(column_pattern.size()), col_ptr_(as_size(n_) + 1, 0) {
    for (Index j = 0; j < n_; ++j) {
        auto rows = column_pattern.indices(j);
        if (rows.empty() || rows.front() != j) {
            throw std::invalid_argument("SparseLowerTriangular: column " + std::to_string(j) +
                                        " must start with its diagonal");
        }
        row_idx_.insert(row_idx_.end(), rows.begin(), rows.end());
        col_ptr_[as_size(j) + 1] = row_idx_.size();
    }
    values_.assign(row_idx_.size(), 0.0);
}

SparseLowerTriangular SparseLowerTriangular::identity(Index n) {
    std::vector<std::vector<Index>> lists(as_size(n));
    for (Index j = 0; j < n; ++j) lists[as_size(j)] = {j};
    SparseLowerTriangular l(SparsityPattern::from_lists(std::move(lists)));
    std::ranges::fill(l.values_, 1.0);
    return l;
}

SparseLowerTriangular SparseLowerTriangular::dense(Index n) {
    std::vector<std::vector<Index>> lists(as_size(n));
    for (Index j = 0; j < n; ++j) {
        auto& l = lists[as_size(j)];
        l.resize(as_size(n - j));
        std::iota(l.begin(), l.end(), j);
    }
    return SparseLowerTriangular(SparsityPattern::from_lists(std::move(lists)));
}

SparseLowerTriangular SparseLowerTriangular::from_dense(const Eigen::MatrixXd& m, double drop_tol) {
    const auto n = static_cast<Index>(m.rows());
    std::vector<std::vector<Index>> lists(as_size(n));
    for (Index j = 0; j < n; ++j) {
        lists[as_size(j)].push_back(j);
        for (Index i = j + 1; i < n; ++i) {
            if (std::abs(m(i, j)) > drop_tol) lists[as_size(j)].push_back(i);
        }
    }
    SparseLowerTriangular l(SparsityPattern::from_lists(std::move(lists)));
    for (Index j = 0; j < n; ++j) {
        auto rows = l.rows(j);
        auto vals = l.values(j);
        for (std::size_t p = 0; p < rows.size(); ++p) vals[p] = m(rows[p], j);
    }
    return l;
}

std::span<const Index> SparseLowerTriangular::rows(Index j) const {
    const auto b = col_ptr_[as_size(j)];
    const auto e = col_ptr_[as_size(j) + 1];
    return {row_idx_.data() + b, e - b};
}

std::span<double> SparseLowerTriangular::values(Index j) {
    const auto b = col_ptr_[as_size(j)];
    const auto e = col_ptr_[as_size(j) + 1];
    return {values_.data() + b, e - b};
}

std::span<const double> SparseLowerTriangular::values(Index j) const {
    const auto b = col_ptr_[as_size(j)];
    const auto e = col_ptr_[as_size(j) + 1];
    return {values_.data() + b, e - b};
}

Vector SparseLowerTriangular::multiply(const Vector& x) const {
    Vector y = Vector::Zero(n_);
    for (Index j = 0; j < n_; ++j) {
        const double xj = x[j];
        for (auto p = col_ptr_[as_size(j)]; p < col_ptr_[as_size(j) + 1]; ++p) {
            y[row_idx_[p]] += values_[p] * xj;
        }
    }
    return y;
}

Vector SparseLowerTriangular::multiply_transpose(const Vector& x) const {
    Vector y(n_);
    for (Index j = 0; j < n_; ++j) {
        double acc = 0.0;
        for (auto p = col_ptr_[as_size(j)]; p < col_ptr_[as_size(j) + 1]; ++p) {
            acc += values_[p] * x[row_idx_[p]];
        }
        y[j] = acc;
    }
    return y;
}

Eigen::MatrixXd SparseLowerTriangular::to_dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_, n_);
    for (Index j = 0; j < n_; ++j) {
        for (auto p = col_ptr_[as_size(j)]; p < col_ptr_[as_size(j) + 1]; ++p) {
            m(row_idx_[p], j) = values_[p];
        }
    }
    return m;
}

SparsityPattern SparseLowerTriangular::pattern() const {
    std::vector<std::vector<Index>> lists(as_size(n_));
    for (Index j = 0; j < n_; ++j) {
        auto r = rows(j);
        lists[as_size(j)].assign(r.begin(), r.end());
    }
    return SparsityPattern::from_lists(std::move(lists));
}

bool SparseLowerTriangular::has_positive_diagonal() const {
    for (Index j = 0; j < n_; ++j) {
        const double d = diagonal(j);
        if (!(d > 0.0) || !std::isfinite(d)) return false;
    }
    return true;
}

/*------------------------------------------------------------------------------
 *  DenseSymMatrix
 *----------------------------------------------------------------------------*/
DenseSymMatrix::DenseSymMatrix(Index n, double diagonal)
    : n_(n), data_(as_size(n) * (as_size(n) + 1) / 2, 0.0) {
    if (diagonal != 0.0) {
        for (Index i = 0; i < n; ++i) (*this)(i, i) = diagonal;
    }
}

DenseSymMatrix DenseSymMatrix::identity(Index n, double scale) { return DenseSymMatrix(n, scale); }

DenseSymMatrix DenseSymMatrix::from_eigen(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("DenseSymMatrix: matrix not square");
    const auto n = static_cast<Index>(m.rows());
    DenseSymMatrix s(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j <= i; ++j) s(i, j) = m(i, j);
    }
    return s;
}

Vector DenseSymMatrix::multiply(const Vector& x) const {
    Vector y = Vector::Zero(n_);
    std::size_t p = 0;
    for (Index i = 0; i < n_; ++i) {
        double acc = 0.0;
        const double xi = x[i];
        for (Index j = 0; j < i; ++j, ++p) {
            acc += data_[p] * x[j];
            y[j] += data_[p] * xi;
        }
        y[i] += acc + data_[p++] * xi;
    }
    return y;
}

double DenseSymMatrix::quadratic(const Vector& x) const { return x.dot(multiply(x)); }

double DenseSymMatrix::trace() const {
    double t = 0.0;
    for (Index i = 0; i < n_; ++i) t += (*this)(i, i);
    return t;
}

void DenseSymMatrix::scale(double s) {
    for (auto& v : data_) v *= s;
}

Eigen::MatrixXd DenseSymMatrix::to_eigen() const {
    Eigen::MatrixXd m(n_, n_);
    for (Index i = 0; i < n_; ++i) {
        for (Index j = 0; j <= i; ++j) {
            m(i, j) = (*this)(i, j);
            m(j, i) = m(i, j);
        }
    }
    return m;
}

/*------------------------------------------------------------------------------
 *  Symbolic analysis
 *----------------------------------------------------------------------------*/
SparsityPattern symbolic_cholesky(const SparsityPattern& graph) {
    const Index n = graph.size();
    std::vector<std::vector<Index>> cols(as_size(n));
    std::vector<std::vector<Index>> children(as_size(n));
    std::vector<Index> mark(as_size(n), -1);

    // Column j of L is the lower part of column j of the matrix merged with
    // the structures of its elimination-tree children.
    for (Index j = 0; j < n; ++j) {
        auto& col = cols[as_size(j)];
        col.push_back(j);
        mark[as_size(j)] = j;
        for (Index i : graph.indices(j)) {
            if (i > j && mark[as_size(i)] != j) {
                mark[as_size(i)] = j;
                col.push_back(i);
            }
        }
        for (Index c : children[as_size(j)]) {
            for (Index i : cols[as_size(c)]) {
                if (i > j && mark[as_size(i)] != j) {
                    mark[as_size(i)] = j;
                    col.push_back(i);
                }
            }
        }
        std::sort(col.begin() + 1, col.end());
        if (col.size() > 1) children[as_size(col[1])].push_back(j);
    }
    return SparsityPattern::from_lists(std::move(cols));
}

std::vector<Index> elimination_tree(const SparsityPattern& graph) {
    const auto factor = symbolic_cholesky(graph);
    std::vector<Index> parent(as_size(graph.size()), -1);
    for (Index j = 0; j < graph.size(); ++j) {
        auto col = factor.indices(j);
        if (col.size() > 1) parent[as_size(j)] = col[1];
    }
    return parent;
}

std::size_t factor_nnz(const SparsityPattern& graph) { return symbolic_cholesky(graph).nnz(); }

/*------------------------------------------------------------------------------
 *  Triangular solves
 *----------------------------------------------------------------------------*/
namespace {

void check_diagonal(const SparseLowerTriangular& factor) {
    for (Index j = 0; j < factor.size(); ++j) {
        const double d = factor.diagonal(j);
        if (!(d > 0.0) || !std::isfinite(d)) {
            throw SingularFactorError("triangular solve: diagonal entry " + std::to_string(j) +
                                      " is not strictly positive");
        }
    }
}

}  // namespace

Vector solve_lower(const SparseLowerTriangular& factor, const Vector& b) {
    if (b.size() != factor.size()) throw std::invalid_argument("solve_lower: size mismatch");
    check_diagonal(factor);
    Vector y = b;
    for (Index j = 0; j < factor.size(); ++j) {
        auto rows = factor.rows(j);
        auto vals = factor.values(j);
        const double yj = y[j] / vals[0];
        y[j] = yj;
        for (std::size_t p = 1; p < rows.size(); ++p) y[rows[p]] -= vals[p] * yj;
    }
    return y;
}

Vector solve_lower_transpose(const SparseLowerTriangular& factor, const Vector& b) {
    if (b.size() != factor.size()) throw std::invalid_argument("solve_lower_transpose: size mismatch");
    check_diagonal(factor);
    Vector y = b;
    for (Index j = factor.size() - 1; j >= 0; --j) {
        auto rows = factor.rows(j);
        auto vals = factor.values(j);
        double acc = y[j];
        for (std::size_t p = 1; p < rows.size(); ++p) acc -= vals[p] * y[rows[p]];
        y[j] = acc / vals[0];
    }
    return y;
}

/*------------------------------------------------------------------------------
 *  Rank-1 updates
 *----------------------------------------------------------------------------*/
void sherman_morrison_update_inplace(DenseSymMatrix& inv, double decay, std::span<const double> u,
                                     std::span<double> work) {
    const Index n = inv.size();
    if (!(decay > 0.0)) throw std::invalid_argument("sherman_morrison_update: decay must be positive");
    assert(static_cast<Index>(u.size()) == n && static_cast<Index>(work.size()) >= n);

    // work = inv * u
    auto packed = inv.packed();
    std::fill(work.begin(), work.begin() + n, 0.0);
    std::size_t p = 0;
    for (Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (Index j = 0; j < i; ++j, ++p) {
            acc += packed[p] * u[as_size(j)];
            work[as_size(j)] += packed[p] * u[as_size(i)];
        }
        work[as_size(i)] += acc + packed[p++] * u[as_size(i)];
    }
    double q = 0.0;
    for (Index i = 0; i < n; ++i) q += u[as_size(i)] * work[as_size(i)];
    q /= decay;
    const double denom = 1.0 + q;
    if (!std::isfinite(denom) || !(denom > 1e-12 * std::max(1.0, std::abs(q)))) {
        throw UpdateDegenerateError("sherman_morrison_update: degenerate denominator");
    }

    const double inv_decay = 1.0 / decay;
    for (Index i = 0; i < n; ++i) work[as_size(i)] *= inv_decay;
    const double c = 1.0 / denom;
    p = 0;
    for (Index i = 0; i < n; ++i) {
        const double wi = work[as_size(i)] * c;
        for (Index j = 0; j <= i; ++j, ++p) {
            packed[p] = packed[p] * inv_decay - wi * work[as_size(j)];
        }
    }
}

DenseSymMatrix sherman_morrison_update(const DenseSymMatrix& inv, double decay, const Vector& u) {
    if (u.size() != inv.size()) throw std::invalid_argument("sherman_morrison_update: size mismatch");
    DenseSymMatrix out = inv;
    std::vector<double> work(as_size(inv.size()));
    sherman_morrison_update_inplace(out, decay, {u.data(), static_cast<std::size_t>(u.size())}, work);
    return out;
}

void chol_rank1_update(SparseLowerTriangular& factor, double decay, double weight, const Vector& u) {
    const Index n = factor.size();
    if (u.size() != n) throw std::invalid_argument("chol_rank1_update: size mismatch");
    if (!(decay > 0.0) || !(weight >= 0.0)) {
        throw std::invalid_argument("chol_rank1_update: requires decay > 0 and weight >= 0");
    }
    if (factor.nnz() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n + 1) / 2) {
        throw std::invalid_argument("chol_rank1_update: factor must have a dense pattern");
    }

    const double root_decay = std::sqrt(decay);
    if (decay != 1.0) {
        for (Index j = 0; j < n; ++j) {
            for (auto& v : factor.values(j)) v *= root_decay;
        }
    }
    if (weight == 0.0) return;

    Vector v = std::sqrt(weight) * u;
    for (Index k = 0; k < n; ++k) {
        auto col = factor.values(k);
        const double lkk = col[0];
        const double vk = v[k];
        if (vk == 0.0) continue;
        const double r = std::hypot(lkk, vk);
        if (!(lkk > 0.0) || !std::isfinite(r)) {
            throw FactorizationError("chol_rank1_update: breakdown at column " + std::to_string(k));
        }
        const double c = r / lkk;
        const double s = vk / lkk;
        col[0] = r;
        for (std::size_t p = 1; p < col.size(); ++p) {
            const Index i = k + static_cast<Index>(p);
            col[p] = (col[p] + s * v[i]) / c;
            v[i] = c * v[i] - s * col[p];
        }
    }
}

SparseLowerTriangular dense_chol(const DenseSymMatrix& m) {
    const Index n = m.size();
    auto factor = SparseLowerTriangular::dense(n);
    // Left-looking column factorization.
    for (Index j = 0; j < n; ++j) {
        auto col = factor.values(j);
        for (Index i = j; i < n; ++i) col[as_size(i - j)] = m(i, j);
        for (Index k = 0; k < j; ++k) {
            auto ck = factor.values(k);
            const double ljk = ck[as_size(j - k)];
            if (ljk == 0.0) continue;
            for (Index i = j; i < n; ++i) col[as_size(i - j)] -= ck[as_size(i - k)] * ljk;
        }
        const double pivot = col[0];
        if (!(pivot > 0.0) || !std::isfinite(pivot)) {
            throw FactorizationError("dense_chol: matrix is not positive definite (pivot " +
                                     std::to_string(j) + ")");
        }
        const double d = std::sqrt(pivot);
        col[0] = d;
        for (std::size_t p = 1; p < col.size(); ++p) col[p] /= d;
    }
    return factor;
}

SparseLowerTriangular cholesky_on_pattern(const DenseSymMatrix& m, const SparsityPattern& factor_pattern) {
    const Index n = m.size();
    if (factor_pattern.size() != n) throw std::invalid_argument("cholesky_on_pattern: size mismatch");
    SparseLowerTriangular factor(factor_pattern);

    // Row structure: for each row j, the columns k < j holding an entry (j, k).
    std::vector<std::vector<std::pair<Index, std::size_t>>> row_entries(as_size(n));
    for (Index k = 0; k < n; ++k) {
        auto rows = factor.rows(k);
        for (std::size_t p = 1; p < rows.size(); ++p) row_entries[as_size(rows[p])].emplace_back(k, p);
    }

    std::vector<double> work(as_size(n), 0.0);
    std::vector<Index> mark(as_size(n), -1);
    for (Index j = 0; j < n; ++j) {
        auto rows = factor.rows(j);
        for (Index i : rows) {
            work[as_size(i)] = m(i, j);
            mark[as_size(i)] = j;
        }
        for (auto [k, pos] : row_entries[as_size(j)]) {
            auto rk = factor.rows(k);
            auto vk = factor.values(k);
            const double ljk = vk[pos];
            for (std::size_t p = pos; p < rk.size(); ++p) {
                if (mark[as_size(rk[p])] != j) {
                    throw std::invalid_argument("cholesky_on_pattern: pattern is not closed under elimination");
                }
                work[as_size(rk[p])] -= vk[p] * ljk;
            }
        }
        const double pivot = work[as_size(j)];
        if (!(pivot > 0.0) || !std::isfinite(pivot)) {
            throw FactorizationError("cholesky_on_pattern: non-positive pivot at column " + std::to_string(j));
        }
        const double d = std::sqrt(pivot);
        auto vals = factor.values(j);
        vals[0] = d;
        for (std::size_t p = 1; p < rows.size(); ++p) vals[p] = work[as_size(rows[p])] / d;
        for (Index i : rows) work[as_size(i)] = 0.0;
    }
    return factor;
}

}  // namespace amcmc
