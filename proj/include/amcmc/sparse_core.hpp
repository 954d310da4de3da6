#pragma once

// Sparse and small-dense numerical kernels: sparsity patterns, symbolic
// Cholesky analysis, fill-reducing ordering, triangular solves and the
// rank-1 updates used by the adaptation backends.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace amcmc {

using Index = std::int32_t;
using Vector = Eigen::VectorXd;

class Permutation;

/// Per-index sorted lists of column indices.
///
/// Used in two roles: as an undirected graph (symmetric adjacency, no self
/// loops) and as the column structure of a lower-triangular factor, where
/// list j holds the row indices i >= j of column j, diagonal first.
class SparsityPattern {
  public:
    SparsityPattern() = default;
    explicit SparsityPattern(Index n);

    /// Builds a symmetric graph from undirected edges; self pairs are dropped
    /// and duplicates merged.
    static SparsityPattern from_edges(Index n, std::span<const std::pair<Index, Index>> edges);

    /// Takes ownership of the lists; each is sorted and deduplicated.
    static SparsityPattern from_lists(std::vector<std::vector<Index>> lists);

    Index size() const { return static_cast<Index>(lists_.size()); }
    std::span<const Index> indices(Index j) const { return lists_[static_cast<std::size_t>(j)]; }

    /// Total number of stored entries over all lists.
    std::size_t nnz() const;

    bool contains(Index i, Index j) const;
    bool is_symmetric() const;
    bool has_self_loops() const;

    /// Undirected edges {i, j} with i < j, sorted lexicographically.
    std::vector<std::pair<Index, Index>> edges() const;
    std::size_t edge_count() const;

    /// Graph relabelled so that new index k corresponds to perm.forward(k).
    SparsityPattern permuted(const Permutation& perm) const;

    /// Inserts (i, j) and (j, i). Self pairs are ignored.
    void add_edge(Index i, Index j);

    friend bool operator==(const SparsityPattern&, const SparsityPattern&) = default;

  private:
    std::vector<std::vector<Index>> lists_;
};

/// Bijection on [0, n). forward(k) is the original index placed at position
/// k; inverse(i) is the position of original index i.
class Permutation {
  public:
    Permutation() = default;

    static Permutation identity(Index n);
    /// Throws std::invalid_argument unless `forward` is a bijection on [0, n).
    static Permutation from_forward(std::vector<Index> forward);

    Index size() const { return static_cast<Index>(forward_.size()); }
    Index forward(Index k) const { return forward_[static_cast<std::size_t>(k)]; }
    Index inverse(Index i) const { return inverse_[static_cast<std::size_t>(i)]; }
    std::span<const Index> forward() const { return forward_; }
    std::span<const Index> inverse() const { return inverse_; }
    bool is_identity() const;

    /// Original coordinates to permuted: y[k] = x[forward(k)].
    Vector to_permuted(const Vector& x) const;
    /// Permuted coordinates back to original: x[forward(k)] = y[k].
    Vector to_original(const Vector& y) const;

    friend bool operator==(const Permutation&, const Permutation&) = default;

  private:
    std::vector<Index> forward_;
    std::vector<Index> inverse_;
};

/// Lower-triangular matrix in compressed-column form. Every column stores its
/// diagonal as the first entry followed by strictly increasing row indices.
class SparseLowerTriangular {
  public:
    SparseLowerTriangular() = default;

    /// Zero-valued factor with the given column structure (see SparsityPattern).
    explicit SparseLowerTriangular(const SparsityPattern& column_pattern);

    static SparseLowerTriangular identity(Index n);
    /// Full lower triangle; values zero.
    static SparseLowerTriangular dense(Index n);
    static SparseLowerTriangular from_dense(const Eigen::MatrixXd& m, double drop_tol = 0.0);

    Index size() const { return n_; }
    std::size_t nnz() const { return row_idx_.size(); }

    std::span<const Index> rows(Index j) const;
    std::span<double> values(Index j);
    std::span<const double> values(Index j) const;
    double diagonal(Index j) const { return values_[col_ptr_[static_cast<std::size_t>(j)]]; }

    Vector multiply(const Vector& x) const;            // L x
    Vector multiply_transpose(const Vector& x) const;  // L^T x

    Eigen::MatrixXd to_dense() const;
    SparsityPattern pattern() const;

    /// True when every diagonal entry is finite and strictly positive.
    bool has_positive_diagonal() const;

  private:
    Index n_ = 0;
    std::vector<std::size_t> col_ptr_;
    std::vector<Index> row_idx_;
    std::vector<double> values_;
};

/// Symmetric matrix with a single stored (lower, row-packed) triangle.
class DenseSymMatrix {
  public:
    DenseSymMatrix() = default;
    explicit DenseSymMatrix(Index n, double diagonal = 0.0);

    static DenseSymMatrix identity(Index n, double scale = 1.0);
    /// Reads the lower triangle of `m`.
    static DenseSymMatrix from_eigen(const Eigen::MatrixXd& m);

    Index size() const { return n_; }

    double operator()(Index i, Index j) const { return data_[offset(i, j)]; }
    double& operator()(Index i, Index j) { return data_[offset(i, j)]; }

    std::span<double> packed() { return data_; }
    std::span<const double> packed() const { return data_; }

    Vector multiply(const Vector& x) const;
    /// x^T M x
    double quadratic(const Vector& x) const;
    double trace() const;
    void scale(double s);

    Eigen::MatrixXd to_eigen() const;

  private:
    static std::size_t offset(Index i, Index j) {
        if (i < j) std::swap(i, j);
        const auto ii = static_cast<std::size_t>(i);
        return ii * (ii + 1) / 2 + static_cast<std::size_t>(j);
    }

    Index n_ = 0;
    std::vector<double> data_;
};

/// No-cancellation fill pattern of the Cholesky factor of a matrix with the
/// given symmetric graph (diagonal implied), in the given ordering. Returned
/// in column form: list j = {j} followed by the rows below it.
SparsityPattern symbolic_cholesky(const SparsityPattern& graph);

/// Elimination tree of the factor of `graph`; parent[j] = -1 for roots.
std::vector<Index> elimination_tree(const SparsityPattern& graph);

/// Approximate minimum degree fill-reducing ordering. Heuristic: the factor
/// of the reordered graph usually, but not provably, has less fill than the
/// natural ordering.
Permutation amd_order(const SparsityPattern& graph);

/// Solves L y = b.
Vector solve_lower(const SparseLowerTriangular& factor, const Vector& b);
/// Solves L^T y = b.
Vector solve_lower_transpose(const SparseLowerTriangular& factor, const Vector& b);

/// Inverse of (decay * inv^{-1} + u u^T), given inv = M^{-1}. Throws
/// UpdateDegenerateError when the denominator 1 + u^T (inv / decay) u is not
/// safely positive.
DenseSymMatrix sherman_morrison_update(const DenseSymMatrix& inv, double decay, const Vector& u);

/// In-place variant on a raw vector span; `work` must hold inv.size() doubles.
void sherman_morrison_update_inplace(DenseSymMatrix& inv, double decay, std::span<const double> u,
                                     std::span<double> work);

/// Overwrites a dense-pattern factor C (C C^T = S) with the factor of
/// decay * S + weight * u u^T. Requires decay > 0 and weight >= 0.
/// Throws FactorizationError on breakdown; the factor is then unspecified.
void chol_rank1_update(SparseLowerTriangular& factor, double decay, double weight, const Vector& u);

/// Dense Cholesky factor (dense column pattern). Throws FactorizationError
/// when a pivot is not strictly positive.
SparseLowerTriangular dense_chol(const DenseSymMatrix& m);

/// Numeric Cholesky confined to a symbolic column pattern. Entries of `m`
/// outside the pattern are ignored.
SparseLowerTriangular cholesky_on_pattern(const DenseSymMatrix& m, const SparsityPattern& factor_pattern);

/// Number of stored entries (diagonal included) of the factor of `graph`.
std::size_t factor_nnz(const SparsityPattern& graph);

}  // namespace amcmc
