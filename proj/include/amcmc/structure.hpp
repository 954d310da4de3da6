#pragma once

// Conditional-dependence discovery from gradient perturbations and the
// regressor sets it induces for the precision backend.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "amcmc/sparse_core.hpp"
#include "amcmc/targets.hpp"

namespace amcmc {

struct EdgeEstimateOptions {
    double tol = 1e-8;
    /// Secondary perturbation size, probed alongside the unit step.
    double small_step = 1e-3;
    /// Receives one message per skipped probe. Defaults to stderr.
    std::function<void(const std::string&)> warn;
};

/// Adds {i, j} whenever perturbing coordinate i moves the j-th gradient
/// component by more than tol * (1 + |g_j(x)|) at any probe point, for a unit
/// step or a small step. Probes with non-finite gradients are skipped; if
/// all are skipped std::runtime_error is thrown.
SparsityPattern estimate_edges(const TargetModel& target, const std::vector<Vector>& probes,
                               const EdgeEstimateOptions& options = {});

/// `count` standard normal points, seeded.
std::vector<Vector> default_probes(Index n, std::size_t count = 3, std::uint64_t seed = 20240611);

struct RegressorSets {
    Permutation perm;
    /// A_j in permuted coordinates; every index is > j.
    std::vector<std::vector<Index>> sets;
    /// Stored entries of the factor with and without the reordering.
    std::size_t factor_nnz = 0;
    std::size_t natural_factor_nnz = 0;
};

/// AMD ordering, symbolic factorisation of the permuted graph, then A_j =
/// below-diagonal rows of factor column j.
RegressorSets build_regressor_sets(const SparsityPattern& edges);

/// Same, with a caller-provided ordering.
RegressorSets build_regressor_sets(const SparsityPattern& edges, const Permutation& perm);

void write_edges(const std::filesystem::path& path, const SparsityPattern& edges);
/// Reads an edge list; `n` is the dimension. Throws on malformed lines or
/// out-of-range indices.
SparsityPattern read_edges(const std::filesystem::path& path, Index n);

void write_permutation(const std::filesystem::path& path, const Permutation& perm);
Permutation read_permutation(const std::filesystem::path& path);

}  // namespace amcmc
