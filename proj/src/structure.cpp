#include "amcmc/structure.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace amcmc {

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

void mark_changes(const Vector& g0, const Vector& g1, Index i, double tol, std::vector<std::pair<Index, Index>>& out) {
    for (Index j = 0; j < g0.size(); ++j) {
        if (j == i) continue;
        const double diff = std::abs(g1[j] - g0[j]);
        // NaN differences are treated as a dependence
        if (!(diff <= tol * (1.0 + std::abs(g0[j])))) out.emplace_back(i, j);
    }
}

}  // namespace

SparsityPattern estimate_edges(const TargetModel& target, const std::vector<Vector>& probes,
                               const EdgeEstimateOptions& options) {
    const Index n = target.dim();
    if (probes.empty()) throw std::invalid_argument("estimate_edges: no probe points");
    auto warn = options.warn ? options.warn : [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };

    std::vector<std::pair<Index, Index>> found;
    std::size_t used = 0;
    for (std::size_t p = 0; p < probes.size(); ++p) {
        const Vector& x = probes[p];
        if (x.size() != n) throw std::invalid_argument("estimate_edges: probe dimension mismatch");
        const Vector g0 = target.grad_log_density(x);
        if (!all_finite(g0)) {
            warn("probe " + std::to_string(p) + " skipped: non-finite gradient");
            continue;
        }
        ++used;
        Vector xe = x;
        for (Index i = 0; i < n; ++i) {
            for (double step : {1.0, options.small_step}) {
                xe[i] = x[i] + step;
                const Vector g1 = target.grad_log_density(xe);
                if (g1.allFinite()) mark_changes(g0, g1, i, options.tol, found);
            }
            xe[i] = x[i];
        }
    }
    if (used == 0) throw std::runtime_error("estimate_edges: every probe point had a non-finite gradient");
    return SparsityPattern::from_edges(n, found);
}

std::vector<Vector> default_probes(Index n, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<Vector> out;
    for (std::size_t p = 0; p < count; ++p) {
        Vector x(n);
        for (Index i = 0; i < n; ++i) x[i] = normal(rng);
        out.push_back(std::move(x));
    }
    return out;
}

RegressorSets build_regressor_sets(const SparsityPattern& edges, const Permutation& perm) {
    if (!edges.is_symmetric()) throw std::invalid_argument("build_regressor_sets: edge pattern must be symmetric");
    const SparsityPattern factor = symbolic_cholesky(edges.permuted(perm));
    RegressorSets out;
    out.perm = perm;
    out.sets.resize(static_cast<std::size_t>(edges.size()));
    for (Index j = 0; j < edges.size(); ++j) {
        auto col = factor.indices(j);
        out.sets[static_cast<std::size_t>(j)].assign(col.begin() + 1, col.end());
    }
    out.factor_nnz = factor.nnz();
    out.natural_factor_nnz = factor_nnz(edges);
    return out;
}

RegressorSets build_regressor_sets(const SparsityPattern& edges) {
    return build_regressor_sets(edges, amd_order(edges));
}

void write_edges(const std::filesystem::path& path, const SparsityPattern& edges) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    for (auto [i, j] : edges.edges()) out << i << ' ' << j << '\n';
}

SparsityPattern read_edges(const std::filesystem::path& path, Index n) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open edge list '" + path.string() + "'");
    std::vector<std::pair<Index, Index>> edges;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        long long i = -1;
        long long j = -1;
        std::string rest;
        if (!(ss >> i >> j) || (ss >> rest) || i < 0 || j < 0 || i >= n || j >= n) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": expected 'i j' with 0 <= i, j < " + std::to_string(n));
        }
        edges.emplace_back(static_cast<Index>(i), static_cast<Index>(j));
    }
    return SparsityPattern::from_edges(n, edges);
}

void write_permutation(const std::filesystem::path& path, const Permutation& perm) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    for (Index k = 0; k < perm.size(); ++k) out << (k ? " " : "") << perm.forward(k);
    out << '\n';
}

Permutation read_permutation(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open permutation '" + path.string() + "'");
    std::vector<Index> fwd;
    long long v = 0;
    while (in >> v) fwd.push_back(static_cast<Index>(v));
    if (!in.eof()) throw std::runtime_error(path.string() + ": non-integer entry in permutation");
    return Permutation::from_forward(std::move(fwd));
}

}  // namespace amcmc
