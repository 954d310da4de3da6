// Approximate minimum degree ordering on a quotient graph.
//
// Each uneliminated variable i keeps a list of variable neighbours A[i] and
// of adjacent elements E[i]; eliminating pivot p turns it into an element
// whose variable set L[p] is the union of A[p] and the sets of the elements
// in E[p], which are absorbed. Degrees are the approximate external degrees
// of Amestoy, Davis and Duff:
//
//   d_i = min(n - k - 1,  d_i + |L_p \ i|,  |A_i \ i| + |L_p \ i| + sum_{e in E_i \ p} |L_e \ L_p|)
//
// No supervariable detection or dense-row postponement is done; ties go to
// the lowest original index so the result is deterministic. The last two
// pivots always tie and their order never changes fill.

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "amcmc/sparse_core.hpp"

namespace amcmc {

Permutation amd_order(const SparsityPattern& graph) {
    const Index n = graph.size();
    const auto un = static_cast<std::size_t>(n);

    std::vector<std::vector<Index>> adj(un);      // A[i]
    std::vector<std::vector<Index>> elems(un);    // E[i]
    std::vector<std::vector<Index>> members(un);  // L[e]
    std::vector<char> eliminated(un, 0);
    std::vector<char> absorbed(un, 0);
    std::vector<Index> degree(un, 0);

    std::set<std::pair<Index, Index>> queue;
    for (Index i = 0; i < n; ++i) {
        for (Index j : graph.indices(i)) {
            if (j != i) adj[static_cast<std::size_t>(i)].push_back(j);
        }
        degree[static_cast<std::size_t>(i)] = static_cast<Index>(adj[static_cast<std::size_t>(i)].size());
        queue.emplace(degree[static_cast<std::size_t>(i)], i);
    }

    std::vector<Index> in_lp(un, -1);   // stamp: variable belongs to current L_p
    std::vector<Index> w(un, 0);        // |L_e \ L_p| for elements touched this step
    std::vector<Index> w_stamp(un, -1);
    std::vector<Index> order;
    order.reserve(un);

    for (Index k = 0; k < n; ++k) {
        const auto [deg_p, p] = *queue.begin();
        queue.erase(queue.begin());
        const auto up = static_cast<std::size_t>(p);
        order.push_back(p);
        eliminated[up] = 1;

        // L_p = (A_p U union of absorbed element sets) \ {p}
        std::vector<Index> lp;
        in_lp[up] = k;
        for (Index v : adj[up]) {
            const auto uv = static_cast<std::size_t>(v);
            if (!eliminated[uv] && in_lp[uv] != k) {
                in_lp[uv] = k;
                lp.push_back(v);
            }
        }
        for (Index e : elems[up]) {
            const auto ue = static_cast<std::size_t>(e);
            if (absorbed[ue]) continue;
            for (Index v : members[ue]) {
                const auto uv = static_cast<std::size_t>(v);
                if (!eliminated[uv] && in_lp[uv] != k) {
                    in_lp[uv] = k;
                    lp.push_back(v);
                }
            }
            absorbed[ue] = 1;
            members[ue].clear();
            members[ue].shrink_to_fit();
        }
        adj[up].clear();
        elems[up].clear();
        std::ranges::sort(lp);
        const auto lp_size = static_cast<Index>(lp.size());

        // w(e) = |L_e| - |L_e ∩ L_p| for live elements adjacent to L_p.
        for (Index i : lp) {
            for (Index e : elems[static_cast<std::size_t>(i)]) {
                const auto ue = static_cast<std::size_t>(e);
                if (absorbed[ue]) continue;
                if (w_stamp[ue] != k) {
                    w_stamp[ue] = k;
                    w[ue] = static_cast<Index>(members[ue].size());
                }
                --w[ue];
            }
        }

        for (Index i : lp) {
            const auto ui = static_cast<std::size_t>(i);

            // Element lists: drop absorbed elements and elements now covered by L_p.
            auto& ei = elems[ui];
            std::erase_if(ei, [&](Index e) {
                const auto ue = static_cast<std::size_t>(e);
                if (absorbed[ue]) return true;
                if (w_stamp[ue] == k && w[ue] == 0) {
                    absorbed[ue] = 1;
                    members[ue].clear();
                    return true;
                }
                return false;
            });

            // Variable lists: entries inside L_p are reachable through element p.
            auto& ai = adj[ui];
            std::erase_if(ai, [&](Index v) {
                const auto uv = static_cast<std::size_t>(v);
                return eliminated[uv] || in_lp[uv] == k;
            });

            Index external = static_cast<Index>(ai.size()) + lp_size - 1;
            for (Index e : ei) {
                const auto ue = static_cast<std::size_t>(e);
                external += (w_stamp[ue] == k) ? w[ue] : static_cast<Index>(members[ue].size());
            }
            ei.push_back(p);

            const Index old_degree = degree[ui];
            Index d = std::min({n - k - 1, old_degree + lp_size - 1, external});
            d = std::max<Index>(d, 0);
            if (d != old_degree) {
                queue.erase({old_degree, i});
                degree[ui] = d;
                queue.emplace(d, i);
            }
        }
        members[up] = std::move(lp);
        (void)deg_p;
    }
    return Permutation::from_forward(std::move(order));
}

}  // namespace amcmc
