#include "opvi/graph.hpp"

#include <algorithm>
#include <string>

#include "opvi/errors.hpp"
#include "opvi/rng.hpp"

namespace opvi {

Graph::Graph(int n_nodes, const std::vector<Edge>& edges) : n_(n_nodes)
{
    edges_.reserve(edges.size());
    for (const Edge& e : edges) {
        if (e.a < 0 || e.b >= n_ || e.a == e.b)
            throw ConfigError("graph: invalid edge (" + std::to_string(e.a) + "," + std::to_string(e.b) + ")");
        if (lookup_.insert(key(e.a, e.b)).second)
            edges_.push_back(e);
    }
}

std::uint64_t Graph::key(int u, int v) noexcept
{
    const auto lo = static_cast<std::uint64_t>(std::min(u, v));
    const auto hi = static_cast<std::uint64_t>(std::max(u, v));
    return (lo << 32) | hi;
}

bool Graph::has_edge(int u, int v) const
{
    return u != v && lookup_.contains(key(u, v));
}

std::vector<int> Graph::degrees() const
{
    std::vector<int> deg(static_cast<std::size_t>(n_), 0);
    for (const Edge& e : edges_) {
        ++deg[static_cast<std::size_t>(e.a)];
        ++deg[static_cast<std::size_t>(e.b)];
    }
    return deg;
}

bool Graph::connected() const
{
    if (n_ <= 1)
        return true;
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_));
    for (const Edge& e : edges_) {
        adj[static_cast<std::size_t>(e.a)].push_back(e.b);
        adj[static_cast<std::size_t>(e.b)].push_back(e.a);
    }
    std::vector<char> seen(static_cast<std::size_t>(n_), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int visited = 1;
    while (!stack.empty()) {
        const int node = stack.back();
        stack.pop_back();
        for (const int next : adj[static_cast<std::size_t>(node)]) {
            if (!seen[static_cast<std::size_t>(next)]) {
                seen[static_cast<std::size_t>(next)] = 1;
                ++visited;
                stack.push_back(next);
            }
        }
    }
    return visited == n_;
}

std::pair<int, int> Graph::sample_oriented_edge(Rng& rng) const
{
    const Edge& e = edges_[rng.below(edges_.size())];
    if (rng.below(2) == 0)
        return {e.a, e.b};
    return {e.b, e.a};
}

bool Graph::rewire(int u, int v, int w, int z)
{
    if (u == v || u == w || u == z || v == w || v == z || w == z)
        return false;
    if (!has_edge(u, v) || !has_edge(w, z) || has_edge(u, z) || has_edge(w, v))
        return false;

    // Edit in place so the edge order stays stable for sampling.
    const auto slot_uv = std::find(edges_.begin(), edges_.end(), Edge(u, v));
    const auto slot_wz = std::find(edges_.begin(), edges_.end(), Edge(w, z));
    const Edge old_uv = *slot_uv;
    const Edge old_wz = *slot_wz;
    *slot_uv = Edge(u, z);
    *slot_wz = Edge(w, v);
    lookup_.erase(key(u, v));
    lookup_.erase(key(w, z));
    lookup_.insert(key(u, z));
    lookup_.insert(key(w, v));

    if (connected())
        return true;

    *slot_uv = old_uv;
    *slot_wz = old_wz;
    lookup_.erase(key(u, z));
    lookup_.erase(key(w, v));
    lookup_.insert(key(u, v));
    lookup_.insert(key(w, z));
    return false;
}

std::vector<Edge> init_graph(int n_agents, double density, std::uint64_t seed)
{
    if (n_agents < 2)
        throw ConfigError("init_graph: need at least 2 agents");
    if (!(density > 0.0 && density <= 1.0))
        throw ConfigError("init_graph: density must lie in (0, 1]");

    constexpr int kMaxAttempts = 10000;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Rng rng = Rng::stream(hash_seed(seed, 0x6772617068ULL), static_cast<std::uint64_t>(attempt));
        std::vector<Edge> edges;
        for (int a = 0; a < n_agents; ++a)
            for (int b = a + 1; b < n_agents; ++b)
                if (rng.uniform() < density)
                    edges.emplace_back(a, b);
        if (Graph(n_agents, edges).connected())
            return edges;
    }
    throw ConfigError("init_graph: no connected graph after " + std::to_string(kMaxAttempts) +
                      " draws; density too low for n_agents");
}

} // namespace opvi
