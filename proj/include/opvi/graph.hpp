#ifndef OPVI_GRAPH_HPP
#define OPVI_GRAPH_HPP

#include <cstdint>
#include <unordered_set>
#include <utility>
#include <vector>

namespace opvi {

class Rng;

/// Undirected edge stored with a < b.
struct Edge {
    int a = 0;
    int b = 0;

    Edge() = default;
    Edge(int x, int y) : a(x < y ? x : y), b(x < y ? y : x) {}
    bool operator==(const Edge&) const = default;
    auto operator<=>(const Edge&) const = default;
};

/// Simple undirected graph with O(1) edge lookup and uniform edge sampling.
class Graph {
public:
    Graph(int n_nodes, const std::vector<Edge>& edges);

    int n_nodes() const noexcept { return n_; }
    std::size_t n_edges() const noexcept { return edges_.size(); }
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    bool has_edge(int u, int v) const;
    std::vector<int> degrees() const;
    bool connected() const;

    /// Uniform edge with a uniform orientation, returned as (first, second).
    std::pair<int, int> sample_oriented_edge(Rng& rng) const;

    /**
     * Degree-preserving swap: removes (u,v),(w,z), adds (u,z),(w,v).
     * Returns false and leaves the graph unchanged unless both edges exist,
     * the four nodes are distinct, neither new edge exists, and the result
     * is connected.
     */
    bool rewire(int u, int v, int w, int z);

private:
    static std::uint64_t key(int u, int v) noexcept;

    int n_;
    std::vector<Edge> edges_;
    std::unordered_set<std::uint64_t> lookup_;
};

/**
 * Erdos-Renyi G(n, p): each unordered pair kept with probability `density`.
 * Re-drawn until connected (at most 10000 attempts). Throws ConfigError if
 * n_agents < 2 or density is outside (0, 1].
 */
std::vector<Edge> init_graph(int n_agents, double density, std::uint64_t seed);

} // namespace opvi

#endif // OPVI_GRAPH_HPP
