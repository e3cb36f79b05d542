#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "graphcpd/types.hpp"

namespace graphcpd {

/// Undirected graph with binary weights, stored as sorted adjacency lists.
class PixelGraph {
public:
    using Edge = std::pair<std::size_t, std::size_t>;

    PixelGraph() = default;

    /// Generic constructor. Self loops are rejected; duplicate edges collapse.
    PixelGraph(std::size_t vertices, std::span<const Edge> edges) : adjacency_(vertices) {
        for (auto [i, j] : edges) {
            if (i >= vertices || j >= vertices) throw DimensionError("edge endpoint out of range");
            if (i == j) throw ParameterError("self loops are not allowed");
            adjacency_[i].push_back(j);
            adjacency_[j].push_back(i);
        }
        for (auto& nbrs : adjacency_) {
            std::sort(nbrs.begin(), nbrs.end());
            nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
        }
        find_components();
    }

    [[nodiscard]] std::size_t size() const noexcept { return adjacency_.size(); }
    [[nodiscard]] std::size_t degree(std::size_t n) const { return adjacency_[n].size(); }
    [[nodiscard]] std::span<const std::size_t> neighbors(std::size_t n) const { return adjacency_[n]; }
    [[nodiscard]] bool adjacent(std::size_t i, std::size_t j) const {
        return std::binary_search(adjacency_[i].begin(), adjacency_[i].end(), j);
    }

    [[nodiscard]] std::size_t edge_count() const {
        std::size_t twice = 0;
        for (const auto& nbrs : adjacency_) twice += nbrs.size();
        return twice / 2;
    }

    /// Edges (i, j) with i < j, lexicographic.
    [[nodiscard]] std::vector<Edge> edges() const {
        std::vector<Edge> out;
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j : adjacency_[i])
                if (i < j) out.emplace_back(i, j);
        return out;
    }

    /// Connected components, ordered by smallest vertex; vertices ascending.
    [[nodiscard]] const std::vector<std::vector<std::size_t>>& components() const noexcept { return components_; }
    [[nodiscard]] std::size_t component_of(std::size_t n) const { return component_of_[n]; }

private:
    friend PixelGraph build_graph(const Labeling&);

    void find_components() {
        constexpr auto unset = static_cast<std::size_t>(-1);
        component_of_.assign(size(), unset);
        components_.clear();
        std::vector<std::size_t> stack;
        for (std::size_t s = 0; s < size(); ++s) {
            if (component_of_[s] != unset) continue;
            const std::size_t id = components_.size();
            components_.emplace_back();
            component_of_[s] = id;
            stack.assign(1, s);
            while (!stack.empty()) {
                const std::size_t v = stack.back();
                stack.pop_back();
                components_[id].push_back(v);
                for (std::size_t u : adjacency_[v])
                    if (component_of_[u] == unset) {
                        component_of_[u] = id;
                        stack.push_back(u);
                    }
            }
            std::sort(components_[id].begin(), components_[id].end());
        }
    }

    std::vector<std::vector<std::size_t>> adjacency_;
    std::vector<std::vector<std::size_t>> components_;
    std::vector<std::size_t> component_of_;
};

/// Superpixel graph: i ~ j iff both pixels carry the same label. Every
/// component is a clique on one superpixel.
inline PixelGraph build_graph(const Labeling& labeling) {
    PixelGraph g;
    const auto members = labeling.members();
    g.adjacency_.resize(labeling.pixels());
    for (const auto& seg : members)
        for (std::size_t i : seg) {
            auto& nbrs = g.adjacency_[i];
            nbrs.reserve(seg.size() - 1);
            for (std::size_t j : seg)
                if (j != i) nbrs.push_back(j);
        }
    g.find_components();
    return g;
}

/// Closed-neighbourhood sums s(n) = y(n) + sum over neighbours m of y(m).
/// Terms are accumulated in ascending vertex order, so all members of a
/// clique produce bitwise identical sums.
inline std::vector<double> neighborhood_sums(const PixelGraph& graph, std::span<const double> y) {
    if (y.size() != graph.size()) throw DimensionError("signal length does not match the graph");
    std::vector<double> s(y.size());
    for (std::size_t n = 0; n < y.size(); ++n) {
        double acc = 0.0;
        bool self_added = false;
        for (std::size_t m : graph.neighbors(n)) {
            if (!self_added && n < m) {
                acc += y[n];
                self_added = true;
            }
            acc += y[m];
        }
        if (!self_added) acc += y[n];
        s[n] = acc;
    }
    return s;
}

}  // namespace graphcpd
