#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "model.hpp"

namespace mor {

/// Each valid node points at the peer whose weight vector has the smallest
/// angle to its own. Zero-norm nodes are excluded and have no edge.
struct AngleGraph {
    static constexpr std::int64_t no_edge = -1;

    std::vector<std::int64_t> target;
    std::vector<double> angle; // degrees to target; NaN when no edge
    std::vector<std::uint32_t> indegree;
    std::vector<bool> excluded;

    std::size_t size() const { return target.size(); }
    bool has_edge(std::size_t i) const { return target[i] != no_edge; }
};

/// Angle graph over `rows` weight vectors of length `cols` stored row-major.
/// Ties on the minimum angle resolve to the lower peer index.
template <typename T>
AngleGraph build_angle_graph(std::span<const T> weights, std::size_t rows, std::size_t cols) {
    if (weights.size() != rows * cols)
        throw StructuralError("build_angle_graph: weight matrix size mismatch");
    AngleGraph g;
    g.target.assign(rows, AngleGraph::no_edge);
    g.angle.assign(rows, std::numeric_limits<double>::quiet_NaN());
    g.indegree.assign(rows, 0);
    g.excluded.assign(rows, false);

    std::vector<double> norm(rows, 0.0);
    std::size_t valid = 0;
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0;
        for (std::size_t k = 0; k < cols; ++k) {
            const double v = static_cast<double>(weights[i * cols + k]);
            s += v * v;
        }
        norm[i] = std::sqrt(s);
        g.excluded[i] = s == 0.0;
        valid += !g.excluded[i];
    }
    if (valid < 2) {
        g.excluded.assign(rows, true);
        return g;
    }

    // Cosine is symmetric in (i, j), so each pair is computed once.
    std::vector<double> best_cos(rows, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < rows; ++i) {
        if (g.excluded[i])
            continue;
        for (std::size_t j = i + 1; j < rows; ++j) {
            if (g.excluded[j])
                continue;
            double dot = 0;
            for (std::size_t k = 0; k < cols; ++k)
                dot += static_cast<double>(weights[i * cols + k]) * static_cast<double>(weights[j * cols + k]);
            const double cs = std::clamp(dot / (norm[i] * norm[j]), -1.0, 1.0);
            // Strict comparison keeps the lowest index among equal angles.
            if (cs > best_cos[i]) {
                best_cos[i] = cs;
                g.target[i] = static_cast<std::int64_t>(j);
            }
            if (cs > best_cos[j] || (cs == best_cos[j] && static_cast<std::int64_t>(i) < g.target[j])) {
                best_cos[j] = cs;
                g.target[j] = static_cast<std::int64_t>(i);
            }
        }
    }
    for (std::size_t i = 0; i < rows; ++i) {
        if (!g.has_edge(i))
            continue;
        const auto t = static_cast<std::size_t>(g.target[i]);
        g.angle[i] = cosine_angle<T>(weights.subspan(i * cols, cols), weights.subspan(t * cols, cols));
        g.indegree[t]++;
    }
    return g;
}

inline AngleGraph build_angle_graph(const LayerDesc& layer) {
    return build_angle_graph<std::int8_t>(layer.weights, layer.out_features, layer.fan_in);
}

struct Cluster {
    std::uint32_t proxy = 0;
    std::vector<std::uint32_t> members; // ascending original index

    std::size_t size() const { return members.size(); }

    friend bool operator==(const Cluster&, const Cluster&) = default;
};

/// Clusters of one layer. Singletons are evaluated like proxies but have
/// no members.
struct LayerClusters {
    std::uint32_t neuron_count = 0;
    std::vector<Cluster> clusters;
    std::vector<std::uint32_t> singletons;

    static LayerClusters all_singletons(std::uint32_t n) {
        LayerClusters lc;
        lc.neuron_count = n;
        lc.singletons.resize(n);
        for (std::uint32_t i = 0; i < n; ++i)
            lc.singletons[i] = i;
        return lc;
    }

    std::size_t member_count() const {
        std::size_t m = 0;
        for (const auto& c : clusters)
            m += c.size();
        return m;
    }

    friend bool operator==(const LayerClusters&, const LayerClusters&) = default;
};

struct ClusterPlan {
    std::vector<LayerClusters> layers;

    static ClusterPlan unclustered(const QuantModel& model) {
        ClusterPlan plan;
        for (const auto& layer : model.layers)
            plan.layers.push_back(LayerClusters::all_singletons(layer.out_features));
        return plan;
    }

    friend bool operator==(const ClusterPlan&, const ClusterPlan&) = default;
};

/// Greedy proxy selection: repeatedly take the remaining node with the most
/// remaining in-edges (lowest index on ties); its remaining in-neighbours
/// become its members and all of them leave the graph. A node whose closest
/// angle exceeds `max_angle` never joins a cluster as a member.
inline LayerClusters build_clusters(const AngleGraph& graph, std::optional<double> max_angle = std::nullopt) {
    const std::size_t n = graph.size();
    LayerClusters out;
    out.neuron_count = static_cast<std::uint32_t>(n);

    auto eligible = [&](std::size_t i) {
        return graph.has_edge(i) && (!max_angle || graph.angle[i] <= *max_angle);
    };

    std::vector<bool> remaining(n, false);
    std::vector<std::uint32_t> indeg(n, 0);
    std::vector<std::vector<std::uint32_t>> in_edges(n);
    std::size_t left = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (graph.excluded[i])
            continue;
        remaining[i] = true;
        ++left;
        if (eligible(i)) {
            const auto t = static_cast<std::size_t>(graph.target[i]);
            indeg[t]++;
            in_edges[t].push_back(static_cast<std::uint32_t>(i));
        }
    }

    auto remove = [&](std::size_t i) {
        remaining[i] = false;
        --left;
        if (eligible(i)) {
            const auto t = static_cast<std::size_t>(graph.target[i]);
            indeg[t]--;
        }
    };

    while (left > 0) {
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i)
            if (remaining[i] && (pick == n || indeg[i] > indeg[pick]))
                pick = i;

        Cluster c;
        c.proxy = static_cast<std::uint32_t>(pick);
        for (auto src : in_edges[pick])
            if (remaining[src])
                c.members.push_back(src);
        remove(pick);
        for (auto m : c.members)
            remove(m);

        if (c.members.empty())
            out.singletons.push_back(c.proxy);
        else
            out.clusters.push_back(std::move(c));
    }

    for (std::size_t i = 0; i < n; ++i)
        if (graph.excluded[i])
            out.singletons.push_back(static_cast<std::uint32_t>(i));
    return out;
}

/// Clusters every ReLU layer; other layers stay all-singleton since they
/// never take part in prediction.
inline ClusterPlan cluster_model(const QuantModel& model, std::optional<double> max_angle = std::nullopt) {
    ClusterPlan plan;
    for (const auto& layer : model.layers) {
        if (!layer.has_relu) {
            plan.layers.push_back(LayerClusters::all_singletons(layer.out_features));
            continue;
        }
        plan.layers.push_back(build_clusters(build_angle_graph(layer), max_angle));
    }
    return plan;
}

/// Role of each neuron within a layer's clustering.
struct NeuronRoles {
    static constexpr std::int64_t none = -1;

    // For members: index into LayerClusters::clusters; otherwise none.
    std::vector<std::int64_t> member_of;
    // For proxies: index of the cluster they lead; otherwise none.
    std::vector<std::int64_t> proxy_of;

    bool is_member(std::size_t n) const { return member_of[n] != none; }
};

/// Checks the partition property and returns the per-neuron roles.
inline NeuronRoles check_partition(const LayerClusters& lc) {
    NeuronRoles roles;
    roles.member_of.assign(lc.neuron_count, NeuronRoles::none);
    roles.proxy_of.assign(lc.neuron_count, NeuronRoles::none);
    std::vector<std::uint8_t> seen(lc.neuron_count, 0);
    auto mark = [&](std::uint32_t i) {
        if (i >= lc.neuron_count)
            throw StructuralError("cluster plan references a neuron out of range");
        if (seen[i]++)
            throw StructuralError("cluster plan lists neuron " + std::to_string(i) + " twice");
    };
    for (std::size_t k = 0; k < lc.clusters.size(); ++k) {
        const auto& c = lc.clusters[k];
        if (c.members.empty())
            throw StructuralError("cluster without members must be a singleton");
        mark(c.proxy);
        roles.proxy_of[c.proxy] = static_cast<std::int64_t>(k);
        for (auto m : c.members) {
            mark(m);
            roles.member_of[m] = static_cast<std::int64_t>(k);
        }
    }
    for (auto s : lc.singletons)
        mark(s);
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i])
            throw StructuralError("cluster plan misses neuron " + std::to_string(i));
    return roles;
}

inline void validate_plan(const ClusterPlan& plan, const QuantModel& model) {
    if (plan.layers.size() != model.layers.size())
        throw StructuralError("cluster plan layer count does not match model");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (plan.layers[l].neuron_count != model.layers[l].out_features)
            throw StructuralError("cluster plan neuron count does not match layer " + std::to_string(l));
        check_partition(plan.layers[l]);
    }
}

} // namespace mor
