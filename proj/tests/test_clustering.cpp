#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mor/clustering.hpp"
#include "support/fixtures.hpp"

using namespace mor;
using namespace mor::testing;

namespace {

std::vector<double> planar(std::initializer_list<double> degrees) {
    std::vector<double> w;
    for (double d : degrees) {
        w.push_back(std::cos(d * std::numbers::pi / 180));
        w.push_back(std::sin(d * std::numbers::pi / 180));
    }
    return w;
}

AngleGraph fan_graph() {
    const auto w = planar({0, 5, -5});
    return build_angle_graph<double>(w, 3, 2);
}

} // namespace

TEST(AngleGraph, PlanarHandTrace) {
    const auto g = fan_graph();
    EXPECT_EQ(g.target, (std::vector<std::int64_t>{1, 0, 0}));
    EXPECT_EQ(g.indegree, (std::vector<std::uint32_t>{2, 1, 0}));
    EXPECT_NEAR(g.angle[0], 5.0, 1e-9);
    EXPECT_NEAR(g.angle[1], 5.0, 1e-9);
}

TEST(AngleGraph, IdenticalVectorsPointAtEachOther) {
    const std::vector<std::int8_t> w{3, -4, 7, 3, -4, 7};
    const auto g = build_angle_graph<std::int8_t>(w, 2, 3);
    EXPECT_EQ(g.target, (std::vector<std::int64_t>{1, 0}));
    EXPECT_NEAR(g.angle[0], 0.0, 1e-6);
    EXPECT_NEAR(g.angle[1], 0.0, 1e-6);
}

TEST(AngleGraph, OrthogonalTiesGoToLowestIndex) {
    const std::vector<std::int8_t> eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
    const auto g = build_angle_graph<std::int8_t>(eye, 3, 3);
    EXPECT_EQ(g.target, (std::vector<std::int64_t>{1, 0, 0}));
    for (double a : g.angle)
        EXPECT_NEAR(a, 90.0, 1e-12);
}

TEST(AngleGraph, ZeroNormExcluded) {
    const std::vector<std::int8_t> w{0, 0, 1, 2, 2, 4, 1, -1};
    const auto g = build_angle_graph<std::int8_t>(w, 4, 2);
    EXPECT_TRUE(g.excluded[0]);
    EXPECT_FALSE(g.has_edge(0));
    EXPECT_EQ(g.target[1], 2);
    EXPECT_EQ(std::accumulate(g.indegree.begin(), g.indegree.end(), 0u), 3u);

    const std::vector<std::int8_t> lone{0, 0, 5, 1};
    const auto g2 = build_angle_graph<std::int8_t>(lone, 2, 2);
    EXPECT_FALSE(g2.has_edge(0));
    EXPECT_FALSE(g2.has_edge(1));
    const auto plan = build_clusters(g2);
    EXPECT_TRUE(plan.clusters.empty());
    EXPECT_EQ(plan.singletons.size(), 2u);
}

TEST(BuildClusters, PlanarHandTrace) {
    const auto plan = build_clusters(fan_graph());
    ASSERT_EQ(plan.clusters.size(), 1u);
    EXPECT_EQ(plan.clusters[0].proxy, 0u);
    EXPECT_EQ(plan.clusters[0].members, (std::vector<std::uint32_t>{1, 2}));
    EXPECT_TRUE(plan.singletons.empty());
}

TEST(BuildClusters, TwoCycleLowerIndexLeads) {
    AngleGraph g;
    g.target = {1, 0};
    g.angle = {20, 20};
    g.indegree = {1, 1};
    g.excluded = {false, false};
    const auto plan = build_clusters(g);
    ASSERT_EQ(plan.clusters.size(), 1u);
    EXPECT_EQ(plan.clusters[0].proxy, 0u);
    EXPECT_EQ(plan.clusters[0].members, (std::vector<std::uint32_t>{1}));
}

TEST(BuildClusters, ZeroCutoffLeavesOnlySingletons) {
    Rng rng(1);
    const auto w = random_codes(rng, 20 * 16);
    const auto plan = build_clusters(build_angle_graph<std::int8_t>(w, 20, 16), 0.0);
    EXPECT_TRUE(plan.clusters.empty());
    EXPECT_EQ(plan.singletons.size(), 20u);
}

TEST(BuildClusters, MembersAreInNeighboursOnly) {
    // Chain 3 -> 2 -> 1 -> 0 <-> 1: proxy 1 takes {0, 2}; 3 is left alone.
    AngleGraph g;
    g.target = {1, 0, 1, 2};
    g.angle = {10, 10, 15, 20};
    g.indegree = {1, 2, 1, 0};
    g.excluded = {false, false, false, false};
    const auto plan = build_clusters(g);
    ASSERT_EQ(plan.clusters.size(), 1u);
    EXPECT_EQ(plan.clusters[0].proxy, 1u);
    EXPECT_EQ(plan.clusters[0].members, (std::vector<std::uint32_t>{0, 2}));
    EXPECT_EQ(plan.singletons, (std::vector<std::uint32_t>{3}));
}

TEST(BuildClusters, PartitionAndDeterminismOnRandomLayers) {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 2 + rng() % 60, k = 1 + rng() % 24;
        auto w = random_codes(rng, n * k, -127, 127);
        if (t % 7 == 0)
            std::fill_n(w.begin(), k, 0);
        const auto g = build_angle_graph<std::int8_t>(w, n, k);
        const auto a = build_clusters(g), b = build_clusters(build_angle_graph<std::int8_t>(w, n, k));
        EXPECT_EQ(a, b);
        const auto roles = check_partition(a);
        std::size_t members = 0;
        for (const auto& c : a.clusters) {
            members += c.size();
            EXPECT_TRUE(std::is_sorted(c.members.begin(), c.members.end()));
        }
        EXPECT_EQ(a.clusters.size() + members + a.singletons.size(), n);
        (void)roles;
    }
}

TEST(BuildClusters, CheckPartitionRejectsBrokenPlans) {
    LayerClusters lc;
    lc.neuron_count = 3;
    lc.clusters.push_back({0, {1}});
    lc.singletons = {1, 2};
    EXPECT_THROW(check_partition(lc), StructuralError);
    lc.singletons = {};
    EXPECT_THROW(check_partition(lc), StructuralError);
}

// Relabelling neurons and mapping the plan back yields the same partition
// whenever no tie-break was involved.
TEST(BuildClusters, PermutationIsomorphismWithoutTies) {
    Rng rng(3);
    int checked = 0;
    for (int t = 0; t < 400; ++t) {
        const std::size_t n = 3 + rng() % 10, k = 12;
        std::normal_distribution<double> gauss;
        std::vector<double> w(n * k);
        for (auto& x : w)
            x = gauss(rng);
        const auto g = build_angle_graph<double>(w, n, k);

        // Skip instances where the greedy selection ever faces an indegree tie.
        bool tie = false;
        {
            std::vector<bool> rem(n, true);
            std::vector<std::uint32_t> indeg = g.indegree;
            for (std::size_t left = n; left > 0 && !tie;) {
                std::uint32_t best = 0;
                std::size_t count = 0, pick = n;
                for (std::size_t i = 0; i < n; ++i) {
                    if (!rem[i])
                        continue;
                    if (pick == n || indeg[i] > best) {
                        best = indeg[i];
                        pick = i;
                        count = 1;
                    } else if (indeg[i] == best) {
                        ++count;
                    }
                }
                if (count > 1 && best > 0)
                    tie = true;
                if (best == 0)
                    break;
                std::vector<std::size_t> gone{pick};
                for (std::size_t i = 0; i < n; ++i)
                    if (rem[i] && i != pick && g.target[i] == static_cast<std::int64_t>(pick))
                        gone.push_back(i);
                for (auto i : gone) {
                    rem[i] = false;
                    --left;
                    if (rem[static_cast<std::size_t>(g.target[i])])
                        indeg[static_cast<std::size_t>(g.target[i])]--;
                }
            }
        }
        if (tie)
            continue;

        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> pw(n * k);
        for (std::size_t i = 0; i < n; ++i)
            std::copy_n(w.begin() + perm[i] * k, k, pw.begin() + i * k);
        const auto original = build_clusters(g);
        const auto permuted = build_clusters(build_angle_graph<double>(pw, n, k));

        auto canon = [](const LayerClusters& lc, auto&& label) {
            std::vector<std::pair<std::size_t, std::vector<std::size_t>>> out;
            for (const auto& c : lc.clusters) {
                std::vector<std::size_t> m;
                for (auto x : c.members)
                    m.push_back(label(x));
                std::sort(m.begin(), m.end());
                out.emplace_back(label(c.proxy), m);
            }
            std::sort(out.begin(), out.end());
            return out;
        };
        EXPECT_EQ(canon(original, [](std::size_t x) { return x; }),
                  canon(permuted, [&](std::size_t x) { return perm[x]; }));
        ++checked;
    }
    EXPECT_GT(checked, 50);
}

TEST(ClusterModel, NonReluLayersStayUnclustered) {
    Rng rng(4);
    auto fx = affine_fixture(rng, 3, 4, 15, 0.5, 0.5, true);
    const auto plan = cluster_model(fx.model);
    validate_plan(plan, fx.model);
    EXPECT_EQ(plan.layers[0].clusters.size(), 3u);
    for (const auto& c : plan.layers[0].clusters)
        EXPECT_EQ(c.size(), 3u);
    EXPECT_TRUE(plan.layers[1].clusters.empty());
    EXPECT_EQ(plan.layers[1].singletons.size(), 4u);
}
