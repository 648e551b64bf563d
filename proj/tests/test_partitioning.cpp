#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "siscm/partitioning.hpp"
#include "siscm/synthetic.hpp"
#include "test_support.hpp"

using namespace siscm;
namespace tu = siscm::testing;

namespace {

// One-feature panel whose x[0] selects a row of the table models.
PanelDataset row_panel(const std::vector<ExpertId>& roster, const std::vector<std::vector<int>>& labels,
                       std::size_t k = 2) {
    PanelDataset ds;
    ds.k = k;
    ds.d = 1;
    ds.label_names = default_label_names(k);
    ds.roster = roster;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        Sample s{"s" + std::to_string(i), {static_cast<double>(i)}, {}};
        for (std::size_t e = 0; e < labels[i].size(); ++e) {
            if (labels[i][e] >= 0) s.predictions.push_back({e, static_cast<Label>(labels[i][e])});
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

SimilarityGraph triangle(double ab, double bc, double ac) {
    SimilarityGraph g({"a", "b", "c"});
    g.add_edge("a", "b", ab);
    g.add_edge("b", "c", bc);
    g.add_edge("a", "c", ac);
    return g;
}

SimilarityGraph random_graph(std::size_t n, double edge_prob, Rng rng) {
    std::vector<ExpertId> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("v" + std::to_string(i));
    SimilarityGraph g(ids);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
            if (rng.uniform_open() < edge_prob) g.add_edge(u, v, 2.0 * rng.uniform_open() - 1.0);
        }
    }
    return g;
}

std::vector<std::size_t> group_sizes(const Partition& p) {
    std::vector<std::size_t> sizes;
    for (const auto& g : p.groups()) sizes.push_back(g.size());
    std::sort(sizes.begin(), sizes.end());
    return sizes;
}

}  // namespace

TEST(Violations, RatioConditionFlagsThePair) {
    ModelSet models{{"h", tu::table_model({0.6, 0.4})}, {"g", tu::table_model({0.7, 0.3})}};
    const PanelDataset ds = row_panel({"g", "h"}, {{1, 0}});
    const auto scan = detect_violations(ds, models);
    // Both orderings are recorded; with slack 1 the two tests agree.
    ASSERT_EQ(scan.violations.size(), 2u);
    const auto& v = scan.violations[1];
    EXPECT_EQ(scan.violations[0].source, "g");
    EXPECT_EQ(v.source, "h");
    EXPECT_EQ(v.target, "g");
    EXPECT_EQ(v.source_label, 0u);
    EXPECT_EQ(v.target_label, 1u);
    EXPECT_NEAR(v.ratio_lhs, 0.7 / 0.6, 1e-12);
    EXPECT_NEAR(v.ratio_rhs, 0.3 / 0.4, 1e-12);
    EXPECT_EQ(scan.graph.num_edges(), 0u);
}

TEST(Violations, EqualLabelsNeverViolate) {
    ModelSet models{{"h", tu::table_model({0.6, 0.4})}, {"g", tu::table_model({0.6, 0.4})}};
    const PanelDataset ds = row_panel({"g", "h"}, {{0, 0}, {1, 1}, {0, 0}});
    const auto scan = detect_violations(ds, models);
    EXPECT_TRUE(scan.violations.empty());
    ASSERT_EQ(scan.graph.num_edges(), 1u);
    EXPECT_EQ(scan.graph.edges().front().co_observations, 3u);
}

TEST(Violations, NeverCoObservedMeansNoEdge) {
    ModelSet models{{"a", tu::table_model({0.6, 0.4})}, {"b", tu::table_model({0.6, 0.4})},
                    {"c", tu::table_model({0.6, 0.4})}};
    const PanelDataset ds = row_panel({"a", "b", "c"}, {{0, 0, -1}, {-1, 1, 1}});
    const auto scan = detect_violations(ds, models);
    EXPECT_TRUE(scan.graph.find_edge(0, 1).has_value());
    EXPECT_TRUE(scan.graph.find_edge(1, 2).has_value());
    EXPECT_FALSE(scan.graph.find_edge(0, 2).has_value());
}

TEST(Violations, SlackMakesTheTestStricter) {
    ModelSet models{{"h", tu::table_model({0.6, 0.4})}, {"g", tu::table_model({0.7, 0.3})}};
    const PanelDataset ds = row_panel({"g", "h"}, {{1, 0}});
    // lhs / rhs = 1.556; slack above that clears the pair.
    EXPECT_EQ(detect_violations(ds, models, 1.5).violations.size(), 2u);
    EXPECT_EQ(detect_violations(ds, models, 1.6).violations.size(), 0u);
}

TEST(Violations, MissingModelThrows) {
    ModelSet models{{"h", tu::table_model({0.6, 0.4})}};
    const PanelDataset ds = row_panel({"g", "h"}, {{1, 0}});
    EXPECT_THROW(detect_violations(ds, models), MissingExpert);
}

TEST(Violations, SameGroupPairsNeverViolateOnSyntheticData) {
    SyntheticConfig cfg;
    cfg.n_train = 300;
    cfg.sparsity = 0.5;
    cfg.n_test = 1;
    cfg.seed = 12;
    const auto panel = generate_synthetic(cfg);
    const auto scan = detect_violations(panel.train, panel.models(), 1.0, 4);
    EXPECT_FALSE(scan.violations.empty());
    for (const auto& v : scan.violations) ASSERT_FALSE(panel.truth.same_group(v.source, v.target));
}

TEST(EdgeWeights, IdenticalAgreeingModelsGiveNonPositiveWeight) {
    ModelSet models{{"h", tu::table_model({0.3, 0.7})}, {"g", tu::table_model({0.3, 0.7})}};
    const PanelDataset ds = row_panel({"g", "h"}, {{0, 0}, {1, 1}, {0, 0}, {1, 1}});
    const auto scan = detect_violations(ds, models);
    const auto g = compute_edge_weights(scan.graph, ds, models, {200, LossKind::ZeroOne, 1}, Rng(1));
    // Shared noise is always right; the marginal argmax (1) misses the two zeros per direction.
    EXPECT_DOUBLE_EQ(*g.weight("g", "h"), -1.0);
}

TEST(EdgeWeights, MatchingArgmaxesGiveZeroWeight) {
    // Observing the mode keeps the other expert's mode as its counterfactual argmax.
    ModelSet models{{"h", tu::table_model({0.8, 0.2})}, {"g", tu::table_model({0.9, 0.1})}};
    const PanelDataset ds = row_panel({"g", "h"}, {{0, 0}, {0, 0}, {0, 0}});
    const auto scan = detect_violations(ds, models);
    ASSERT_TRUE(scan.graph.find_edge(0, 1).has_value());
    const auto g = compute_edge_weights(scan.graph, ds, models, {500, LossKind::ZeroOne, 1}, Rng(2));
    EXPECT_DOUBLE_EQ(*g.weight("g", "h"), 0.0);
}

TEST(EdgeWeights, FiveSampleFixtureMatchesClosedForm) {
    const std::vector<std::vector<double>> h_rows{{0.7, 0.3}, {0.2, 0.8}, {0.55, 0.45}, {0.9, 0.1}, {0.4, 0.6}};
    const std::vector<std::vector<double>> g_rows{{0.6, 0.4}, {0.5, 0.5}, {0.35, 0.65}, {0.2, 0.8}, {0.45, 0.55}};
    const std::vector<Label> h_labels{0, 1, 0, 1, 0};
    const std::vector<Label> g_labels{0, 0, 1, 1, 0};

    double oracle = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto directional = [&](const std::vector<double>& src, const std::vector<double>& tgt, Label observed,
                                     Label truth) {
            const double p0 = tu::two_label_counterfactual(src, tgt, observed, 0);
            const Label shared = p0 >= 0.5 ? 0 : 1;
            const Label independent = tgt[0] >= tgt[1] ? 0 : 1;
            return (shared != truth ? 1.0 : 0.0) - (independent != truth ? 1.0 : 0.0);
        };
        oracle += directional(h_rows[i], g_rows[i], h_labels[i], g_labels[i]) / 5.0;
        oracle += directional(g_rows[i], h_rows[i], g_labels[i], h_labels[i]) / 5.0;
    }
    EXPECT_NEAR(oracle, 0.2, 1e-12);

    ModelSet models{{"h", std::make_shared<tu::TableModel>(h_rows)}, {"g", std::make_shared<tu::TableModel>(g_rows)}};
    std::vector<std::vector<int>> labels;
    for (std::size_t i = 0; i < 5; ++i) labels.push_back({int(g_labels[i]), int(h_labels[i])});
    const PanelDataset ds = row_panel({"g", "h"}, labels);
    SimilarityGraph edges({"g", "h"});
    edges.add_edge("g", "h", 0.0, 5);
    for (std::size_t T : {std::size_t{1000}, std::size_t{1000000}}) {
        const auto g = compute_edge_weights(edges, ds, models, {T, LossKind::ZeroOne, 1}, Rng(3));
        EXPECT_NEAR(*g.weight("g", "h"), oracle, 1e-12) << "T = " << T;
    }
}

TEST(EdgeWeights, EdgeWithoutCoObservationsThrows) {
    ModelSet models{{"a", tu::table_model({0.5, 0.5})}, {"b", tu::table_model({0.5, 0.5})}};
    const PanelDataset ds = row_panel({"a", "b"}, {{0, -1}, {-1, 1}});
    SimilarityGraph edges({"a", "b"});
    edges.add_edge("a", "b", 0.0);
    EXPECT_THROW(compute_edge_weights(edges, ds, models, {}, Rng(4)), InvalidEdge);
}

TEST(EdgeWeights, SymmetricAndThreadIndependent) {
    SyntheticConfig cfg;
    cfg.n_experts = 12;
    cfg.group_sizes = {5, 7};
    cfg.n_train = 120;
    cfg.n_test = 1;
    cfg.seed = 9;
    const auto panel = generate_synthetic(cfg);
    const auto models = panel.models();
    const auto scan = detect_violations(panel.train, models);
    const auto one = compute_edge_weights(scan.graph, panel.train, models, {300, LossKind::ZeroOne, 1}, Rng(5));
    const auto four = compute_edge_weights(scan.graph, panel.train, models, {300, LossKind::ZeroOne, 4}, Rng(5));
    ASSERT_EQ(one.num_edges(), four.num_edges());
    for (std::size_t e = 0; e < one.num_edges(); ++e) EXPECT_EQ(one.edges()[e].weight, four.edges()[e].weight);
    for (const auto& e : one.edges()) {
        const auto& a = one.vertices()[e.u];
        const auto& b = one.vertices()[e.v];
        EXPECT_EQ(*one.weight(a, b), *one.weight(b, a));
    }
    const auto nll = compute_edge_weights(scan.graph, panel.train, models, {300, LossKind::NegLogLikelihood, 2}, Rng(5));
    for (const auto& e : nll.edges()) EXPECT_TRUE(std::isfinite(e.weight));
}

TEST(Objective, Examples) {
    SimilarityGraph g = triangle(-1.0, -2.0, -3.0);
    EXPECT_DOUBLE_EQ(objective(Partition::singletons(g.vertices()), g), 0.0);
    EXPECT_DOUBLE_EQ(objective(Partition::single_group(g.vertices()), g), -6.0);
    SimilarityGraph path({"a", "b", "c"});
    path.add_edge("a", "b", -1.0);
    path.add_edge("b", "c", -1.0);
    EXPECT_THROW(objective(Partition(tu::Groups{{"a", "c"}, {"b"}}), path), NotACliqueCover);
}

TEST(Greedy, SingleVertex) {
    SimilarityGraph g({"h"});
    EXPECT_EQ(greedy_partition(g, Rng(1)), Partition(tu::Groups{{"h"}}));
}

TEST(Greedy, NegativeTriangleIsOneCliqueFromAnyStart) {
    const SimilarityGraph g = triangle(-1.0, -1.0, -1.0);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        EXPECT_EQ(greedy_partition(g, Rng(seed)).num_groups(), 1u);
    }
}

TEST(Greedy, PathNeverMergesBothEnds) {
    SimilarityGraph g({"a", "b", "c"});
    g.add_edge("a", "b", -1.0);
    g.add_edge("b", "c", -1.0);
    std::set<std::vector<std::vector<ExpertId>>> seen;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const Partition p = greedy_partition(g, Rng(seed));
        EXPECT_EQ(group_sizes(p), (std::vector<std::size_t>{1, 2}));
        EXPECT_DOUBLE_EQ(objective(p, g), -1.0);
        seen.insert(p.groups());
    }
    // Starting at a or at b (smallest-id tie-break) pairs a with b; starting at c pairs b with c.
    EXPECT_EQ(seen.size(), 2u);
}

TEST(Greedy, AllPositiveWeightsGiveSingletons) {
    const SimilarityGraph g = triangle(0.5, 1.0, 2.0);
    const Partition p = partition_with_restarts(g, 7, Rng(2));
    EXPECT_EQ(p, Partition::singletons(g.vertices()));
    EXPECT_DOUBLE_EQ(objective(p, g), 0.0);
}

TEST(Greedy, ZeroSumStillJoins) {
    const SimilarityGraph g = triangle(0.0, 0.0, 0.0);
    EXPECT_EQ(greedy_partition(g, Rng(3)).num_groups(), 1u);
}

TEST(Greedy, OutputIsAlwaysACliqueCover) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const SimilarityGraph g = random_graph(15, 0.5, Rng(seed));
        const Partition p = greedy_partition(g, Rng(seed + 1000));
        EXPECT_EQ(p.num_experts(), 15u);
        EXPECT_TRUE(std::isfinite(objective(p, g)));
    }
}

TEST(Restarts, SingleRestartEqualsOneGreedyRun) {
    const SimilarityGraph g = random_graph(10, 0.6, Rng(7));
    const Rng rng(8);
    EXPECT_EQ(partition_with_restarts(g, 1, rng), greedy_partition(g, rng.substream("restart", 0)));
    EXPECT_EQ(partition_with_restarts(g, 5, rng), partition_with_restarts(g, 5, rng));
    EXPECT_THROW(partition_with_restarts(g, 0, rng), InvalidArgument);
}

TEST(Restarts, PlantedCliqueIsRecovered) {
    std::vector<ExpertId> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("e" + std::to_string(i));
    SimilarityGraph g(ids);
    Rng rng(11);
    // Planted clique {e0..e4}; everything else pays to join.
    for (std::size_t u = 0; u < 10; ++u) {
        for (std::size_t v = u + 1; v < 10; ++v) {
            const bool inside = u < 5 && v < 5;
            g.add_edge(u, v, inside ? -5.0 - rng.uniform_open() : 1.0 + rng.uniform_open());
        }
    }
    const Partition best = brute_force_partition(g);
    const Partition found = partition_with_restarts(g, 20, Rng(12));
    EXPECT_EQ(found, best);
    EXPECT_TRUE(found.same_group("e0", "e4"));
    EXPECT_EQ(found.num_groups(), 6u);
}

TEST(BruteForce, Triangles) {
    const SimilarityGraph neg = triangle(-1.0, -1.0, -1.0);
    EXPECT_EQ(brute_force_partition(neg).num_groups(), 1u);
    EXPECT_DOUBLE_EQ(objective(brute_force_partition(neg), neg), -3.0);
    const SimilarityGraph pos = triangle(1.0, 1.0, 1.0);
    EXPECT_EQ(brute_force_partition(pos), Partition::singletons(pos.vertices()));
}

TEST(BruteForce, TooLargeThrows) {
    std::vector<ExpertId> ids;
    for (int i = 0; i < 13; ++i) ids.push_back("v" + std::to_string(100 + i));
    EXPECT_THROW(brute_force_partition(SimilarityGraph(ids)), TooLarge);
}

TEST(BruteForce, NeverWorseThanGreedy) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const SimilarityGraph g = random_graph(8, 0.7, Rng(seed));
        const double exact = objective(brute_force_partition(g), g);
        const double greedy = objective(partition_with_restarts(g, 20, Rng(seed + 500)), g);
        EXPECT_LE(exact, greedy + 1e-12);
    }
}

TEST(Serialization, PartitionRoundTrip) {
    tu::TempDir dir;
    const Partition p(tu::Groups{{"c", "a"}, {"b"}, {"e", "d"}});
    save_partition(p, dir / "partition.json");
    EXPECT_EQ(load_partition(dir / "partition.json"), p);
    EXPECT_EQ(read_text(dir / "partition.json"), "[\n  [\n    \"a\",\n    \"c\"\n  ],\n  [\n    \"b\"\n  ],\n  [\n    \"d\",\n    \"e\"\n  ]\n]\n");
    write_text(dir / "bad.json", "{\"a\": 1}");
    EXPECT_THROW(load_partition(dir / "bad.json"), SchemaError);
}

TEST(Serialization, ViolationCsvHeader) {
    const std::string csv = violations_csv({{"s,1", "h", "g", 0, 1, 0.5, 0.25}});
    EXPECT_EQ(csv,
              "sample_id,source,target,source_label,target_label,ratio_lhs,ratio_rhs\n\"s,1\",h,g,0,1,0.5,0.25\n");
}
