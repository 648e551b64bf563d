#pragma once

// Learning the expert partition.
//
// 1. Scan the panel for conditional-stability violations. A pair (h, h')
//    co-observed with labels (c, c'), c != c', violates stability when
//        p_h'(c) / p_h(c) >= p_h'(c') / p_h(c')
//    because experts sharing noise can never produce that outcome.
// 2. Co-observed, violation-free pairs become edges of a similarity graph,
//    weighted by how much sharing noise changes the empirical counterfactual
//    loss (negative = sharing helps).
// 3. Pick a minimum-weight clique cover with a randomized greedy heuristic
//    plus restarts; an exhaustive solver serves as an oracle on small graphs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "siscm/dataset.hpp"
#include "siscm/errors.hpp"
#include "siscm/io.hpp"
#include "siscm/models.hpp"
#include "siscm/parallel.hpp"
#include "siscm/random.hpp"
#include "siscm/scm.hpp"
#include "siscm/types.hpp"

namespace siscm {

struct GraphEdge {
    std::size_t u;  // u < v, vertex indices
    std::size_t v;
    double weight;
    std::size_t co_observations;
};

/// Undirected graph over experts. Missing edges stand for +inf weight.
class SimilarityGraph {
public:
    SimilarityGraph() = default;

    explicit SimilarityGraph(std::vector<ExpertId> vertices) : vertices_(std::move(vertices)) {
        std::sort(vertices_.begin(), vertices_.end());
        if (std::adjacent_find(vertices_.begin(), vertices_.end()) != vertices_.end()) {
            throw InvalidArgument("duplicate graph vertex");
        }
        adjacency_.resize(vertices_.size());
    }

    const std::vector<ExpertId>& vertices() const noexcept { return vertices_; }
    const std::vector<GraphEdge>& edges() const noexcept { return edges_; }
    std::size_t num_vertices() const noexcept { return vertices_.size(); }
    std::size_t num_edges() const noexcept { return edges_.size(); }

    std::size_t vertex_index(const ExpertId& e) const {
        auto it = std::lower_bound(vertices_.begin(), vertices_.end(), e);
        if (it == vertices_.end() || *it != e) throw MissingExpert(e);
        return static_cast<std::size_t>(it - vertices_.begin());
    }

    /// (neighbor, edge index) pairs of vertex u.
    const std::vector<std::pair<std::size_t, std::size_t>>& neighbors(std::size_t u) const { return adjacency_.at(u); }

    std::size_t add_edge(std::size_t a, std::size_t b, double weight, std::size_t co_observations = 1) {
        if (a == b || a >= vertices_.size() || b >= vertices_.size()) throw InvalidEdge("invalid edge endpoints");
        if (!std::isfinite(weight)) throw InvalidEdge("edge weights must be finite");
        if (a > b) std::swap(a, b);
        if (lookup_.count(key(a, b)) != 0) throw InvalidEdge("duplicate edge {" + vertices_[a] + ", " + vertices_[b] + "}");
        const std::size_t idx = edges_.size();
        edges_.push_back({a, b, weight, co_observations});
        lookup_.emplace(key(a, b), idx);
        adjacency_[a].emplace_back(b, idx);
        adjacency_[b].emplace_back(a, idx);
        return idx;
    }

    std::size_t add_edge(const ExpertId& a, const ExpertId& b, double weight, std::size_t co_observations = 1) {
        return add_edge(vertex_index(a), vertex_index(b), weight, co_observations);
    }

    std::optional<std::size_t> find_edge(std::size_t a, std::size_t b) const {
        if (a > b) std::swap(a, b);
        auto it = lookup_.find(key(a, b));
        if (it == lookup_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<double> weight(const ExpertId& a, const ExpertId& b) const {
        auto e = find_edge(vertex_index(a), vertex_index(b));
        if (!e) return std::nullopt;
        return edges_[*e].weight;
    }

    void set_weight(std::size_t edge, double weight) {
        if (!std::isfinite(weight)) throw InvalidEdge("edge weights must be finite");
        edges_.at(edge).weight = weight;
    }

private:
    static std::uint64_t key(std::size_t a, std::size_t b) {
        return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
    }

    std::vector<ExpertId> vertices_;
    std::vector<GraphEdge> edges_;
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency_;
    std::unordered_map<std::uint64_t, std::size_t> lookup_;
};

// ---------------------------------------------------------------------------
// Violation scan

struct ViolationRecord {
    std::string sample_id;
    ExpertId source;
    ExpertId target;
    Label source_label;
    Label target_label;
    double ratio_lhs;  // p_target(source_label) / p_source(source_label)
    double ratio_rhs;  // p_target(target_label) / p_source(target_label)
};

struct ViolationScan {
    std::vector<ViolationRecord> violations;
    /// Permissible pairs with co-observation counts; weights are zero here.
    SimilarityGraph graph;
};

namespace detail {

/// Model outputs for every expert that predicted on `s`, aligned with s.predictions.
inline std::vector<SimplexDistribution> sample_simplexes(const Sample& s,
                                                         const std::vector<const ConditionalModel*>& bound) {
    std::vector<SimplexDistribution> out;
    out.reserve(s.predictions.size());
    for (const auto& p : s.predictions) out.push_back(bound[p.expert]->predict(s.x));
    return out;
}

inline std::vector<const ConditionalModel*> bind_models(const PanelDataset& ds, const ModelSet& models) {
    std::vector<const ConditionalModel*> bound;
    bound.reserve(ds.roster.size());
    for (const auto& e : ds.roster) {
        const ConditionalModel& m = require_model(models, e);
        if (m.num_labels() != ds.k) throw InvalidArgument("model for '" + e + "' has the wrong label count");
        bound.push_back(&m);
    }
    return bound;
}

}  // namespace detail

/// Flags every co-observed ordered pair whose labels violate conditional
/// stability; the remaining co-observed pairs form the permissible graph.
/// `slack` scales the right-hand ratio (1.0 applies the inequality as is).
inline ViolationScan detect_violations(const PanelDataset& ds, const ModelSet& models, double slack = 1.0,
                                       std::size_t threads = 1) {
    const auto bound = detail::bind_models(ds, models);
    const std::size_t n = ds.roster.size();

    struct PerSample {
        std::vector<ViolationRecord> violations;
        std::vector<std::pair<std::size_t, std::size_t>> pairs;  // co-observed (u < v)
        std::vector<std::pair<std::size_t, std::size_t>> violated;
    };
    std::vector<PerSample> per(ds.samples.size());
    parallel_for(ds.samples.size(), threads, [&](std::size_t i) {
        const Sample& s = ds.samples[i];
        const auto probs = detail::sample_simplexes(s, bound);
        auto& out = per[i];
        for (std::size_t a = 0; a < s.predictions.size(); ++a) {
            for (std::size_t b = 0; b < s.predictions.size(); ++b) {
                if (a == b) continue;
                const auto& pa = s.predictions[a];
                const auto& pb = s.predictions[b];
                if (a < b) out.pairs.emplace_back(pa.expert, pb.expert);
                const Label c = pa.label;
                const Label c2 = pb.label;
                if (c == c2) continue;
                const double lhs = probs[b][c] / probs[a][c];
                const double rhs = probs[b][c2] / probs[a][c2];
                if (lhs >= slack * rhs) {
                    out.violations.push_back({s.id, ds.roster[pa.expert], ds.roster[pb.expert], c, c2, lhs, rhs});
                    out.violated.emplace_back(std::min(pa.expert, pb.expert), std::max(pa.expert, pb.expert));
                }
            }
        }
    });

    std::vector<std::size_t> co(n * n, 0);
    std::vector<bool> bad(n * n, false);
    ViolationScan scan;
    for (auto& p : per) {
        for (auto [u, v] : p.pairs) ++co[u * n + v];
        for (auto [u, v] : p.violated) bad[u * n + v] = true;
        for (auto& r : p.violations) scan.violations.push_back(std::move(r));
    }
    scan.graph = SimilarityGraph(ds.roster);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
            if (co[u * n + v] > 0 && !bad[u * n + v]) scan.graph.add_edge(u, v, 0.0, co[u * n + v]);
        }
    }
    return scan;
}

// ---------------------------------------------------------------------------
// Edge weights

enum class LossKind { ZeroOne, NegLogLikelihood };

struct WeightOptions {
    std::size_t samples = 1000;  // posterior draws per (sample, observer)
    LossKind loss = LossKind::ZeroOne;
    std::size_t threads = 1;
};

/// w(h, h') = sum over both directions of
///   mean loss of the shared-noise counterfactual - mean loss of the independent-noise one,
/// averaged over the training samples on which h and h' were co-observed. The
/// independent-noise counterfactual is the target's own model. Posterior draws
/// for one (sample, observer) come from rng.substream(sample index, observer)
/// and are shared by all of that observer's neighbours.
inline SimilarityGraph compute_edge_weights(const SimilarityGraph& edges, const PanelDataset& ds, const ModelSet& models,
                                            const WeightOptions& options, const Rng& rng) {
    if (options.samples == 0) throw InvalidArgument("weight sample count must be positive");
    const auto bound = detail::bind_models(ds, models);
    // Map dataset roster indices to graph vertex indices.
    std::vector<std::optional<std::size_t>> vertex_of(ds.roster.size());
    for (std::size_t e = 0; e < ds.roster.size(); ++e) {
        auto it = std::lower_bound(edges.vertices().begin(), edges.vertices().end(), ds.roster[e]);
        if (it != edges.vertices().end() && *it == ds.roster[e]) {
            vertex_of[e] = static_cast<std::size_t>(it - edges.vertices().begin());
        }
    }

    struct Contribution {
        std::size_t edge;
        bool forward;  // observer is the edge's u endpoint
        double diff;
    };
    std::vector<std::vector<Contribution>> per(ds.samples.size());
    parallel_for(ds.samples.size(), options.threads, [&](std::size_t i) {
        const Sample& s = ds.samples[i];
        std::vector<std::optional<SimplexDistribution>> probs(s.predictions.size());
        auto prob = [&](std::size_t pos) -> const SimplexDistribution& {
            if (!probs[pos]) probs[pos] = bound[s.predictions[pos].expert]->predict(s.x);
            return *probs[pos];
        };
        for (std::size_t a = 0; a < s.predictions.size(); ++a) {
            const auto va = vertex_of[s.predictions[a].expert];
            if (!va) continue;
            std::vector<std::size_t> target_pos;
            std::vector<std::size_t> target_edge;
            for (std::size_t b = 0; b < s.predictions.size(); ++b) {
                if (b == a) continue;
                const auto vb = vertex_of[s.predictions[b].expert];
                if (!vb) continue;
                if (auto e = edges.find_edge(*va, *vb)) {
                    target_pos.push_back(b);
                    target_edge.push_back(*e);
                }
            }
            if (target_pos.empty()) continue;
            std::vector<const SimplexDistribution*> targets;
            for (auto b : target_pos) targets.push_back(&prob(b));
            Rng stream = rng.substream(i, s.predictions[a].expert);
            const auto counts =
                counterfactual_counts(prob(a), s.predictions[a].label, targets, options.samples, stream);
            for (std::size_t t = 0; t < targets.size(); ++t) {
                const Label truth = s.predictions[target_pos[t]].label;
                double shared_loss, independent_loss;
                if (options.loss == LossKind::ZeroOne) {
                    const Label shared = static_cast<Label>(
                        std::max_element(counts[t].begin(), counts[t].end()) - counts[t].begin());
                    shared_loss = shared == truth ? 0.0 : 1.0;
                    independent_loss = targets[t]->mode() == truth ? 0.0 : 1.0;
                } else {
                    const double freq = static_cast<double>(counts[t][truth]) / static_cast<double>(options.samples);
                    shared_loss = -std::log(std::max(freq, kProbabilityFloor));
                    independent_loss = -targets[t]->log_probs()[truth];
                }
                const GraphEdge& edge = edges.edges()[target_edge[t]];
                per[i].push_back({target_edge[t], edge.u == *va, shared_loss - independent_loss});
            }
        }
    });

    std::vector<double> sum_fwd(edges.num_edges(), 0.0), sum_bwd(edges.num_edges(), 0.0);
    std::vector<std::size_t> n_fwd(edges.num_edges(), 0), n_bwd(edges.num_edges(), 0);
    for (const auto& contributions : per) {
        for (const auto& c : contributions) {
            if (c.forward) {
                sum_fwd[c.edge] += c.diff;
                ++n_fwd[c.edge];
            } else {
                sum_bwd[c.edge] += c.diff;
                ++n_bwd[c.edge];
            }
        }
    }
    SimilarityGraph out(edges.vertices());
    for (std::size_t e = 0; e < edges.num_edges(); ++e) {
        const auto& edge = edges.edges()[e];
        if (n_fwd[e] == 0 || n_bwd[e] == 0) {
            throw InvalidEdge("edge {" + edges.vertices()[edge.u] + ", " + edges.vertices()[edge.v] +
                              "} has no co-observations in the dataset");
        }
        const double w = sum_fwd[e] / static_cast<double>(n_fwd[e]) + sum_bwd[e] / static_cast<double>(n_bwd[e]);
        out.add_edge(edge.u, edge.v, w, edge.co_observations);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Clique partitioning

/// Sum of within-group edge weights; throws NotACliqueCover when a group
/// contains a pair without an edge.
inline double objective(const Partition& partition, const SimilarityGraph& graph) {
    if (partition.num_experts() != graph.num_vertices()) {
        throw InvalidArgument("partition does not cover the graph's vertices");
    }
    double total = 0.0;
    for (const auto& group : partition.groups()) {
        std::vector<std::size_t> idx;
        for (const auto& e : group) idx.push_back(graph.vertex_index(e));
        for (std::size_t a = 0; a < idx.size(); ++a) {
            for (std::size_t b = a + 1; b < idx.size(); ++b) {
                auto edge = graph.find_edge(idx[a], idx[b]);
                if (!edge) {
                    throw NotACliqueCover("'" + group[a] + "' and '" + group[b] + "' share a group but have no edge");
                }
                total += graph.edges()[*edge].weight;
            }
        }
    }
    return total;
}

/// Randomized greedy clique cover: start a clique at a random remaining
/// vertex, repeatedly add the candidate (adjacent to every member) with the
/// smallest summed weight to the clique while that sum is <= 0, then remove
/// the clique and repeat. Equal sums go to the smallest expert id.
inline Partition greedy_partition(const SimilarityGraph& graph, Rng rng) {
    const std::size_t n = graph.num_vertices();
    std::vector<bool> removed(n, false);
    std::vector<std::size_t> remaining(n);
    std::iota(remaining.begin(), remaining.end(), 0);

    // candidate_sum is meaningful only where in_candidates holds.
    std::vector<double> candidate_sum(n, 0.0);
    std::vector<bool> in_candidates(n, false);
    std::vector<bool> adjacent_to_new(n, false);
    std::vector<std::vector<ExpertId>> groups;

    while (!remaining.empty()) {
        const std::size_t start = remaining[rng.uniform_index(remaining.size())];
        std::vector<std::size_t> clique{start};
        std::vector<std::size_t> candidates;
        for (auto [nb, e] : graph.neighbors(start)) {
            if (removed[nb]) continue;
            candidates.push_back(nb);
            in_candidates[nb] = true;
            candidate_sum[nb] = graph.edges()[e].weight;
        }
        while (!candidates.empty()) {
            std::size_t best = candidates.front();
            for (auto c : candidates) {
                if (candidate_sum[c] < candidate_sum[best] || (candidate_sum[c] == candidate_sum[best] && c < best)) {
                    best = c;
                }
            }
            if (candidate_sum[best] > 0.0) break;
            clique.push_back(best);
            in_candidates[best] = false;
            // Keep candidates adjacent to the new member, adding that edge's weight.
            for (auto [nb, e] : graph.neighbors(best)) {
                if (in_candidates[nb]) {
                    adjacent_to_new[nb] = true;
                    candidate_sum[nb] += graph.edges()[e].weight;
                }
            }
            std::vector<std::size_t> kept;
            for (auto c : candidates) {
                if (c == best) continue;
                if (adjacent_to_new[c]) {
                    kept.push_back(c);
                    adjacent_to_new[c] = false;
                } else {
                    in_candidates[c] = false;
                }
            }
            candidates = std::move(kept);
        }
        for (auto c : candidates) in_candidates[c] = false;

        std::vector<ExpertId> group;
        for (auto v : clique) {
            removed[v] = true;
            group.push_back(graph.vertices()[v]);
        }
        groups.push_back(std::move(group));
        std::erase_if(remaining, [&](std::size_t v) { return removed[v]; });
    }
    return Partition(std::move(groups));
}

/// Best of `restarts` greedy runs by objective; run r uses rng.substream("restart", r)
/// and the earliest run wins ties.
inline Partition partition_with_restarts(const SimilarityGraph& graph, std::size_t restarts, const Rng& rng) {
    if (restarts == 0) throw InvalidArgument("restart count must be at least one");
    std::optional<Partition> best;
    double best_value = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < restarts; ++r) {
        Partition p = greedy_partition(graph, rng.substream("restart", r));
        const double value = objective(p, graph);
        if (!best || value < best_value) {
            best = std::move(p);
            best_value = value;
        }
    }
    return *best;
}

inline constexpr std::size_t kBruteForceMaxVertices = 12;

/// Exact minimum-weight clique cover by enumerating set partitions in
/// restricted-growth order; the first minimizer in that order is returned.
inline Partition brute_force_partition(const SimilarityGraph& graph) {
    const std::size_t n = graph.num_vertices();
    if (n > kBruteForceMaxVertices) {
        throw TooLarge("exhaustive partitioning supports at most " + std::to_string(kBruteForceMaxVertices) +
                       " vertices");
    }
    if (n == 0) return Partition{};

    std::vector<double> w(n * n, 0.0);
    std::vector<bool> adj(n * n, false);
    for (const auto& e : graph.edges()) {
        w[e.u * n + e.v] = w[e.v * n + e.u] = e.weight;
        adj[e.u * n + e.v] = adj[e.v * n + e.u] = true;
    }

    std::vector<std::vector<std::size_t>> groups;
    std::vector<std::vector<std::size_t>> best_groups;
    double best = std::numeric_limits<double>::infinity();

    auto recurse = [&](auto&& self, std::size_t v, double value) -> void {
        if (v == n) {
            if (value < best) {
                best = value;
                best_groups = groups;
            }
            return;
        }
        for (std::size_t g = 0; g < groups.size(); ++g) {
            double delta = 0.0;
            bool clique = true;
            for (auto m : groups[g]) {
                if (!adj[v * n + m]) {
                    clique = false;
                    break;
                }
                delta += w[v * n + m];
            }
            if (!clique) continue;
            groups[g].push_back(v);
            self(self, v + 1, value + delta);
            groups[g].pop_back();
        }
        groups.push_back({v});
        self(self, v + 1, value);
        groups.pop_back();
    };
    recurse(recurse, 0, 0.0);

    std::vector<std::vector<ExpertId>> named;
    for (const auto& g : best_groups) {
        std::vector<ExpertId> ids;
        for (auto v : g) ids.push_back(graph.vertices()[v]);
        named.push_back(std::move(ids));
    }
    return Partition(std::move(named));
}

// ---------------------------------------------------------------------------
// Serialization

/// JSON list of groups: sorted ids, groups ordered by smallest member.
inline json partition_to_json(const Partition& p) { return p.groups(); }

inline Partition partition_from_json(const json& doc) {
    try {
        return Partition(doc.get<std::vector<std::vector<ExpertId>>>());
    } catch (const json::exception& e) {
        throw SchemaError(std::string("partition must be a list of lists of expert ids: ") + e.what());
    }
}

inline void save_partition(const Partition& p, const std::filesystem::path& path) {
    write_json(path, partition_to_json(p));
}

inline Partition load_partition(const std::filesystem::path& path) { return partition_from_json(read_json(path)); }

inline std::string violations_csv(const std::vector<ViolationRecord>& violations) {
    std::string out = "sample_id,source,target,source_label,target_label,ratio_lhs,ratio_rhs\n";
    for (const auto& v : violations) {
        out += csv_field(v.sample_id) + ',' + csv_field(v.source) + ',' + csv_field(v.target) + ',' +
               std::to_string(v.source_label) + ',' + std::to_string(v.target_label) + ',' +
               format_double(v.ratio_lhs) + ',' + format_double(v.ratio_rhs) + '\n';
    }
    return out;
}

inline json graph_to_json(const SimilarityGraph& g) {
    json edges = json::array();
    for (const auto& e : g.edges()) {
        edges.push_back({{"u", g.vertices()[e.u]},
                         {"v", g.vertices()[e.v]},
                         {"weight", e.weight},
                         {"co_observations", e.co_observations}});
    }
    return {{"vertices", g.vertices()}, {"edges", std::move(edges)}};
}

}  // namespace siscm
