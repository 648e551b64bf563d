#pragma once

// Scoring second-opinion predictors on held-out panels, plus partition
// comparison metrics (ARI, edge ratio).

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "siscm/dataset.hpp"
#include "siscm/errors.hpp"
#include "siscm/io.hpp"
#include "siscm/models.hpp"
#include "siscm/parallel.hpp"
#include "siscm/partitioning.hpp"
#include "siscm/random.hpp"
#include "siscm/scm.hpp"

namespace siscm {

/// Observed Y_h = observed on features x; infer Y_h' for every target.
struct PairQuery {
    std::span<const double> x;
    ExpertId observer;
    Label observed;
    std::vector<ExpertId> targets;
};

class Predictor {
public:
    virtual ~Predictor() = default;
    /// One label per query target, in order.
    virtual std::vector<Label> predict(const PairQuery& query, Rng& rng) const = 0;
};

/// Most likely label under the counterfactual distribution of a Gumbel-Max
/// SI-SCM. Same-group targets share the T posterior draws of one call.
class SiScmPredictor final : public Predictor {
public:
    SiScmPredictor(ModelSet models, Partition partition, std::size_t samples)
        : models_(std::move(models)), partition_(std::move(partition)), samples_(samples) {
        if (samples_ == 0) throw InvalidArgument("counterfactual sample count must be positive");
    }

    std::vector<Label> predict(const PairQuery& q, Rng& rng) const override {
        std::vector<Label> out(q.targets.size());
        const std::size_t group = partition_.group_of(q.observer);
        std::vector<SimplexDistribution> same;
        std::vector<std::size_t> same_pos;
        for (std::size_t t = 0; t < q.targets.size(); ++t) {
            SimplexDistribution p = require_model(models_, q.targets[t]).predict(q.x);
            if (partition_.group_of(q.targets[t]) == group) {
                same.push_back(std::move(p));
                same_pos.push_back(t);
            } else {
                out[t] = p.mode();
            }
        }
        if (same.empty()) return out;
        const SimplexDistribution source = require_model(models_, q.observer).predict(q.x);
        std::vector<const SimplexDistribution*> targets;
        for (const auto& p : same) targets.push_back(&p);
        const auto counts = counterfactual_counts(source, q.observed, targets, samples_, rng);
        for (std::size_t i = 0; i < same_pos.size(); ++i) {
            std::vector<double> freq(counts[i].begin(), counts[i].end());
            out[same_pos[i]] = argmax(freq);
        }
        return out;
    }

private:
    ModelSet models_;
    Partition partition_;
    std::size_t samples_;
};

/// Target model argmax, ignoring the observation.
class ModelArgmaxPredictor final : public Predictor {
public:
    explicit ModelArgmaxPredictor(ModelSet models) : models_(std::move(models)) {}

    std::vector<Label> predict(const PairQuery& q, Rng&) const override {
        std::vector<Label> out;
        require_model(models_, q.observer);
        for (const auto& t : q.targets) out.push_back(baseline_gnb_argmax(require_model(models_, t), q.x));
        return out;
    }

private:
    ModelSet models_;
};

/// Argmax of the product of the target model and the target's CNB row for the observer.
class GnbCnbPredictor final : public Predictor {
public:
    GnbCnbPredictor(ModelSet models, CnbSet cnb) : models_(std::move(models)), cnb_(std::move(cnb)) {}

    std::vector<Label> predict(const PairQuery& q, Rng&) const override {
        std::vector<Label> out;
        require_model(models_, q.observer);
        for (const auto& t : q.targets) {
            auto it = cnb_.find(t);
            if (it == cnb_.end()) throw MissingExpert(t);
            out.push_back(baseline_gnb_cnb_argmax(require_model(models_, t), it->second, q.observer, q.x, q.observed));
        }
        return out;
    }

private:
    ModelSet models_;
    CnbSet cnb_;
};

/// Wraps a callable; handy for oracles in tests.
class FunctionPredictor final : public Predictor {
public:
    using Fn = std::function<std::vector<Label>(const PairQuery&, Rng&)>;
    explicit FunctionPredictor(Fn fn) : fn_(std::move(fn)) {}
    std::vector<Label> predict(const PairQuery& q, Rng& rng) const override { return fn_(q, rng); }

private:
    Fn fn_;
};

// ---------------------------------------------------------------------------
// Report

struct Tally {
    std::size_t n = 0;
    std::size_t correct = 0;

    std::optional<double> accuracy() const {
        if (n == 0) return std::nullopt;
        return static_cast<double>(correct) / static_cast<double>(n);
    }
    void add(bool hit) {
        ++n;
        correct += hit ? 1 : 0;
    }
};

enum Scenario : std::size_t { kAllPairs = 0, kSameGroup = 1, kCrossGroup = 2 };
inline constexpr std::array<const char*, 3> kScenarioNames = {"all_pairs", "same_group", "cross_group"};

struct EvalReport {
    std::size_t k = 0;
    std::vector<std::string> label_names;
    std::array<Tally, 3> scenarios;
    /// Per target expert h', per scenario.
    std::map<ExpertId, std::array<Tally, 3>> per_expert;
    std::vector<std::vector<std::size_t>> confusion;  // [true label][predicted label]

    std::size_t n_predictions() const { return scenarios[kAllPairs].n; }
    std::optional<double> overall_accuracy() const { return scenarios[kAllPairs].accuracy(); }
    std::optional<double> scenario_accuracy(Scenario s) const { return scenarios[s].accuracy(); }
    std::optional<double> zero_one_loss() const {
        auto a = overall_accuracy();
        if (!a) return std::nullopt;
        return 1.0 - *a;
    }
};

struct EvalOptions {
    std::size_t threads = 1;
    Rng rng{0};
};

/// Each sample's predictions, in turn, serve as the observation; every other
/// prediction on that sample is inferred and scored. Observation (i, h) draws
/// from options.rng.substream(i, h).
inline EvalReport evaluate(const PanelDataset& test, const Predictor& predictor, const Partition& partition,
                           const EvalOptions& options = {}) {
    for (const auto& e : test.roster) {
        if (!partition.contains(e)) throw MissingExpert(e);
    }
    struct Record {
        std::size_t target;  // roster index
        Label truth;
        Label predicted;
        bool same_group;
    };
    std::vector<std::vector<Record>> per(test.samples.size());
    parallel_for(test.samples.size(), options.threads, [&](std::size_t i) {
        const Sample& s = test.samples[i];
        for (std::size_t a = 0; a < s.predictions.size(); ++a) {
            if (s.predictions.size() < 2) break;
            PairQuery q{s.x, test.roster[s.predictions[a].expert], s.predictions[a].label, {}};
            std::vector<std::size_t> target_pos;
            for (std::size_t b = 0; b < s.predictions.size(); ++b) {
                if (b == a) continue;
                q.targets.push_back(test.roster[s.predictions[b].expert]);
                target_pos.push_back(b);
            }
            Rng stream = options.rng.substream(i, s.predictions[a].expert);
            const auto labels = predictor.predict(q, stream);
            if (labels.size() != q.targets.size()) throw Error("predictor returned the wrong number of labels");
            for (std::size_t t = 0; t < labels.size(); ++t) {
                if (labels[t] >= test.k) throw Error("predictor returned a label outside [0, k)");
                const auto& truth = s.predictions[target_pos[t]];
                per[i].push_back({truth.expert, truth.label, labels[t], partition.same_group(q.observer, q.targets[t])});
            }
        }
    });

    EvalReport report;
    report.k = test.k;
    report.label_names = test.label_names;
    report.confusion.assign(test.k, std::vector<std::size_t>(test.k, 0));
    for (const auto& e : test.roster) report.per_expert[e];
    for (const auto& records : per) {
        for (const auto& r : records) {
            const bool hit = r.truth == r.predicted;
            const Scenario scenario = r.same_group ? kSameGroup : kCrossGroup;
            report.scenarios[kAllPairs].add(hit);
            report.scenarios[scenario].add(hit);
            auto& tallies = report.per_expert[test.roster[r.target]];
            tallies[kAllPairs].add(hit);
            tallies[scenario].add(hit);
            ++report.confusion[r.truth][r.predicted];
        }
    }
    return report;
}

namespace detail {
inline json optional_number(std::optional<double> v) { return v ? json(*v) : json(nullptr); }
}  // namespace detail

inline json report_to_json(const EvalReport& r) {
    json scen = json::object();
    json counts = json::object();
    for (std::size_t s = 0; s < 3; ++s) {
        scen[kScenarioNames[s]] = detail::optional_number(r.scenarios[s].accuracy());
        counts[kScenarioNames[s]] = r.scenarios[s].n;
    }
    json experts = json::object();
    for (const auto& [e, t] : r.per_expert) {
        json row = json::object();
        for (std::size_t s = 0; s < 3; ++s) {
            row[kScenarioNames[s]] = {{"n", t[s].n}, {"accuracy", detail::optional_number(t[s].accuracy())}};
        }
        experts[e] = std::move(row);
    }
    return {{"overall_accuracy", detail::optional_number(r.overall_accuracy())},
            {"scenario_accuracies", std::move(scen)},
            {"scenario_counts", std::move(counts)},
            {"per_expert_accuracy", std::move(experts)},
            {"confusion_matrix", r.confusion},
            {"label_names", r.label_names},
            {"n_predictions", r.n_predictions()}};
}

/// k x k grid, rows = true label, columns = predicted label.
inline std::string confusion_csv(const EvalReport& r) {
    std::string out = "true\\predicted";
    for (const auto& name : r.label_names) out += ',' + csv_field(name);
    out += '\n';
    for (std::size_t t = 0; t < r.k; ++t) {
        out += csv_field(r.label_names[t]);
        for (std::size_t p = 0; p < r.k; ++p) out += ',' + std::to_string(r.confusion[t][p]);
        out += '\n';
    }
    return out;
}

/// expert_id,n,accuracy over all pairs; accuracy left empty when n == 0.
inline std::string per_expert_csv(const EvalReport& r) {
    std::string out = "expert_id,n,accuracy\n";
    for (const auto& [e, t] : r.per_expert) {
        const auto acc = t[kAllPairs].accuracy();
        out += csv_field(e) + ',' + std::to_string(t[kAllPairs].n) + ',' + (acc ? format_double(*acc) : "") + '\n';
    }
    return out;
}

inline void write_report(const EvalReport& r, const std::filesystem::path& dir) {
    write_json(dir / "report.json", report_to_json(r));
    write_text(dir / "confusion_matrix.csv", confusion_csv(r));
    write_text(dir / "per_expert_accuracy.csv", per_expert_csv(r));
}

// ---------------------------------------------------------------------------
// Metrics

/// Adjusted Rand index from the pair-counting contingency table. Identical
/// trivial partitions (all singletons or one block) score 1.
inline double adjusted_rand_index(const Partition& p1, const Partition& p2) {
    const auto experts = p1.experts();
    if (experts != p2.experts()) throw InvalidArgument("ARI needs partitions of the same expert set");
    const double n = static_cast<double>(experts.size());
    std::map<std::pair<std::size_t, std::size_t>, double> cells;
    std::vector<double> rows(p1.num_groups(), 0.0), cols(p2.num_groups(), 0.0);
    for (const auto& e : experts) {
        const auto a = p1.group_of(e);
        const auto b = p2.group_of(e);
        cells[{a, b}] += 1.0;
        rows[a] += 1.0;
        cols[b] += 1.0;
    }
    auto comb2 = [](double x) { return 0.5 * x * (x - 1.0); };
    double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [key, v] : cells) index += comb2(v);
    for (double v : rows) sum_rows += comb2(v);
    for (double v : cols) sum_cols += comb2(v);
    const double total = comb2(n);
    if (total == 0.0) return 1.0;
    const double expected = sum_rows * sum_cols / total;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

struct EdgeRatio {
    double value = 0.0;
    bool empty_graph = false;  // no edges: value reported as 0
};

/// Fraction of graph edges whose endpoints share a group of `truth`.
inline EdgeRatio edge_ratio(const SimilarityGraph& graph, const Partition& truth) {
    if (graph.num_edges() == 0) return {0.0, true};
    std::size_t within = 0;
    for (const auto& e : graph.edges()) {
        if (truth.same_group(graph.vertices()[e.u], graph.vertices()[e.v])) ++within;
    }
    return {static_cast<double>(within) / static_cast<double>(graph.num_edges()), false};
}

/// Fraction of (predicted, true) pairs that differ.
inline double zero_one_loss(std::span<const std::pair<Label, Label>> predictions) {
    if (predictions.empty()) throw InvalidArgument("zero-one loss of an empty prediction list");
    std::size_t wrong = 0;
    for (const auto& [pred, truth] : predictions) wrong += pred != truth ? 1 : 0;
    return static_cast<double>(wrong) / static_cast<double>(predictions.size());
}

}  // namespace siscm
