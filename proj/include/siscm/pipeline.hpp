#pragma once

// End-to-end stages composed from the modules: fitting expert models on a
// panel, learning the partition, and one cell of the synthetic benchmark.

#include <memory>
#include <string>
#include <vector>

#include "siscm/dataset.hpp"
#include "siscm/evaluation.hpp"
#include "siscm/models.hpp"
#include "siscm/partitioning.hpp"
#include "siscm/random.hpp"
#include "siscm/synthetic.hpp"

namespace siscm {

/// One GNB per roster expert, fitted on that expert's own predictions.
inline ModelSet train_expert_models(const PanelDataset& ds, const GnbOptions& options = {}, std::size_t threads = 1) {
    std::vector<std::shared_ptr<const ConditionalModel>> fitted(ds.roster.size());
    parallel_for(ds.roster.size(), threads, [&](std::size_t e) {
        std::vector<LabeledFeatures> points;
        for (const auto& s : ds.samples) {
            if (auto label = s.label_of(e)) points.push_back({s.x, *label});
        }
        if (points.empty()) throw InsufficientData("expert '" + ds.roster[e] + "' has no training predictions");
        try {
            fitted[e] = std::make_shared<GnbModel>(train_gnb(points, ds.k, options));
        } catch (const InsufficientData& err) {
            throw InsufficientData("expert '" + ds.roster[e] + "': " + err.what());
        }
    });
    ModelSet models;
    for (std::size_t e = 0; e < ds.roster.size(); ++e) models.emplace(ds.roster[e], fitted[e]);
    return models;
}

/// CNB tables for every roster expert as target, from pairwise co-occurrence counts.
/// The "absent" row of a (source, target) table is the target's label count
/// on samples the source did not label.
inline CnbSet build_cnb_models(const PanelDataset& ds, double alpha = 1.0) {
    const std::size_t n = ds.roster.size();
    const std::size_t k = ds.k;
    std::vector<std::vector<double>> marginal(n, std::vector<double>(k, 0.0));
    for (const auto& s : ds.samples) {
        for (const auto& p : s.predictions) marginal[p.expert][p.label] += 1.0;
    }
    std::vector<CnbModel> models;
    models.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        models.emplace_back(k, alpha);
        models.back().absent_fallback() = marginal[t];
    }
    for (const auto& s : ds.samples) {
        for (const auto& target : s.predictions) {
            for (const auto& source : s.predictions) {
                if (source.expert == target.expert) continue;
                models[target.expert].table(ds.roster[source.expert])[source.label * k + target.label] += 1.0;
            }
        }
    }
    CnbSet out;
    for (std::size_t t = 0; t < n; ++t) {
        for (auto& entry : models[t].tables()) {
            auto& table = entry.second;
            for (std::size_t c = 0; c < k; ++c) {
                double co = 0.0;
                for (std::size_t r = 0; r < k; ++r) co += table[r * k + c];
                table[k * k + c] = marginal[t][c] - co;
            }
        }
        out.emplace(ds.roster[t], std::move(models[t]));
    }
    return out;
}

struct PartitionOptions {
    double slack = 1.0;
    WeightOptions weights;
    std::size_t restarts = 10;
};

struct LearnedPartition {
    ViolationScan scan;
    SimilarityGraph graph;  // weighted
    Partition partition;
};

inline LearnedPartition learn_partition(const PanelDataset& train, const ModelSet& models,
                                        const PartitionOptions& options, const Rng& rng) {
    LearnedPartition out;
    out.scan = detect_violations(train, models, options.slack, options.weights.threads);
    out.graph = compute_edge_weights(out.scan.graph, train, models, options.weights, rng.substream("weights"));
    out.partition = partition_with_restarts(out.graph, options.restarts, rng.substream("partition"));
    return out;
}

struct BenchCellResult {
    std::size_t m = 0;
    double s = 0.0;
    std::size_t replicate = 0;
    double ari = 0.0;
    double edge_ratio = 0.0;
    double loss_recovered = 0.0;
    double loss_truth = 0.0;
    double loss_independent = 0.0;
    std::size_t n_violations = 0;
    std::size_t n_edges = 0;
};

struct BenchOptions {
    SyntheticConfig synth;  // n_train and sparsity are overridden per cell
    PartitionOptions partition;
    std::size_t cf_samples = 500;
    bool fit_gnb = false;
    std::size_t threads = 1;
};

/// Synthesize, learn the partition and score held-out counterfactual losses
/// for the recovered partition, the planted one and independent noise.
inline BenchCellResult run_bench_cell(const BenchOptions& options, std::size_t m, double s, std::size_t replicate,
                                      std::uint64_t seed) {
    const Rng root = Rng(seed).substream("bench", m, static_cast<std::uint64_t>(std::llround(s * 1e6)), replicate);
    SyntheticConfig cfg = options.synth;
    cfg.n_train = m;
    cfg.sparsity = s;
    cfg.seed = root.substream("synth").seed();
    const SyntheticPanel panel = generate_synthetic(cfg);

    const ModelSet models = options.fit_gnb ? train_expert_models(panel.train, {}, options.threads) : panel.models();
    PartitionOptions popts = options.partition;
    popts.weights.threads = options.threads;
    const LearnedPartition learned = learn_partition(panel.train, models, popts, root.substream("learn"));

    EvalOptions eval;
    eval.threads = options.threads;
    eval.rng = root.substream("eval");
    const ModelSet truth_models = panel.models();
    const Partition independent = Partition::singletons(panel.test.roster);
    auto loss = [&](const Predictor& p, const Partition& scenarios) {
        return evaluate(panel.test, p, scenarios, eval).zero_one_loss().value_or(0.0);
    };

    BenchCellResult r;
    r.m = m;
    r.s = s;
    r.replicate = replicate;
    r.ari = adjusted_rand_index(learned.partition, panel.truth);
    r.edge_ratio = edge_ratio(learned.scan.graph, panel.truth).value;
    r.loss_recovered = loss(SiScmPredictor(models, learned.partition, options.cf_samples), learned.partition);
    r.loss_truth = loss(SiScmPredictor(truth_models, panel.truth, options.cf_samples), panel.truth);
    r.loss_independent = loss(ModelArgmaxPredictor(models), independent);
    r.n_violations = learned.scan.violations.size();
    r.n_edges = learned.scan.graph.num_edges();
    return r;
}

inline std::string bench_csv_header() {
    return "m,s,replicate,ari,edge_ratio,loss_recovered,loss_truth,loss_independent\n";
}

inline std::string bench_csv_row(const BenchCellResult& r) {
    return std::to_string(r.m) + ',' + format_double(r.s) + ',' + std::to_string(r.replicate) + ',' +
           format_double(r.ari) + ',' + format_double(r.edge_ratio) + ',' + format_double(r.loss_recovered) + ',' +
           format_double(r.loss_truth) + ',' + format_double(r.loss_independent) + '\n';
}

}  // namespace siscm
