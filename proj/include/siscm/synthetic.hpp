#pragma once

// Synthetic expert panels: features and logit weights uniform on [0, 1],
// labels drawn jointly from the Gumbel-Max SCM under a planted partition.

#include <cstdio>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "siscm/dataset.hpp"
#include "siscm/models.hpp"
#include "siscm/random.hpp"
#include "siscm/scm.hpp"

namespace siscm {

struct SyntheticConfig {
    std::size_t n_experts = 48;
    std::vector<std::size_t> group_sizes = {6, 7, 11, 11, 13};
    std::size_t k = 5;
    std::size_t d = 20;
    std::size_t n_train = 1000;
    std::size_t n_test = 1000;
    double sparsity = 0.5;
    /// Sparsity of the held-out panel; unset keeps it fully observed.
    std::optional<double> test_sparsity;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_experts < 2) throw InvalidArgument("need at least two experts");
        if (group_sizes.empty()) throw InvalidArgument("need at least one group");
        for (auto g : group_sizes) {
            if (g == 0) throw InvalidArgument("group sizes must be positive");
        }
        if (std::accumulate(group_sizes.begin(), group_sizes.end(), std::size_t{0}) != n_experts) {
            throw InvalidArgument("group sizes must sum to the number of experts");
        }
        if (k == 0 || d == 0) throw InvalidArgument("k and d must be positive");
        if (n_train == 0 || n_test == 0) throw InvalidArgument("train and test sizes must be positive");
        if (!(sparsity > 0.0 && sparsity < 1.0)) throw InvalidArgument("sparsity must lie in (0, 1)");
        if (test_sparsity && !(*test_sparsity > 0.0 && *test_sparsity < 1.0)) {
            throw InvalidArgument("test sparsity must lie in (0, 1)");
        }
    }
};

struct SyntheticPanel {
    PanelDataset train;
    PanelDataset test;
    Partition truth;
    std::map<ExpertId, std::shared_ptr<const LogitModel>> logit_models;

    ModelSet models() const { return ModelSet(logit_models.begin(), logit_models.end()); }
};

/// Zero-padded ids ("h00" ... "h47") so lexicographic order is numeric order.
inline std::vector<ExpertId> synthetic_expert_ids(std::size_t n) {
    const int width = static_cast<int>(std::to_string(n - 1).size());
    std::vector<ExpertId> ids;
    for (std::size_t i = 0; i < n; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "h%0*zu", width, i);
        ids.emplace_back(buf);
    }
    return ids;
}

namespace detail {

inline PanelDataset draw_panel(const SyntheticConfig& cfg, const std::vector<ExpertId>& ids, const Partition& truth,
                               const ModelSet& models, std::size_t n, const Rng& rng, const std::string& prefix) {
    PanelDataset ds;
    ds.k = cfg.k;
    ds.d = cfg.d;
    ds.label_names = default_label_names(cfg.k);
    ds.roster = ids;
    ds.samples.reserve(n);
    const int width = static_cast<int>(std::to_string(n > 0 ? n - 1 : 0).size());
    for (std::size_t i = 0; i < n; ++i) {
        Rng feature_stream = rng.substream("x", i);
        Rng noise_stream = rng.substream("noise", i);
        Sample s;
        char buf[48];
        std::snprintf(buf, sizeof buf, "%s%0*zu", prefix.c_str(), width, i);
        s.id = buf;
        s.x.resize(cfg.d);
        for (double& v : s.x) v = feature_stream.uniform_open();
        const auto labels = sample_joint(s.x, ids, truth, models, noise_stream);
        for (std::size_t e = 0; e < ids.size(); ++e) s.predictions.push_back({e, labels.at(ids[e])});
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace detail

inline SyntheticPanel generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    const Rng root = Rng(cfg.seed).substream("synth");
    const auto ids = synthetic_expert_ids(cfg.n_experts);

    SyntheticPanel out;
    std::vector<std::vector<ExpertId>> groups;
    std::size_t next = 0;
    for (auto size : cfg.group_sizes) {
        groups.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(next),
                            ids.begin() + static_cast<std::ptrdiff_t>(next + size));
        next += size;
    }
    out.truth = Partition(std::move(groups));

    for (std::size_t e = 0; e < ids.size(); ++e) {
        Rng stream = root.substream("weights", e);
        std::vector<std::vector<double>> w(cfg.k, std::vector<double>(cfg.d));
        for (auto& row : w) {
            for (double& v : row) v = stream.uniform_open();
        }
        out.logit_models.emplace(ids[e], std::make_shared<LogitModel>(std::move(w)));
    }
    const ModelSet models = out.models();

    out.train = apply_sparsity(
        detail::draw_panel(cfg, ids, out.truth, models, cfg.n_train, root.substream("train"), "train-"), cfg.sparsity,
        root.substream("train", "sparsity"));
    out.test = detail::draw_panel(cfg, ids, out.truth, models, cfg.n_test, root.substream("test"), "test-");
    if (cfg.test_sparsity) out.test = apply_sparsity(out.test, *cfg.test_sparsity, root.substream("test", "sparsity"));
    return out;
}

}  // namespace siscm
