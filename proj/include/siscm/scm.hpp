#pragma once

// Gumbel-Max set-invariant SCM over expert predictions.
//
// Each expert h predicts argmax_c { log P(Y_h = c | x) + U_{psi(h), c} },
// where experts of one group psi share the group's Gumbel noise vector.
// Counterfactuals condition that noise on an observed prediction by one
// expert and replay it through another expert's mechanism.

#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "siscm/errors.hpp"
#include "siscm/models.hpp"
#include "siscm/random.hpp"
#include "siscm/types.hpp"

namespace siscm {

inline GumbelVector sample_prior_noise(std::size_t k, Rng& rng) {
    if (k == 0) throw InvalidArgument("noise dimension must be positive");
    GumbelVector u;
    u.values.resize(k);
    for (double& v : u.values) v = sample_gumbel(rng);
    return u;
}

/// argmax of log_probs + noise, lowest index on ties.
inline Label mechanism(std::span<const double> log_probs, std::span<const double> noise) {
    if (log_probs.size() != noise.size() || log_probs.empty()) {
        throw InvalidArgument("mechanism needs log-probabilities and noise of equal positive length");
    }
    Label best = 0;
    double best_value = log_probs[0] + noise[0];
    for (std::size_t c = 1; c < log_probs.size(); ++c) {
        const double v = log_probs[c] + noise[c];
        if (v > best_value) {
            best_value = v;
            best = c;
        }
    }
    return best;
}

inline Label mechanism(std::span<const double> log_probs, const GumbelVector& noise) {
    return mechanism(log_probs, std::span<const double>(noise.values));
}

/// Noise realizations keyed by group id of a Partition.
using GroupNoise = std::map<std::size_t, GumbelVector>;

/// Evaluates the joint mechanism for the experts in `experts` under fixed group noise.
inline std::map<ExpertId, Label> sample_joint_with_noise(std::span<const double> x, std::span<const ExpertId> experts,
                                                         const Partition& partition, const ModelSet& models,
                                                         const GroupNoise& noise) {
    if (experts.empty()) throw InvalidArgument("joint sampling needs at least one expert");
    std::map<ExpertId, Label> out;
    for (const auto& h : experts) {
        const std::size_t g = partition.group_of(h);
        const SimplexDistribution p = require_model(models, h).predict(x);
        auto it = noise.find(g);
        if (it == noise.end()) throw InvalidArgument("no noise realization for the group of '" + h + "'");
        out[h] = mechanism(p.log_probs(), it->second);
    }
    return out;
}

/// One joint draw of Y_zeta. Each group's noise comes from a substream keyed
/// by its group id, so equal rng states give equal noise for every group in
/// any subset of experts.
inline std::map<ExpertId, Label> sample_joint(std::span<const double> x, std::span<const ExpertId> experts,
                                              const Partition& partition, const ModelSet& models, Rng& rng) {
    if (experts.empty()) throw InvalidArgument("joint sampling needs at least one expert");
    const Rng draw(rng.next_u64());
    GroupNoise noise;
    for (const auto& h : experts) {
        const std::size_t g = partition.group_of(h);
        if (noise.count(g) != 0) continue;
        Rng stream = draw.substream(g);
        noise.emplace(g, sample_prior_noise(require_model(models, h).num_labels(), stream));
    }
    return sample_joint_with_noise(x, experts, partition, models, noise);
}

/// Exact draw of the Gumbel noise conditioned on mechanism(log_probs, u) == observed,
/// by top-down truncated-Gumbel sampling: the maximum of the perturbed potentials
/// is Gumbel(logsumexp) and sits at the observed class; every other perturbed
/// potential is Gumbel(phi_c) truncated below that maximum.
inline GumbelVector sample_posterior_noise(std::span<const double> log_probs, Label observed, Rng& rng) {
    const std::size_t k = log_probs.size();
    if (k == 0) throw InvalidArgument("noise dimension must be positive");
    if (observed >= k) throw InvalidArgument("observed label outside [0, k)");
    if (std::abs(logsumexp(log_probs)) > kNormalizationTolerance) {
        throw InvalidArgument("log-probabilities are not normalized");
    }
    GumbelVector u;
    u.values.resize(k);
    for (;;) {
        const double top = sample_gumbel(rng);
        for (std::size_t c = 0; c < k; ++c) {
            const double perturbed = c == observed ? top : sample_truncated_gumbel(log_probs[c], top, rng);
            u.values[c] = perturbed - log_probs[c];
        }
        // Rounding can tie a truncated draw with the maximum; those draws are redone.
        if (mechanism(log_probs, u) == observed) return u;
    }
}

struct CounterfactualQuery {
    std::vector<double> features;
    ExpertId observed_expert;
    Label observed_label = 0;
    ExpertId target_expert;
};

/// Counterfactual label distribution. Monte-Carlo estimates keep raw
/// frequencies (multiples of 1/T, zeros included); no probability floor.
struct CounterfactualEstimate {
    std::vector<double> dist;
    std::size_t num_samples = 0;
    bool exact = false;
};

/// Shared-noise counterfactual label counts for several targets.
///
/// Draws T posterior noise vectors given the observer's prediction and, for
/// each target, counts how often each label wins. Targets share the draws.
inline std::vector<std::vector<std::size_t>> counterfactual_counts(const SimplexDistribution& observer,
                                                                   Label observed,
                                                                   std::span<const SimplexDistribution* const> targets,
                                                                   std::size_t T, Rng& rng) {
    if (T == 0) throw InvalidArgument("counterfactual sample count must be positive");
    const std::size_t k = observer.size();
    for (const auto* t : targets) {
        if (t->size() != k) throw InvalidArgument("observer and target label counts differ");
    }
    std::vector<std::vector<std::size_t>> counts(targets.size(), std::vector<std::size_t>(k, 0));
    for (std::size_t t = 0; t < T; ++t) {
        const GumbelVector u = sample_posterior_noise(observer.log_probs(), observed, rng);
        for (std::size_t i = 0; i < targets.size(); ++i) ++counts[i][mechanism(targets[i]->log_probs(), u)];
    }
    return counts;
}

/// Counterfactual distribution of the target's prediction given the observer's.
///
/// Targets outside the observer's group have an unchanged noise posterior, so
/// their counterfactual is the target model itself, returned exactly.
inline CounterfactualEstimate counterfactual_distribution(const CounterfactualQuery& query, const Partition& partition,
                                                          const ModelSet& models, std::size_t T, Rng& rng) {
    if (T == 0) throw InvalidArgument("counterfactual sample count must be positive");
    if (query.observed_expert == query.target_expert) {
        throw InvalidArgument("observed and target expert must differ");
    }
    const ConditionalModel& source_model = require_model(models, query.observed_expert);
    const ConditionalModel& target_model = require_model(models, query.target_expert);
    const SimplexDistribution target = target_model.predict(query.features);
    if (!partition.same_group(query.observed_expert, query.target_expert)) {
        return {target.probs(), T, true};
    }
    const SimplexDistribution source = source_model.predict(query.features);
    if (query.observed_label >= source.size()) throw InvalidArgument("observed label outside [0, k)");
    const SimplexDistribution* targets[] = {&target};
    const auto counts = counterfactual_counts(source, query.observed_label, targets, T, rng);
    std::vector<double> p(counts[0].size());
    for (std::size_t c = 0; c < p.size(); ++c) p[c] = static_cast<double>(counts[0][c]) / static_cast<double>(T);
    return {std::move(p), T, false};
}

inline Label counterfactual_argmax(const CounterfactualEstimate& estimate) { return argmax(estimate.dist); }

inline Label counterfactual_argmax(const CounterfactualQuery& query, const Partition& partition,
                                   const ModelSet& models, std::size_t T, Rng& rng) {
    return counterfactual_argmax(counterfactual_distribution(query, partition, models, T, rng));
}

}  // namespace siscm
