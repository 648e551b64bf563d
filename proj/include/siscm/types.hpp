#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "siscm/errors.hpp"

namespace siscm {

/// Zero-based class index in [0, k).
using Label = std::size_t;

/// Opaque expert identifier; ordered lexicographically for tie-breaking.
using ExpertId = std::string;

/// Floor applied to every model probability before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

/// Tolerance on |logsumexp| for log-potentials that claim to be normalized.
inline constexpr double kNormalizationTolerance = 1e-9;

/// Index of the largest entry; the lowest index wins ties.
inline std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

inline double logsumexp(std::span<const double> v) {
    if (v.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

/// Probability vector over k labels. Entries are floored at kProbabilityFloor
/// and renormalized on construction, so logs are always finite.
class SimplexDistribution {
public:
    SimplexDistribution() = default;

    explicit SimplexDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
        if (probs_.empty()) throw InvalidArgument("simplex must have at least one label");
        double total = 0.0;
        for (double& p : probs_) {
            if (!std::isfinite(p) || p < 0.0) throw InvalidArgument("simplex entries must be finite and non-negative");
            p = std::max(p, kProbabilityFloor);
            total += p;
        }
        for (double& p : probs_) p /= total;
        log_probs_.resize(probs_.size());
        std::transform(probs_.begin(), probs_.end(), log_probs_.begin(), [](double p) { return std::log(p); });
        // Shift so the log-potentials satisfy logsumexp == 0 to machine precision.
        const double lse = logsumexp(log_probs_);
        for (double& l : log_probs_) l -= lse;
    }

    /// Softmax of unnormalized log-potentials.
    static SimplexDistribution from_logits(std::span<const double> logits) {
        if (logits.empty()) throw InvalidArgument("simplex must have at least one label");
        const double lse = logsumexp(logits);
        std::vector<double> p(logits.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(logits[i] - lse);
        return SimplexDistribution(std::move(p));
    }

    static SimplexDistribution uniform(std::size_t k) { return SimplexDistribution(std::vector<double>(k, 1.0)); }

    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t c) const { return probs_[c]; }
    const std::vector<double>& probs() const noexcept { return probs_; }
    const std::vector<double>& log_probs() const noexcept { return log_probs_; }
    Label mode() const { return argmax(probs_); }

private:
    std::vector<double> probs_;
    std::vector<double> log_probs_;
};

inline double total_variation(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw InvalidArgument("total variation of vectors with different lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

/// One realization of the k-dimensional Gumbel noise of a group.
struct GumbelVector {
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t c) const { return values[c]; }
};

/// Disjoint grouping of experts. Stored canonically: members sorted, groups
/// ordered by their smallest member, so group ids are reproducible.
class Partition {
public:
    Partition() = default;

    explicit Partition(std::vector<std::vector<ExpertId>> groups) : groups_(std::move(groups)) {
        for (auto& g : groups_) {
            if (g.empty()) throw InvalidArgument("partition groups must be non-empty");
            std::sort(g.begin(), g.end());
        }
        std::sort(groups_.begin(), groups_.end(),
                  [](const auto& a, const auto& b) { return a.front() < b.front(); });
        for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
            for (const auto& e : groups_[gi]) {
                if (!index_.emplace(e, gi).second) throw InvalidArgument("expert '" + e + "' appears in two groups");
            }
        }
    }

    static Partition singletons(std::span<const ExpertId> experts) {
        std::vector<std::vector<ExpertId>> g;
        g.reserve(experts.size());
        for (const auto& e : experts) g.push_back({e});
        return Partition(std::move(g));
    }

    static Partition single_group(std::span<const ExpertId> experts) {
        return Partition({std::vector<ExpertId>(experts.begin(), experts.end())});
    }

    const std::vector<std::vector<ExpertId>>& groups() const noexcept { return groups_; }
    std::size_t num_groups() const noexcept { return groups_.size(); }
    std::size_t num_experts() const noexcept { return index_.size(); }
    bool contains(const ExpertId& e) const { return index_.count(e) != 0; }

    std::size_t group_of(const ExpertId& e) const {
        auto it = index_.find(e);
        if (it == index_.end()) throw MissingExpert(e);
        return it->second;
    }

    bool same_group(const ExpertId& a, const ExpertId& b) const { return group_of(a) == group_of(b); }

    /// All experts in lexicographic order.
    std::vector<ExpertId> experts() const {
        std::vector<ExpertId> out;
        out.reserve(index_.size());
        for (const auto& [e, g] : index_) out.push_back(e);
        return out;
    }

    bool operator==(const Partition& other) const { return groups_ == other.groups_; }

private:
    std::vector<std::vector<ExpertId>> groups_;
    std::map<ExpertId, std::size_t> index_;
};

}  // namespace siscm
