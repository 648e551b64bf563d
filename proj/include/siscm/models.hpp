#pragma once

// Per-expert conditional label models P(Y_h | X) and the two non-causal
// baselines built from them.

#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "siscm/errors.hpp"
#include "siscm/types.hpp"

namespace siscm {

class ConditionalModel {
public:
    virtual ~ConditionalModel() = default;

    virtual SimplexDistribution predict(std::span<const double> x) const = 0;
    virtual std::size_t num_labels() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::string kind() const = 0;
};

using ModelSet = std::map<ExpertId, std::shared_ptr<const ConditionalModel>>;

inline const ConditionalModel& require_model(const ModelSet& models, const ExpertId& expert) {
    auto it = models.find(expert);
    if (it == models.end() || !it->second) throw MissingExpert(expert);
    return *it->second;
}

namespace detail {
inline void check_dimension(std::span<const double> x, std::size_t d) {
    if (x.size() != d) {
        throw InvalidArgument("feature dimension " + std::to_string(x.size()) + " does not match model dimension " +
                              std::to_string(d));
    }
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Gaussian naive Bayes

class GnbModel final : public ConditionalModel {
public:
    /// Log-priors may be -inf for classes never seen in training.
    GnbModel(std::vector<double> class_log_priors, std::vector<std::vector<double>> means,
             std::vector<std::vector<double>> variances)
        : log_priors_(std::move(class_log_priors)), means_(std::move(means)), variances_(std::move(variances)) {
        const std::size_t k = log_priors_.size();
        if (k == 0 || means_.size() != k || variances_.size() != k) {
            throw InvalidArgument("GNB parameter tables must have one row per class");
        }
        dim_ = means_.front().size();
        for (std::size_t c = 0; c < k; ++c) {
            if (means_[c].size() != dim_ || variances_[c].size() != dim_) {
                throw InvalidArgument("GNB parameter rows must all have the feature dimension");
            }
            for (double v : variances_[c]) {
                if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("GNB variances must be positive and finite");
            }
        }
    }

    SimplexDistribution predict(std::span<const double> x) const override {
        detail::check_dimension(x, dim_);
        std::vector<double> logits(log_priors_.size());
        for (std::size_t c = 0; c < logits.size(); ++c) {
            double ll = log_priors_[c];
            for (std::size_t j = 0; j < dim_; ++j) {
                const double var = variances_[c][j];
                const double diff = x[j] - means_[c][j];
                ll -= 0.5 * std::log(2.0 * std::numbers::pi * var) + diff * diff / (2.0 * var);
            }
            logits[c] = ll;
        }
        return SimplexDistribution::from_logits(logits);
    }

    std::size_t num_labels() const override { return log_priors_.size(); }
    std::size_t dimension() const override { return dim_; }
    std::string kind() const override { return "gnb"; }

    const std::vector<double>& class_log_priors() const noexcept { return log_priors_; }
    const std::vector<std::vector<double>>& means() const noexcept { return means_; }
    const std::vector<std::vector<double>>& variances() const noexcept { return variances_; }

private:
    std::vector<double> log_priors_;
    std::vector<std::vector<double>> means_;
    std::vector<std::vector<double>> variances_;
    std::size_t dim_ = 0;
};

struct LabeledFeatures {
    std::span<const double> x;
    Label label;
};

struct GnbOptions {
    /// Variances are floored at var_smoothing * (largest per-feature variance).
    double var_smoothing = 1e-9;
    /// When set, classes without samples get zero prior mass instead of an error.
    bool allow_missing_classes = false;
};

/// Fits per-class feature means and (population) variances plus class-frequency priors.
inline GnbModel train_gnb(std::span<const LabeledFeatures> samples, std::size_t k, const GnbOptions& options = {}) {
    if (k == 0) throw InvalidArgument("label count must be positive");
    if (samples.empty()) throw InsufficientData("no training samples");
    const std::size_t d = samples.front().x.size();

    std::vector<std::size_t> counts(k, 0);
    std::vector<std::vector<double>> sum(k, std::vector<double>(d, 0.0));
    std::vector<double> total_sum(d, 0.0);
    for (const auto& s : samples) {
        if (s.label >= k) throw InvalidArgument("training label " + std::to_string(s.label) + " outside [0, k)");
        detail::check_dimension(s.x, d);
        ++counts[s.label];
        for (std::size_t j = 0; j < d; ++j) {
            sum[s.label][j] += s.x[j];
            total_sum[j] += s.x[j];
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0 && !options.allow_missing_classes) {
            throw InsufficientData("no training samples for class " + std::to_string(c));
        }
    }

    std::vector<std::vector<double>> means(k, std::vector<double>(d, 0.0));
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        for (std::size_t j = 0; j < d; ++j) means[c][j] = sum[c][j] / static_cast<double>(counts[c]);
    }

    const double n = static_cast<double>(samples.size());
    std::vector<double> total_sq(d, 0.0);
    std::vector<std::vector<double>> sq(k, std::vector<double>(d, 0.0));
    for (const auto& s : samples) {
        for (std::size_t j = 0; j < d; ++j) {
            const double dc = s.x[j] - means[s.label][j];
            const double dt = s.x[j] - total_sum[j] / n;
            sq[s.label][j] += dc * dc;
            total_sq[j] += dt * dt;
        }
    }
    double max_var = 0.0;
    for (double v : total_sq) max_var = std::max(max_var, v / n);
    // Constant features everywhere: fall back to a unit scale for the floor.
    const double floor = options.var_smoothing * (max_var > 0.0 ? max_var : 1.0);

    std::vector<std::vector<double>> variances(k, std::vector<double>(d, 1.0));
    std::vector<double> log_priors(k);
    for (std::size_t c = 0; c < k; ++c) {
        log_priors[c] = counts[c] == 0 ? -std::numeric_limits<double>::infinity()
                                       : std::log(static_cast<double>(counts[c]) / n);
        if (counts[c] == 0) continue;
        for (std::size_t j = 0; j < d; ++j) {
            variances[c][j] = std::max(sq[c][j] / static_cast<double>(counts[c]), floor);
        }
    }
    return GnbModel(std::move(log_priors), std::move(means), std::move(variances));
}

// ---------------------------------------------------------------------------
// Multinomial logit: P(Y = c | x) = exp(w_c . x) / sum_j exp(w_j . x)

class LogitModel final : public ConditionalModel {
public:
    explicit LogitModel(std::vector<std::vector<double>> weights) : weights_(std::move(weights)) {
        if (weights_.empty()) throw InvalidArgument("logit model needs at least one class");
        dim_ = weights_.front().size();
        for (const auto& w : weights_) {
            if (w.size() != dim_) throw InvalidArgument("logit weight rows must share one dimension");
            for (double v : w) {
                if (!std::isfinite(v)) throw InvalidArgument("logit weights must be finite");
            }
        }
    }

    SimplexDistribution predict(std::span<const double> x) const override {
        detail::check_dimension(x, dim_);
        std::vector<double> logits(weights_.size(), 0.0);
        for (std::size_t c = 0; c < weights_.size(); ++c) {
            for (std::size_t j = 0; j < dim_; ++j) logits[c] += weights_[c][j] * x[j];
        }
        return SimplexDistribution::from_logits(logits);
    }

    std::size_t num_labels() const override { return weights_.size(); }
    std::size_t dimension() const override { return dim_; }
    std::string kind() const override { return "logit"; }

    const std::vector<std::vector<double>>& weights() const noexcept { return weights_; }

private:
    std::vector<std::vector<double>> weights_;
    std::size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// Categorical naive Bayes over one observed co-prediction.
//
// For a fixed target expert h', keeps a (k+1) x k count table per source
// expert h: row c counts Y_{h'} when Y_h = c was observed on the same sample,
// row k counts Y_{h'} on samples where h made no prediction.

class CnbModel {
public:
    CnbModel() = default;
    CnbModel(std::size_t k, double alpha) : k_(k), alpha_(alpha), absent_fallback_(k, 0.0) {
        if (k == 0) throw InvalidArgument("label count must be positive");
        if (!(alpha > 0.0)) throw InvalidArgument("CNB smoothing alpha must be positive");
    }

    std::size_t num_labels() const noexcept { return k_; }
    double alpha() const noexcept { return alpha_; }

    /// Counts used for the "absent" row of sources never seen with this target.
    std::vector<double>& absent_fallback() noexcept { return absent_fallback_; }
    const std::vector<double>& absent_fallback() const noexcept { return absent_fallback_; }

    /// (k+1) x k count table for `source`, created on first use.
    std::vector<double>& table(const ExpertId& source) {
        auto [it, inserted] = tables_.try_emplace(source);
        if (inserted) it->second.assign((k_ + 1) * k_, 0.0);
        return it->second;
    }
    const std::map<ExpertId, std::vector<double>>& tables() const noexcept { return tables_; }
    std::map<ExpertId, std::vector<double>>& tables() noexcept { return tables_; }

    void add(const ExpertId& source, std::optional<Label> source_label, Label target_label) {
        const Label row = source_label.value_or(k_);
        if (row > k_ || target_label >= k_) throw InvalidArgument("CNB label outside [0, k)");
        table(source)[row * k_ + target_label] += 1.0;
    }

    /// Smoothed P(Y_{h'} | Y_h = observed), or the "not observed" row when empty.
    SimplexDistribution row(const ExpertId& source, std::optional<Label> observed) const {
        const Label r = observed.value_or(k_);
        if (r > k_) throw InvalidArgument("CNB query label outside [0, k)");
        std::vector<double> p(k_);
        auto it = tables_.find(source);
        for (std::size_t c = 0; c < k_; ++c) {
            double count = 0.0;
            if (it != tables_.end()) {
                count = it->second[r * k_ + c];
            } else if (r == k_) {
                count = absent_fallback_[c];
            }
            p[c] = count + alpha_;
        }
        double total = 0.0;
        for (double v : p) total += v;
        for (double& v : p) v /= total;
        return SimplexDistribution(std::move(p));
    }

private:
    std::size_t k_ = 0;
    double alpha_ = 1.0;
    std::vector<double> absent_fallback_;
    std::map<ExpertId, std::vector<double>> tables_;
};

struct CoPrediction {
    ExpertId source;
    std::optional<Label> source_label;  // nullopt: source made no prediction
    Label target_label;
};

/// CNB for one target expert from its co-prediction records.
inline CnbModel train_cnb(std::span<const CoPrediction> records, std::size_t k, double alpha = 1.0) {
    CnbModel model(k, alpha);
    for (const auto& r : records) model.add(r.source, r.source_label, r.target_label);
    return model;
}

/// CNB models keyed by target expert.
using CnbSet = std::map<ExpertId, CnbModel>;

inline SimplexDistribution logit_predict(const LogitModel& model, std::span<const double> x) { return model.predict(x); }
inline SimplexDistribution gnb_predict(const GnbModel& model, std::span<const double> x) { return model.predict(x); }

/// "GNB" baseline: most likely label under the target's own model.
inline Label baseline_gnb_argmax(const ConditionalModel& target, std::span<const double> x) {
    return target.predict(x).mode();
}

/// "GNB + CNB" baseline with an explicit CNB row.
inline Label baseline_gnb_cnb_argmax(const ConditionalModel& target, const SimplexDistribution& cnb_row,
                                     std::span<const double> x) {
    const SimplexDistribution p = target.predict(x);
    if (p.size() != cnb_row.size()) throw InvalidArgument("GNB and CNB label counts differ");
    std::vector<double> prod(p.size());
    for (std::size_t c = 0; c < p.size(); ++c) prod[c] = p[c] * cnb_row[c];
    return argmax(prod);
}

inline Label baseline_gnb_cnb_argmax(const ConditionalModel& target, const CnbModel& cnb, const ExpertId& source,
                                     std::span<const double> x, std::optional<Label> observed) {
    return baseline_gnb_cnb_argmax(target, cnb.row(source, observed), x);
}

}  // namespace siscm
