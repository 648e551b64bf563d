#pragma once

// Shared oracles and fixtures for the test suites. Nothing here calls into
// the sampling code under test.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <gtest/gtest.h>
#include <memory>
#include <vector>

#include "siscm/siscm.hpp"

namespace siscm::testing {

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
inline double ks_one_sample(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
    }
    return d;
}

/// Two-sample Kolmogorov-Smirnov distance.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

/// Flat Dirichlet draw through normalized exponentials.
inline std::vector<double> random_simplex(std::size_t k, Rng& rng) {
    std::vector<double> p(k);
    double total = 0.0;
    for (double& v : p) {
        v = -std::log(rng.uniform_open());
        total += v;
    }
    for (double& v : p) v /= total;
    return p;
}

/// Returns a fixed simplex per value of x[0] (rounded to an index).
class TableModel final : public ConditionalModel {
public:
    explicit TableModel(std::vector<std::vector<double>> rows) : rows_(std::move(rows)) {}
    explicit TableModel(std::vector<double> row) : rows_{std::move(row)} {}

    SimplexDistribution predict(std::span<const double> x) const override {
        const auto i = rows_.size() == 1 ? 0 : static_cast<std::size_t>(std::llround(x[0]));
        return SimplexDistribution(rows_.at(i));
    }
    std::size_t num_labels() const override { return rows_.front().size(); }
    std::size_t dimension() const override { return 1; }
    std::string kind() const override { return "table"; }

private:
    std::vector<std::vector<double>> rows_;
};

using Groups = std::vector<std::vector<ExpertId>>;

inline std::shared_ptr<const ConditionalModel> table_model(std::vector<double> row) {
    return std::make_shared<TableModel>(std::move(row));
}

/// Standard logistic upper tail P(D > d) for D = G1 - G2 of two standard Gumbels.
inline double logistic_tail(double d) { return 1.0 / (1.0 + std::exp(d)); }

/// Exact P(Y_target = c' | Y_source = c) for k = 2 experts sharing noise:
/// label 0 wins iff D = U0 - U1 > log(p(1) / p(0)).
inline double two_label_counterfactual(const std::vector<double>& source, const std::vector<double>& target,
                                       Label observed, Label query) {
    const double a_s = std::log(source[1] / source[0]);
    const double a_t = std::log(target[1] / target[0]);
    double p0;
    if (observed == 0) {
        p0 = logistic_tail(std::max(a_s, a_t)) / logistic_tail(a_s);
    } else {
        const double below_s = 1.0 - logistic_tail(a_s);
        p0 = a_t < a_s ? (logistic_tail(a_t) - logistic_tail(a_s)) / below_s : 0.0;
    }
    return query == 0 ? p0 : 1.0 - p0;
}

/// Fresh directory named after the running test, removed on destruction.
class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = std::filesystem::temp_directory_path() /
                (std::string("siscm_") + info->test_suite_name() + "_" + info->name());
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace siscm::testing
