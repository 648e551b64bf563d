#pragma once

// Multi-expert prediction panels: samples with a feature vector and a sparse
// expert -> label map, plus ingestion, sparsification and the filtering
// cascade used on real annotation data.
//
// On-disk layout is a directory holding
//   dataset.jsonl  one sample per line: {"id": str, "x": [float...], "y": {"expert": label...}}
//   meta.json      {"version": 1, "k": int, "d": int, "label_names": [...], "roster": [...]}

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "siscm/errors.hpp"
#include "siscm/io.hpp"
#include "siscm/random.hpp"
#include "siscm/types.hpp"

namespace siscm {

struct Prediction {
    std::size_t expert;  // index into the dataset roster
    Label label;

    bool operator==(const Prediction&) const = default;
};

struct Sample {
    std::string id;
    std::vector<double> x;
    std::vector<Prediction> predictions;  // sorted by expert index

    std::optional<Label> label_of(std::size_t expert) const {
        auto it = std::lower_bound(predictions.begin(), predictions.end(), expert,
                                   [](const Prediction& p, std::size_t e) { return p.expert < e; });
        if (it == predictions.end() || it->expert != expert) return std::nullopt;
        return it->label;
    }

    bool operator==(const Sample&) const = default;
};

struct PanelDataset {
    std::size_t k = 0;
    std::size_t d = 0;
    std::vector<std::string> label_names;
    std::vector<ExpertId> roster;  // sorted, unique
    std::vector<Sample> samples;

    std::size_t expert_index(const ExpertId& e) const {
        auto it = std::lower_bound(roster.begin(), roster.end(), e);
        if (it == roster.end() || *it != e) throw MissingExpert(e);
        return static_cast<std::size_t>(it - roster.begin());
    }

    bool has_expert(const ExpertId& e) const { return std::binary_search(roster.begin(), roster.end(), e); }

    std::size_t num_predictions() const {
        std::size_t n = 0;
        for (const auto& s : samples) n += s.predictions.size();
        return n;
    }

    /// Throws SchemaError when an invariant is broken.
    void validate() const {
        if (k == 0) throw SchemaError("label count k must be positive");
        if (label_names.size() != k) throw SchemaError("label_names must have k entries");
        if (!std::is_sorted(roster.begin(), roster.end()) ||
            std::adjacent_find(roster.begin(), roster.end()) != roster.end()) {
            throw SchemaError("roster must be sorted and unique");
        }
        std::set<std::string> ids;
        for (const auto& s : samples) {
            if (!ids.insert(s.id).second) throw SchemaError("duplicate sample id '" + s.id + "'");
            if (s.x.size() != d) throw SchemaError("sample '" + s.id + "' has wrong feature dimension");
            for (double v : s.x) {
                if (!std::isfinite(v)) throw SchemaError("sample '" + s.id + "' has a non-finite feature");
            }
            if (s.predictions.empty()) throw SchemaError("sample '" + s.id + "' has no predictions");
            for (std::size_t i = 0; i < s.predictions.size(); ++i) {
                const auto& p = s.predictions[i];
                if (p.expert >= roster.size()) throw SchemaError("prediction by an expert outside the roster");
                if (p.label >= k) throw SchemaError("label outside [0, k) in sample '" + s.id + "'");
                if (i > 0 && s.predictions[i - 1].expert >= p.expert) {
                    throw SchemaError("predictions of sample '" + s.id + "' not sorted by expert");
                }
            }
        }
    }

    bool operator==(const PanelDataset&) const = default;
};

inline std::vector<std::string> default_label_names(std::size_t k) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < k; ++c) names.push_back(std::to_string(c));
    return names;
}

// ---------------------------------------------------------------------------
// IO

namespace detail {

inline std::filesystem::path dataset_dir(const std::filesystem::path& path) {
    if (path.extension() == ".jsonl") return path.parent_path().empty() ? "." : path.parent_path();
    return path;
}

inline std::filesystem::path dataset_file(const std::filesystem::path& path) {
    if (path.extension() == ".jsonl") return path;
    return path / "dataset.jsonl";
}

}  // namespace detail

/// Writes `dir/dataset.jsonl` and `dir/meta.json`.
inline void save_dataset(const PanelDataset& ds, const std::filesystem::path& dir) {
    ds.validate();
    json meta = {{"version", 1},
                 {"k", ds.k},
                 {"d", ds.d},
                 {"label_names", ds.label_names},
                 {"roster", ds.roster}};
    write_json(dir / "meta.json", meta);

    std::string out;
    for (const auto& s : ds.samples) {
        json line;
        line["id"] = s.id;
        line["x"] = s.x;
        json y = json::object();
        for (const auto& p : s.predictions) y[ds.roster[p.expert]] = p.label;
        line["y"] = std::move(y);
        out += line.dump();
        out += '\n';
    }
    write_text(dir / "dataset.jsonl", out);
}

/// Reads a dataset directory (or its dataset.jsonl; meta.json is the sibling file).
inline PanelDataset load_dataset(const std::filesystem::path& path) {
    const auto dir = detail::dataset_dir(path);
    const auto file = detail::dataset_file(path);
    if (!std::filesystem::exists(file)) throw InvalidArgument("dataset file '" + file.string() + "' not found");
    const json meta = read_json(dir / "meta.json");

    PanelDataset ds;
    try {
        ds.k = meta.at("k").get<std::size_t>();
        ds.d = meta.at("d").get<std::size_t>();
        ds.roster = meta.at("roster").get<std::vector<ExpertId>>();
        ds.label_names = meta.contains("label_names") ? meta.at("label_names").get<std::vector<std::string>>()
                                                      : default_label_names(ds.k);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed meta.json: ") + e.what());
    }
    std::sort(ds.roster.begin(), ds.roster.end());
    if (std::adjacent_find(ds.roster.begin(), ds.roster.end()) != ds.roster.end()) {
        throw SchemaError("duplicate expert in roster");
    }

    std::istringstream in(read_text(file));
    std::string text;
    std::size_t line_no = 0;
    while (std::getline(in, text)) {
        ++line_no;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json line;
        try {
            line = json::parse(text);
        } catch (const json::parse_error&) {
            throw ParseError("malformed JSON", line_no);
        }
        Sample s;
        try {
            s.id = line.at("id").get<std::string>();
            s.x = line.at("x").get<std::vector<double>>();
        } catch (const json::exception&) {
            throw ParseError("sample needs string 'id' and numeric array 'x'", line_no);
        }
        if (s.x.size() != ds.d) {
            throw ParseError("expected " + std::to_string(ds.d) + " features, found " + std::to_string(s.x.size()),
                             line_no);
        }
        if (!line.contains("y") || !line["y"].is_object()) throw ParseError("sample needs object 'y'", line_no);
        for (const auto& [expert, label] : line["y"].items()) {
            if (!label.is_number_integer()) throw ParseError("label of '" + expert + "' is not an integer", line_no);
            const auto v = label.get<long long>();
            if (v < 0 || static_cast<std::size_t>(v) >= ds.k) {
                throw SchemaError("label " + std::to_string(v) + " outside [0, k) on line " + std::to_string(line_no));
            }
            if (!ds.has_expert(expert)) {
                throw SchemaError("unknown expert '" + expert + "' on line " + std::to_string(line_no));
            }
            s.predictions.push_back({ds.expert_index(expert), static_cast<Label>(v)});
        }
        std::sort(s.predictions.begin(), s.predictions.end(),
                  [](const Prediction& a, const Prediction& b) { return a.expert < b.expert; });
        ds.samples.push_back(std::move(s));
    }
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Sparsity

/// max{2, round((1 - s) * n_experts)}, rounding half away from zero.
inline std::size_t retained_prediction_count(double s, std::size_t n_experts) {
    const auto kept = static_cast<std::size_t>(std::round((1.0 - s) * static_cast<double>(n_experts)));
    return std::max<std::size_t>(2, kept);
}

/// Keeps a uniformly chosen subset of each sample's predictions. Sample i
/// uses the substream rng.substream(i).
inline PanelDataset apply_sparsity(const PanelDataset& ds, double s, const Rng& rng) {
    if (!(s > 0.0 && s < 1.0)) throw InvalidArgument("sparsity must lie in (0, 1)");
    if (ds.roster.size() < 2) throw InvalidArgument("sparsity needs at least two experts");
    const std::size_t keep = retained_prediction_count(s, ds.roster.size());
    PanelDataset out = ds;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        auto& preds = out.samples[i].predictions;
        if (preds.size() <= keep) continue;
        Rng stream = rng.substream(i);
        // Partial Fisher-Yates: the first `keep` slots become a uniform subset.
        for (std::size_t j = 0; j < keep; ++j) {
            const std::size_t pick = j + stream.uniform_index(preds.size() - j);
            std::swap(preds[j], preds[pick]);
        }
        preds.resize(keep);
        std::sort(preds.begin(), preds.end(), [](const Prediction& a, const Prediction& b) { return a.expert < b.expert; });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessOptions {
    std::size_t train_min = 130;
    std::size_t test_min = 20;
    bool drop_full_agreement = true;
};

struct PreprocessResult {
    PanelDataset train;
    PanelDataset test;
    std::size_t iterations = 0;
};

namespace detail {

/// Restricts `ds` to `keep` experts (roster indices) and the given samples.
inline PanelDataset restrict(const PanelDataset& ds, const std::vector<bool>& keep_expert,
                             const std::vector<std::size_t>& sample_indices) {
    PanelDataset out;
    out.k = ds.k;
    out.d = ds.d;
    out.label_names = ds.label_names;
    std::vector<std::size_t> remap(ds.roster.size(), 0);
    for (std::size_t e = 0; e < ds.roster.size(); ++e) {
        if (!keep_expert[e]) continue;
        remap[e] = out.roster.size();
        out.roster.push_back(ds.roster[e]);
    }
    for (std::size_t i : sample_indices) {
        Sample s{ds.samples[i].id, ds.samples[i].x, {}};
        for (const auto& p : ds.samples[i].predictions) {
            if (keep_expert[p.expert]) s.predictions.push_back({remap[p.expert], p.label});
        }
        out.samples.push_back(std::move(s));
    }
    return out;
}

}  // namespace detail

/// Filters a panel the way the real-data experiments do, iterated to a fixed point:
/// drop full-agreement samples (optional), drop experts with fewer than
/// train_min / test_min predictions in the respective split or whose training
/// labels miss a class, and drop samples left with fewer than two predictions.
inline PreprocessResult preprocess(const PanelDataset& ds, const std::set<std::string>& test_ids,
                                   const PreprocessOptions& options = {}) {
    std::vector<bool> keep_expert(ds.roster.size(), true);
    std::vector<bool> keep_sample(ds.samples.size(), true);
    std::vector<bool> is_test(ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) is_test[i] = test_ids.count(ds.samples[i].id) != 0;

    auto live_predictions = [&](const Sample& s) {
        std::vector<Label> labels;
        for (const auto& p : s.predictions) {
            if (keep_expert[p.expert]) labels.push_back(p.label);
        }
        return labels;
    };

    std::size_t iterations = 0;
    for (bool changed = true; changed;) {
        changed = false;
        ++iterations;
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
            if (!keep_sample[i]) continue;
            const auto labels = live_predictions(ds.samples[i]);
            const bool agree = std::all_of(labels.begin(), labels.end(), [&](Label l) { return l == labels.front(); });
            if (labels.size() < 2 || (options.drop_full_agreement && agree)) {
                keep_sample[i] = false;
                changed = true;
            }
        }
        std::vector<std::size_t> n_train(ds.roster.size(), 0), n_test(ds.roster.size(), 0);
        std::vector<std::vector<bool>> covered(ds.roster.size(), std::vector<bool>(ds.k, false));
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
            if (!keep_sample[i]) continue;
            for (const auto& p : ds.samples[i].predictions) {
                if (!keep_expert[p.expert]) continue;
                if (is_test[i]) {
                    ++n_test[p.expert];
                } else {
                    ++n_train[p.expert];
                    covered[p.expert][p.label] = true;
                }
            }
        }
        for (std::size_t e = 0; e < ds.roster.size(); ++e) {
            if (!keep_expert[e]) continue;
            const bool full_cover = std::all_of(covered[e].begin(), covered[e].end(), [](bool b) { return b; });
            if (n_train[e] < options.train_min || n_test[e] < options.test_min || !full_cover) {
                keep_expert[e] = false;
                changed = true;
            }
        }
    }

    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        if (keep_sample[i]) (is_test[i] ? test_idx : train_idx).push_back(i);
    }
    PreprocessResult result{detail::restrict(ds, keep_expert, train_idx), detail::restrict(ds, keep_expert, test_idx),
                            iterations};
    if (result.train.samples.empty() || result.test.samples.empty() || result.train.roster.empty()) {
        throw EmptyDataset("preprocessing left an empty training or test set");
    }
    return result;
}

/// Assigns each sample to the test side with probability `test_fraction`.
inline std::set<std::string> random_split(const PanelDataset& ds, double test_fraction, const Rng& rng) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidArgument("test fraction must lie in (0, 1)");
    std::set<std::string> test_ids;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        Rng stream = rng.substream(ds.samples[i].id);
        if (stream.uniform_open() < test_fraction) test_ids.insert(ds.samples[i].id);
    }
    return test_ids;
}

/// Merges two panels with the same label space; rosters are united.
inline PanelDataset merge_datasets(const PanelDataset& a, const PanelDataset& b) {
    if (a.k != b.k || a.d != b.d) throw InvalidArgument("cannot merge datasets with different k or d");
    PanelDataset out;
    out.k = a.k;
    out.d = a.d;
    out.label_names = a.label_names;
    std::set<ExpertId> roster(a.roster.begin(), a.roster.end());
    roster.insert(b.roster.begin(), b.roster.end());
    out.roster.assign(roster.begin(), roster.end());
    for (const PanelDataset* src : {&a, &b}) {
        for (const auto& s : src->samples) {
            Sample t{s.id, s.x, {}};
            for (const auto& p : s.predictions) t.predictions.push_back({out.expert_index(src->roster[p.expert]), p.label});
            out.samples.push_back(std::move(t));
        }
    }
    return out;
}

}  // namespace siscm
