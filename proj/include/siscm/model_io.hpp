#pragma once

// Versioned per-expert model documents.
//
//   <dir>/manifest.json      {"version": 1, "experts": {"<id>": "expert_0000.json", ...}}
//   <dir>/expert_0000.json   {"version": 1, "expert": id, "model": {...}, "cnb": {...}?}
//
// Doubles are written with round-trip precision; -inf log-priors as null.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "siscm/errors.hpp"
#include "siscm/io.hpp"
#include "siscm/models.hpp"

namespace siscm {

inline constexpr int kModelFormatVersion = 1;

inline json model_to_json(const ConditionalModel& model) {
    if (const auto* gnb = dynamic_cast<const GnbModel*>(&model)) {
        json priors = json::array();
        for (double v : gnb->class_log_priors()) priors.push_back(std::isfinite(v) ? json(v) : json(nullptr));
        return {{"kind", "gnb"},
                {"class_log_priors", std::move(priors)},
                {"means", gnb->means()},
                {"variances", gnb->variances()}};
    }
    if (const auto* logit = dynamic_cast<const LogitModel*>(&model)) {
        return {{"kind", "logit"}, {"weights", logit->weights()}};
    }
    throw InvalidArgument("cannot serialize model of kind '" + model.kind() + "'");
}

inline std::shared_ptr<const ConditionalModel> model_from_json(const json& doc) {
    try {
        const auto kind = doc.at("kind").get<std::string>();
        if (kind == "gnb") {
            std::vector<double> priors;
            for (const auto& v : doc.at("class_log_priors")) {
                priors.push_back(v.is_null() ? -std::numeric_limits<double>::infinity() : v.get<double>());
            }
            return std::make_shared<GnbModel>(std::move(priors),
                                              doc.at("means").get<std::vector<std::vector<double>>>(),
                                              doc.at("variances").get<std::vector<std::vector<double>>>());
        }
        if (kind == "logit") {
            return std::make_shared<LogitModel>(doc.at("weights").get<std::vector<std::vector<double>>>());
        }
        throw SchemaError("unknown model kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed model document: ") + e.what());
    }
}

inline json cnb_to_json(const CnbModel& cnb) {
    json tables = json::object();
    for (const auto& [source, counts] : cnb.tables()) tables[source] = counts;
    return {{"k", cnb.num_labels()},
            {"alpha", cnb.alpha()},
            {"absent_fallback", cnb.absent_fallback()},
            {"tables", std::move(tables)}};
}

inline CnbModel cnb_from_json(const json& doc) {
    try {
        CnbModel cnb(doc.at("k").get<std::size_t>(), doc.at("alpha").get<double>());
        cnb.absent_fallback() = doc.at("absent_fallback").get<std::vector<double>>();
        if (cnb.absent_fallback().size() != cnb.num_labels()) throw SchemaError("CNB fallback row has wrong length");
        for (const auto& [source, counts] : doc.at("tables").items()) {
            auto& t = cnb.table(source);
            auto values = counts.get<std::vector<double>>();
            if (values.size() != t.size()) throw SchemaError("CNB table for '" + source + "' has wrong size");
            t = std::move(values);
        }
        return cnb;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed CNB document: ") + e.what());
    }
}

struct ModelBundle {
    ModelSet models;
    CnbSet cnb;  // may be empty
};

inline void save_models(const std::filesystem::path& dir, const ModelSet& models, const CnbSet& cnb = {}) {
    json manifest = {{"version", kModelFormatVersion}, {"experts", json::object()}};
    std::size_t i = 0;
    for (const auto& [expert, model] : models) {
        char name[32];
        std::snprintf(name, sizeof name, "expert_%04zu.json", i++);
        json doc = {{"version", kModelFormatVersion}, {"expert", expert}, {"model", model_to_json(*model)}};
        if (auto it = cnb.find(expert); it != cnb.end()) doc["cnb"] = cnb_to_json(it->second);
        write_json(dir / name, doc);
        manifest["experts"][expert] = name;
    }
    write_json(dir / "manifest.json", manifest);
}

inline ModelBundle load_models(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) {
        throw InvalidArgument("model directory '" + dir.string() + "' has no manifest.json");
    }
    const json manifest = read_json(manifest_path);
    ModelBundle bundle;
    try {
        if (manifest.at("version").get<int>() != kModelFormatVersion) throw SchemaError("unsupported model format version");
        for (const auto& [expert, file] : manifest.at("experts").items()) {
            const json doc = read_json(dir / file.get<std::string>());
            if (doc.at("expert").get<std::string>() != expert) {
                throw SchemaError("model file for '" + expert + "' names another expert");
            }
            bundle.models.emplace(expert, model_from_json(doc.at("model")));
            if (doc.contains("cnb")) bundle.cnb.emplace(expert, cnb_from_json(doc.at("cnb")));
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed model manifest: ") + e.what());
    }
    return bundle;
}

}  // namespace siscm
