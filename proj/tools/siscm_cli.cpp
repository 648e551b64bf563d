// siscm: command-line front end for Gumbel-Max SI-SCM counterfactual inference.
//
//   siscm synth      synthetic panel, planted partition and truth models
//   siscm preprocess filter a panel and split it into train / test
//   siscm train      per-expert GNB models plus CNB tables
//   siscm partition  violations, weighted similarity graph and expert partition
//   siscm infer      counterfactual distributions for one observed prediction
//   siscm eval       held-out accuracy reports for one or more predictors
//   siscm bench      synthetic recovery grid over training sizes and sparsity
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "siscm/siscm.hpp"

namespace fs = std::filesystem;
using namespace siscm;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void log(const std::string& msg) { std::cerr << "siscm: " << msg << '\n'; }

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// Flag values fall back to the JSON config file, then to built-in defaults.
// Each bound option records how to pull its value from the config when the
// flag was not given on the command line.
class ConfigBinder {
public:
    template <class T>
    CLI::Option* bind(CLI::App* app, const std::string& flags, T& target, const std::string& help,
                      const std::string& key) {
        CLI::Option* opt = app->add_option(flags, target, help);
        if constexpr (!std::is_same_v<T, bool>) opt->capture_default_str();
        register_key(app, opt, target, key);
        return opt;
    }

    CLI::Option* bind_flag(CLI::App* app, const std::string& flags, bool& target, const std::string& help,
                           const std::string& key) {
        CLI::Option* opt = app->add_flag(flags, target, help);
        register_key(app, opt, target, key);
        return opt;
    }

    void apply(const json& config, const CLI::App* active) {
        if (!config.is_object()) throw UsageError("config file must hold a JSON object");
        for (const auto& [key, value] : config.items()) {
            if (!known_.count(key)) throw UsageError("unknown config key '" + key + "'");
        }
        for (const auto& b : bindings_) {
            if (b.owner != active && b.owner != root_) continue;
            if (b.option->count() > 0 || !config.contains(b.key)) continue;
            try {
                b.assign(config.at(b.key));
            } catch (const json::exception& e) {
                throw UsageError("config key '" + b.key + "' has the wrong type: " + e.what());
            }
        }
    }

    void set_root(const CLI::App* root) { root_ = root; }

private:
    template <class T>
    void register_key(CLI::App* app, CLI::Option* opt, T& target, const std::string& key) {
        known_.insert(key);
        bindings_.push_back({app, opt, key, [&target](const json& v) { target = v.get<T>(); }});
    }

    struct Binding {
        const CLI::App* owner;
        CLI::Option* option;
        std::string key;
        std::function<void(const json&)> assign;
    };
    std::vector<Binding> bindings_;
    std::set<std::string> known_;
    const CLI::App* root_ = nullptr;
};

struct Common {
    std::uint64_t seed = 0;
    std::string config;
    std::size_t threads = 1;
    std::string out_dir = ".";
    std::size_t T = 1000;
    std::size_t t_weights = 1000;
    std::size_t restarts = 10;
    double alpha = 1.0;
    double slack = 1.0;
    double smoothing = 1e-9;

    void validate() const {
        if (threads == 0) throw UsageError("--threads must be at least 1");
        if (T == 0) throw UsageError("-T must be at least 1");
        if (t_weights == 0) throw UsageError("--t-weights must be at least 1");
        if (restarts == 0) throw UsageError("--restarts must be at least 1");
        if (!(alpha > 0.0)) throw UsageError("--alpha must be positive");
        if (!(slack > 0.0)) throw UsageError("--slack must be positive");
        if (!(smoothing > 0.0)) throw UsageError("--smoothing must be positive");
        if (out_dir.empty()) throw UsageError("--out-dir must not be empty");
    }
};

struct SynthArgs {
    std::size_t n_experts = 48;
    std::vector<std::size_t> group_sizes = {6, 7, 11, 11, 13};
    std::size_t k = 5;
    std::size_t d = 20;
    std::size_t n_train = 1000;
    std::size_t n_test = 1000;
    double sparsity = 0.5;
    double test_sparsity = 0.0;  // 0 keeps the held-out panel fully observed

    SyntheticConfig config(std::uint64_t seed) const {
        SyntheticConfig cfg;
        cfg.n_experts = n_experts;
        cfg.group_sizes = group_sizes;
        cfg.k = k;
        cfg.d = d;
        cfg.n_train = n_train;
        cfg.n_test = n_test;
        cfg.sparsity = sparsity;
        if (test_sparsity != 0.0) cfg.test_sparsity = test_sparsity;
        cfg.seed = seed;
        return cfg;
    }
};

struct Args {
    Common common;
    SynthArgs synth;
    std::string data;
    std::string test_data;
    std::string models;
    std::string partition;
    std::string truth;
    std::string loss = "zero_one";
    bool allow_missing_classes = false;
    // preprocess
    double test_fraction = 0.2;
    std::size_t train_min = 130;
    std::size_t test_min = 20;
    bool keep_agreement = false;
    // infer
    std::string expert;
    long long label = -1;
    std::string features;
    std::string sample;
    std::string target = "all";
    // eval
    std::vector<std::string> predictors = {"siscm"};
    // bench
    std::vector<std::size_t> m_grid = {1000};
    std::vector<double> s_grid = {0.5};
    std::size_t replicates = 5;
    std::size_t cf_samples = 500;
    bool fit_gnb = false;
};

/// Bad flags, bad input files and unknown experts are usage errors; anything
/// else that fails at run time is a runtime error.
int exit_code(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const InvalidArgument*>(&e) ||
        dynamic_cast<const MissingExpert*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const SchemaError*>(&e)) {
        return 2;
    }
    return 1;
}

fs::path out_path(const Args& a, const std::string& name) { return fs::path(a.common.out_dir) / name; }

void require(const std::string& value, const std::string& flag) {
    if (value.empty()) throw UsageError(flag + " is required");
}

void require_path(const std::string& value, const std::string& flag) {
    require(value, flag);
    if (!fs::exists(value)) throw UsageError(flag + " path '" + value + "' does not exist");
}

ModelBundle load_model_dir(const std::string& dir) {
    require_path(dir, "--models");
    return load_models(dir);
}

// ---------------------------------------------------------------------------

int cmd_synth(const Args& a) {
    const SyntheticPanel panel = generate_synthetic(a.synth.config(a.common.seed));
    save_dataset(panel.train, out_path(a, "train"));
    save_dataset(panel.test, out_path(a, "test"));
    save_partition(panel.truth, out_path(a, "truth_partition.json"));
    save_models(out_path(a, "truth_models"), panel.models());
    log("wrote " + std::to_string(panel.train.samples.size()) + " training and " +
        std::to_string(panel.test.samples.size()) + " held-out samples over " +
        std::to_string(panel.train.roster.size()) + " experts to " + a.common.out_dir);
    return 0;
}

int cmd_preprocess(const Args& a) {
    require_path(a.data, "--data");
    PanelDataset all = load_dataset(a.data);
    std::set<std::string> test_ids;
    if (!a.test_data.empty()) {
        require_path(a.test_data, "--test-data");
        const PanelDataset test = load_dataset(a.test_data);
        for (const auto& s : test.samples) test_ids.insert(s.id);
        all = merge_datasets(all, test);
        all.validate();
    } else {
        test_ids = random_split(all, a.test_fraction, Rng(a.common.seed).substream("split"));
    }
    const auto result = preprocess(all, test_ids, {a.train_min, a.test_min, !a.keep_agreement});
    save_dataset(result.train, out_path(a, "train"));
    save_dataset(result.test, out_path(a, "test"));
    log("kept " + std::to_string(result.train.roster.size()) + " experts, " +
        std::to_string(result.train.samples.size()) + " training and " + std::to_string(result.test.samples.size()) +
        " test samples after " + std::to_string(result.iterations) + " filter passes");
    return 0;
}

int cmd_train(const Args& a) {
    require_path(a.data, "--data");
    const PanelDataset train = load_dataset(a.data);
    const ModelSet models =
        train_expert_models(train, {a.common.smoothing, a.allow_missing_classes}, a.common.threads);
    const CnbSet cnb = build_cnb_models(train, a.common.alpha);
    save_models(out_path(a, "models"), models, cnb);
    log("trained " + std::to_string(models.size()) + " GNB models with CNB tables");
    return 0;
}

LossKind parse_loss(const std::string& name) {
    if (name == "zero_one") return LossKind::ZeroOne;
    if (name == "nll") return LossKind::NegLogLikelihood;
    throw UsageError("--loss must be zero_one or nll");
}

int cmd_partition(const Args& a) {
    require_path(a.data, "--data");
    const PanelDataset train = load_dataset(a.data);
    const ModelBundle bundle = load_model_dir(a.models);
    PartitionOptions opts;
    opts.slack = a.common.slack;
    opts.restarts = a.common.restarts;
    opts.weights = {a.common.t_weights, parse_loss(a.loss), a.common.threads};
    const LearnedPartition learned = learn_partition(train, bundle.models, opts, Rng(a.common.seed).substream("partition"));

    if (learned.scan.graph.num_edges() == 0) {
        log("warning: no permissible co-observed pairs; every expert forms its own group");
    }
    save_partition(learned.partition, out_path(a, "partition.json"));
    write_text(out_path(a, "violations.csv"), violations_csv(learned.scan.violations));

    json graph = graph_to_json(learned.graph);
    json stats = {{"n_vertices", learned.graph.num_vertices()},
                  {"n_edges", learned.graph.num_edges()},
                  {"n_violations", learned.scan.violations.size()},
                  {"n_groups", learned.partition.num_groups()},
                  {"objective", objective(learned.partition, learned.graph)}};
    if (!a.truth.empty()) {
        require_path(a.truth, "--truth");
        const Partition truth = load_partition(a.truth);
        const double ari = adjusted_rand_index(learned.partition, truth);
        const auto ratio = edge_ratio(learned.scan.graph, truth);
        stats["ari"] = ari;
        stats["edge_ratio"] = ratio.value;
        log("ARI " + fmt(ari) + ", edge ratio " + fmt(ratio.value));
    }
    graph["stats"] = std::move(stats);
    write_json(out_path(a, "graph.json"), graph);

    std::size_t singletons = 0;
    for (const auto& g : learned.partition.groups()) singletons += g.size() == 1 ? 1 : 0;
    log(std::to_string(learned.scan.violations.size()) + " violations, " +
        std::to_string(learned.graph.num_edges()) + " permissible pairs, " +
        std::to_string(learned.partition.num_groups()) + " groups (" + std::to_string(singletons) + " singletons)");
    return 0;
}

std::vector<double> parse_features(const std::string& text) {
    std::vector<double> x;
    std::stringstream in(text);
    std::string field;
    while (std::getline(in, field, ',')) {
        try {
            std::size_t used = 0;
            x.push_back(std::stod(field, &used));
            if (field.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(field);
        } catch (const std::exception&) {
            throw UsageError("--features entry '" + field + "' is not a number");
        }
    }
    return x;
}

int cmd_infer(const Args& a) {
    require(a.expert, "--expert");
    if (a.label < 0) throw UsageError("--label is required and must be non-negative");
    const ModelBundle bundle = load_model_dir(a.models);
    const ConditionalModel& observer = require_model(bundle.models, a.expert);
    if (static_cast<std::size_t>(a.label) >= observer.num_labels()) {
        throw UsageError("--label must lie in [0, " + std::to_string(observer.num_labels()) + ")");
    }

    std::vector<double> x;
    std::string sample_id;
    if (!a.sample.empty()) {
        require_path(a.data, "--data");
        const PanelDataset ds = load_dataset(a.data);
        auto it = std::find_if(ds.samples.begin(), ds.samples.end(), [&](const Sample& s) { return s.id == a.sample; });
        if (it == ds.samples.end()) throw UsageError("sample '" + a.sample + "' not found in " + a.data);
        x = it->x;
        sample_id = it->id;
    } else {
        require(a.features, "--features or --sample");
        x = parse_features(a.features);
    }
    if (x.size() != observer.dimension()) {
        throw UsageError("expected " + std::to_string(observer.dimension()) + " features, got " +
                         std::to_string(x.size()));
    }

    Partition partition;
    if (!a.partition.empty()) {
        require_path(a.partition, "--partition");
        partition = load_partition(a.partition);
    }
    std::vector<ExpertId> targets;
    if (a.target == "all") {
        for (const auto& [id, m] : bundle.models) {
            if (id != a.expert) targets.push_back(id);
        }
    } else {
        require_model(bundle.models, a.target);
        if (a.target == a.expert) throw UsageError("--target must differ from --expert");
        targets.push_back(a.target);
    }
    // Experts missing from the partition are treated as singletons.
    std::vector<std::vector<ExpertId>> groups = partition.groups();
    for (const auto& [id, m] : bundle.models) {
        if (!partition.contains(id)) groups.push_back({id});
    }
    const Partition full(std::move(groups));

    const Rng root = Rng(a.common.seed).substream("infer");
    json out_targets = json::array();
    for (const auto& t : targets) {
        Rng stream = root.substream(t);
        const auto est = counterfactual_distribution({x, a.expert, static_cast<Label>(a.label), t}, full,
                                                     bundle.models, a.common.T, stream);
        out_targets.push_back({{"expert", t},
                               {"same_group", full.same_group(a.expert, t)},
                               {"exact", est.exact},
                               {"argmax", counterfactual_argmax(est)},
                               {"distribution", est.dist}});
    }
    json out = {{"observer", a.expert}, {"observed_label", a.label}, {"samples", a.common.T}, {"features", x}};
    if (!sample_id.empty()) out["sample_id"] = sample_id;
    out["targets"] = std::move(out_targets);
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_eval(const Args& a) {
    require_path(a.data, "--data");
    const PanelDataset test = load_dataset(a.data);
    const std::set<std::string> names(a.predictors.begin(), a.predictors.end());
    for (const auto& name : names) {
        if (name != "siscm" && name != "gnb" && name != "gnb_cnb" && name != "oracle") {
            throw UsageError("unknown predictor '" + name + "' (expected siscm, gnb, gnb_cnb or oracle)");
        }
    }
    Partition partition = Partition::singletons(test.roster);
    if (!a.partition.empty()) {
        require_path(a.partition, "--partition");
        partition = load_partition(a.partition);
    } else if (names.count("siscm")) {
        throw UsageError("--partition is required for the siscm predictor");
    }
    ModelBundle bundle;
    if (names.size() > 1 || !names.count("oracle")) bundle = load_model_dir(a.models);

    EvalOptions opts;
    opts.threads = a.common.threads;
    opts.rng = Rng(a.common.seed).substream("eval");
    for (const auto& name : a.predictors) {
        std::unique_ptr<Predictor> predictor;
        if (name == "siscm") {
            predictor = std::make_unique<SiScmPredictor>(bundle.models, partition, a.common.T);
        } else if (name == "gnb") {
            predictor = std::make_unique<ModelArgmaxPredictor>(bundle.models);
        } else if (name == "gnb_cnb") {
            if (bundle.cnb.empty()) throw UsageError("model directory has no CNB tables; produce it with 'siscm train'");
            predictor = std::make_unique<GnbCnbPredictor>(bundle.models, bundle.cnb);
        } else {
            predictor = std::make_unique<FunctionPredictor>([&test](const PairQuery& q, Rng&) {
                auto it = std::find_if(test.samples.begin(), test.samples.end(),
                                       [&](const Sample& s) { return s.x.data() == q.x.data(); });
                std::vector<Label> out;
                for (const auto& t : q.targets) out.push_back(*it->label_of(test.expert_index(t)));
                return out;
            });
        }
        const EvalReport report = evaluate(test, *predictor, partition, opts);
        write_report(report, out_path(a, name));
        auto pct = [](std::optional<double> v) { return v ? fmt(100.0 * *v, 1) + "%" : std::string("n/a"); };
        log(name + ": overall " + pct(report.overall_accuracy()) + ", same group " +
            pct(report.scenario_accuracy(kSameGroup)) + ", cross group " + pct(report.scenario_accuracy(kCrossGroup)) +
            " over " + std::to_string(report.n_predictions()) + " predictions");
    }
    return 0;
}

int cmd_bench(const Args& a) {
    if (a.m_grid.empty() || a.s_grid.empty()) throw UsageError("--m-grid and --s-grid must not be empty");
    if (a.replicates == 0) throw UsageError("--replicates must be at least 1");
    if (a.cf_samples == 0) throw UsageError("--cf-samples must be at least 1");
    BenchOptions opts;
    opts.synth = a.synth.config(0);
    opts.synth.n_train = a.m_grid.front();
    opts.synth.sparsity = a.s_grid.front();
    for (auto m : a.m_grid) {
        for (double s : a.s_grid) {
            SyntheticConfig probe = opts.synth;
            probe.n_train = m;
            probe.sparsity = s;
            probe.validate();
        }
    }
    opts.partition.slack = a.common.slack;
    opts.partition.restarts = a.common.restarts;
    opts.partition.weights = {a.common.t_weights, parse_loss(a.loss), a.common.threads};
    opts.cf_samples = a.cf_samples;
    opts.fit_gnb = a.fit_gnb;
    opts.threads = a.common.threads;

    std::string csv = bench_csv_header();
    for (auto m : a.m_grid) {
        for (double s : a.s_grid) {
            for (std::size_t r = 0; r < a.replicates; ++r) {
                const BenchCellResult cell = run_bench_cell(opts, m, s, r, a.common.seed);
                csv += bench_csv_row(cell);
                log("m=" + std::to_string(m) + " s=" + format_double(s) + " rep=" + std::to_string(r) + ": ARI " +
                    fmt(cell.ari) + ", edge ratio " + fmt(cell.edge_ratio) + ", loss recovered " +
                    fmt(cell.loss_recovered) + " / truth " + fmt(cell.loss_truth) + " / independent " +
                    fmt(cell.loss_independent));
            }
        }
    }
    write_text(out_path(a, "grid.csv"), csv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Counterfactual inference of expert predictions with a Gumbel-Max SI-SCM"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", "siscm 1.0.0");

    Args a;
    ConfigBinder cfg;
    cfg.set_root(&app);
    Common& c = a.common;
    cfg.bind(&app, "--seed", c.seed, "Master random seed", "seed");
    app.add_option("--config", c.config, "JSON file with option values (flags take precedence)");
    cfg.bind(&app, "--threads", c.threads, "Worker threads; outputs do not depend on it", "threads");
    cfg.bind(&app, "--out-dir", c.out_dir, "Directory for output files", "out_dir");
    cfg.bind(&app, "-T,--samples", c.T, "Posterior samples per counterfactual query", "T");
    cfg.bind(&app, "--t-weights", c.t_weights, "Posterior samples per edge-weight estimate", "t_weights");
    cfg.bind(&app, "--restarts", c.restarts, "Greedy partitioning restarts", "restarts");
    cfg.bind(&app, "--alpha", c.alpha, "CNB additive smoothing", "alpha");
    cfg.bind(&app, "--slack", c.slack, "Multiplicative slack of the violation test", "slack");
    cfg.bind(&app, "--smoothing", c.smoothing, "GNB variance smoothing", "smoothing");

    auto add_synth_options = [&](CLI::App* sub) {
        SynthArgs& s = a.synth;
        cfg.bind(sub, "--n-experts", s.n_experts, "Number of experts", "n_experts");
        cfg.bind(sub, "--group-sizes", s.group_sizes, "Planted group sizes", "group_sizes")->delimiter(',');
        cfg.bind(sub, "-k,--labels", s.k, "Number of labels", "k");
        cfg.bind(sub, "-d,--features", s.d, "Feature dimension", "d");
        cfg.bind(sub, "--n-test", s.n_test, "Held-out samples", "n_test");
        cfg.bind(sub, "--test-sparsity", s.test_sparsity, "Held-out sparsity (0 keeps it fully observed)",
                 "test_sparsity");
    };

    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic panel with a planted partition");
    add_synth_options(synth);
    cfg.bind(synth, "--n-train", a.synth.n_train, "Training samples", "n_train");
    cfg.bind(synth, "--sparsity", a.synth.sparsity, "Training sparsity s in (0, 1)", "sparsity");

    CLI::App* prep = app.add_subcommand("preprocess", "Filter a panel and split it into train and test");
    cfg.bind(prep, "--data", a.data, "Dataset directory or dataset.jsonl", "data");
    cfg.bind(prep, "--test-data", a.test_data, "Held-out dataset (otherwise a random split)", "test_data");
    cfg.bind(prep, "--test-fraction", a.test_fraction, "Held-out fraction of a random split", "test_fraction");
    cfg.bind(prep, "--train-min", a.train_min, "Minimum training predictions per expert", "train_min");
    cfg.bind(prep, "--test-min", a.test_min, "Minimum test predictions per expert", "test_min");
    cfg.bind_flag(prep, "--keep-agreement", a.keep_agreement, "Keep samples on which every expert agrees",
                  "keep_agreement");

    CLI::App* train = app.add_subcommand("train", "Fit per-expert GNB models and CNB tables");
    cfg.bind(train, "--data", a.data, "Training dataset", "data");
    cfg.bind_flag(train, "--allow-missing-classes", a.allow_missing_classes,
                  "Give unseen classes zero prior instead of failing", "allow_missing_classes");

    CLI::App* part = app.add_subcommand("partition", "Learn the expert partition");
    cfg.bind(part, "--data", a.data, "Training dataset", "data");
    cfg.bind(part, "--models", a.models, "Model directory", "models");
    cfg.bind(part, "--truth", a.truth, "Planted partition to score against", "truth");
    cfg.bind(part, "--loss", a.loss, "Edge-weight loss: zero_one or nll", "loss");

    CLI::App* infer = app.add_subcommand("infer", "Counterfactual predictions given one observed label");
    cfg.bind(infer, "--models", a.models, "Model directory", "models");
    cfg.bind(infer, "--partition", a.partition, "Partition file (missing experts are singletons)", "partition");
    cfg.bind(infer, "--expert", a.expert, "Observed expert", "expert");
    cfg.bind(infer, "--label", a.label, "Observed label index", "label");
    cfg.bind(infer, "--features", a.features, "Comma-separated feature vector", "features");
    cfg.bind(infer, "--data", a.data, "Dataset holding --sample", "data");
    cfg.bind(infer, "--sample", a.sample, "Take the features of this sample id", "sample");
    cfg.bind(infer, "--target", a.target, "Target expert or 'all'", "target");

    CLI::App* eval = app.add_subcommand("eval", "Score predictors on a held-out panel");
    cfg.bind(eval, "--data", a.data, "Held-out dataset", "data");
    cfg.bind(eval, "--models", a.models, "Model directory", "models");
    cfg.bind(eval, "--partition", a.partition, "Partition file", "partition");
    cfg.bind(eval, "--predictor", a.predictors, "siscm, gnb, gnb_cnb or oracle (repeatable)", "predictor")
        ->delimiter(',');

    CLI::App* bench = app.add_subcommand("bench", "Partition recovery grid on synthetic panels");
    add_synth_options(bench);
    cfg.bind(bench, "--m-grid", a.m_grid, "Training sizes", "m_grid")->delimiter(',');
    cfg.bind(bench, "--s-grid", a.s_grid, "Sparsity levels", "s_grid")->delimiter(',');
    cfg.bind(bench, "--replicates", a.replicates, "Replicates per grid cell", "replicates");
    cfg.bind(bench, "--cf-samples", a.cf_samples, "Posterior samples per held-out query", "cf_samples");
    cfg.bind(bench, "--loss", a.loss, "Edge-weight loss: zero_one or nll", "loss");
    cfg.bind_flag(bench, "--fit-gnb", a.fit_gnb, "Fit GNB models instead of using the truth models", "fit_gnb");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const CLI::App* active = app.get_subcommands().front();
    try {
        if (!c.config.empty()) {
            if (!fs::exists(c.config)) throw UsageError("config file '" + c.config + "' does not exist");
            json doc;
            try {
                doc = read_json(c.config);
            } catch (const Error& e) {
                throw UsageError(e.what());
            }
            cfg.apply(doc, active);
        }
        c.validate();
        if (active == synth) return cmd_synth(a);
        if (active == prep) return cmd_preprocess(a);
        if (active == train) return cmd_train(a);
        if (active == part) return cmd_partition(a);
        if (active == infer) return cmd_infer(a);
        if (active == eval) return cmd_eval(a);
        if (active == bench) return cmd_bench(a);
    } catch (const std::exception& e) {
        log("error: " + std::string(e.what()));
        return exit_code(e);
    }
    return 1;
}
