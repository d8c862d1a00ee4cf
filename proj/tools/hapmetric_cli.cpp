// hapmetric command-line driver.
//
//   hapmetric synth SPEC OUT_DIR
//   hapmetric extract DATASET_DIR OUT_CSV
//   hapmetric train FEATURES_CSV OUT_MODEL
//   hapmetric evaluate TRAIN TEST [--out CONFUSION_CSV]
//   hapmetric discriminate FEATURES_CSV OUT_CSV
//
// Exit status: 0 success, 1 computational failure, 2 usage or I/O error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hapmetric/hapmetric.hpp"

namespace fs = std::filesystem;
using namespace hapmetric;

namespace {

/// Everything a subcommand may need. Defaults, then the config file, then flags.
struct PipelineConfig {
    ExtractionConfig extraction;
    bool standardize = false;
    TrainConfig train;
    std::size_t impostors_per_pair = 1;
    std::size_t k = 3;
    std::string classifier = "knn";
    std::string metric = "euclidean";
    std::uint64_t seed = 0;
    std::size_t representatives = 0;
};

/// Flag values; unset options leave the config untouched.
struct Overrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha;
    std::optional<std::size_t> bins;
    std::optional<double> fmax;
    std::optional<std::string> mode;
    std::optional<std::string> metric;
    std::optional<std::size_t> k;
    std::optional<std::string> classifier;
    std::optional<double> regularizer;
    std::optional<std::size_t> iterations;
    std::optional<std::size_t> impostors;
    std::optional<std::size_t> representatives;
    bool log_energy = false;
    bool standardize = false;
};

PipelineConfig load_pipeline_config(const Overrides& o) {
    PipelineConfig cfg;
    if (!o.config_path.empty()) {
        const KeyValues kv = KeyValues::load(o.config_path);
        kv.require_known({"bins", "alpha", "fmax", "mode", "log_energy", "standardize", "regularizer",
                          "max_iterations", "convergence_tol", "line_search_tol", "impostors_per_pair", "k",
                          "classifier", "metric", "seed", "representatives"});
        auto& bank = cfg.extraction.bank;
        bank.n_bins = kv.get_unsigned("bins", bank.n_bins);
        bank.alpha = kv.get_double("alpha", bank.alpha);
        bank.f_max = kv.get_double("fmax", bank.f_max);
        cfg.extraction.mode = parse_integration_mode(kv.get_string("mode", to_string(cfg.extraction.mode)));
        cfg.extraction.log_energy = kv.get_bool("log_energy", cfg.extraction.log_energy);
        cfg.standardize = kv.get_bool("standardize", cfg.standardize);
        cfg.train.regularizer = kv.get_double("regularizer", cfg.train.regularizer);
        cfg.train.max_iterations = kv.get_unsigned("max_iterations", cfg.train.max_iterations);
        cfg.train.convergence_tol = kv.get_double("convergence_tol", cfg.train.convergence_tol);
        cfg.train.line_search_tol = kv.get_double("line_search_tol", cfg.train.line_search_tol);
        cfg.impostors_per_pair = kv.get_unsigned("impostors_per_pair", cfg.impostors_per_pair);
        cfg.k = kv.get_unsigned("k", cfg.k);
        cfg.classifier = kv.get_string("classifier", cfg.classifier);
        cfg.metric = kv.get_string("metric", cfg.metric);
        cfg.seed = kv.get_unsigned("seed", cfg.seed);
        cfg.representatives = kv.get_unsigned("representatives", cfg.representatives);
    }
    if (o.seed) cfg.seed = *o.seed;
    if (o.alpha) cfg.extraction.bank.alpha = *o.alpha;
    if (o.bins) cfg.extraction.bank.n_bins = *o.bins;
    if (o.fmax) cfg.extraction.bank.f_max = *o.fmax;
    if (o.mode) cfg.extraction.mode = parse_integration_mode(*o.mode);
    if (o.metric) cfg.metric = *o.metric;
    if (o.k) cfg.k = *o.k;
    if (o.classifier) cfg.classifier = *o.classifier;
    if (o.regularizer) cfg.train.regularizer = *o.regularizer;
    if (o.iterations) cfg.train.max_iterations = *o.iterations;
    if (o.impostors) cfg.impostors_per_pair = *o.impostors;
    if (o.representatives) cfg.representatives = *o.representatives;
    if (o.log_energy) cfg.extraction.log_energy = true;
    if (o.standardize) cfg.standardize = true;
    cfg.train.rng_seed = cfg.seed;

    cfg.extraction.bank.validate();
    cfg.train.validate();
    parse_classifier(cfg.classifier);
    return cfg;
}

/// Writes through a sibling temporary file so a failed command leaves nothing behind.
void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    fs::path tmp = path;
    tmp += ".partial";
    try {
        {
            std::ofstream out(tmp);
            if (!out) throw IoError("cannot write '" + path.string() + "'");
            body(out);
            if (!out) throw IoError("write failed for '" + path.string() + "'");
        }
        fs::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
}

/// Standardization is fitted on `reference` (the training set) and applied to both.
void maybe_standardize(const PipelineConfig& cfg, FeatureSet& reference, std::vector<FeatureSet*> others) {
    if (!cfg.standardize) return;
    const Standardizer z = Standardizer::fit(reference.values);
    for (FeatureSet* f : others) f->values = z.apply(f->values);
    reference.values = z.apply(reference.values);
}

MahalanobisModel train_on(const FeatureSet& features, const PipelineConfig& cfg) {
    const auto triplets = generate_triplets(features, cfg.impostors_per_pair, cfg.seed);
    MahalanobisModel model = train_metric(triplets, features, cfg.train);
    std::cout << "triplets=" << triplets.size() << " terms=" << model.terms().size()
              << " final_loss=" << detail::format_double(model.loss_history().back(), 10)
              << " stop_reason=" << to_string(model.stop_reason) << '\n';
    if (model.power_iteration_misses > 0) {
        std::cerr << "warning: power iteration hit its iteration cap in " << model.power_iteration_misses
                  << " round(s)\n";
    }
    return model;
}

/// "euclidean", "boost" (train on `train` now) or a model file path.
Metric resolve_metric(const PipelineConfig& cfg, const FeatureSet& train) {
    if (cfg.metric == "euclidean") return Metric::euclidean();
    if (cfg.metric == "boost") return Metric::learned(train_on(train, cfg));
    const MahalanobisModel model = read_model(fs::path(cfg.metric));
    if (model.dim() != train.dim()) {
        throw InvalidInput("model '" + cfg.metric + "' has dimension " + std::to_string(model.dim()) +
                           " but features have " + std::to_string(train.dim()));
    }
    return Metric::learned(model);
}

std::string percent(double fraction_or_percent, bool already_percent = false) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", already_percent ? fraction_or_percent : 100.0 * fraction_or_percent);
    return buf;
}

std::pair<std::size_t, std::size_t> parse_sweep(const std::string& text) {
    const auto dots = text.find("..");
    if (dots == std::string::npos) throw InvalidInput("--sweep-dims expects N1..N2, got '" + text + "'");
    const auto lo = detail::parse_unsigned(text.substr(0, dots), "--sweep-dims");
    const auto hi = detail::parse_unsigned(text.substr(dots + 2), "--sweep-dims");
    detail::require(lo >= 2 && lo <= hi, "--sweep-dims needs 2 <= N1 <= N2");
    return {lo, hi};
}

int cmd_synth(const std::string& spec_path, const fs::path& out_dir, const Overrides& o) {
    SynthSpec spec = parse_synth_spec(KeyValues::load(spec_path));
    if (o.seed) spec.rng_seed = *o.seed;
    if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
        throw IoError("output directory '" + out_dir.string() + "' exists and is not empty");
    }
    const Dataset ds = synth_corpus(spec);
    fs::path tmp = out_dir;
    tmp += ".partial";
    try {
        fs::remove_all(tmp);
        save_dataset(ds, tmp);
        if (fs::exists(out_dir)) fs::remove(out_dir);
        fs::rename(tmp, out_dir);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(tmp, ec);
        throw;
    }
    std::cout << "wrote " << ds.size() << " recordings in " << spec.effective_classes() << " classes to "
              << out_dir.string() << '\n';
    return 0;
}

int cmd_extract(const fs::path& dataset_dir, const fs::path& out_csv, const Overrides& o) {
    const PipelineConfig cfg = load_pipeline_config(o);
    const FeatureSet features = extract_dataset_features(load_dataset(dataset_dir), cfg.extraction);
    write_file(out_csv, [&](std::ostream& out) { write_feature_csv(out, features); });
    std::cout << "wrote " << features.size() << " x " << features.dim() << " features to " << out_csv.string()
              << '\n';
    return 0;
}

int cmd_train(const fs::path& features_csv, const fs::path& out_model, const Overrides& o) {
    const PipelineConfig cfg = load_pipeline_config(o);
    FeatureSet features = sample_representatives(read_feature_csv(features_csv), cfg.representatives, cfg.seed);
    maybe_standardize(cfg, features, {});
    const MahalanobisModel model = train_on(features, cfg);
    write_file(out_model, [&](std::ostream& out) { write_model(out, model); });
    return 0;
}

int cmd_evaluate(const fs::path& train_path, const fs::path& test_path, const std::string& out,
                 const std::string& sweep, const Overrides& o) {
    PipelineConfig cfg = load_pipeline_config(o);
    const Classifier classifier = parse_classifier(cfg.classifier);

    auto run = [&](FeatureSet train, FeatureSet test) {
        train = sample_representatives(train, cfg.representatives, cfg.seed);
        maybe_standardize(cfg, train, {&test});
        const Metric metric = resolve_metric(cfg, train);
        const auto predicted = classify(train, test.values, classifier, cfg.k, metric);
        return confusion_matrix(test.labels, predicted, train.class_ids());
    };

    if (sweep.empty()) {
        const ConfusionMatrix cm = run(read_feature_csv(train_path), read_feature_csv(test_path));
        std::cout << "accuracy=" << percent(accuracy(cm)) << '\n';
        if (!out.empty()) write_file(out, [&](std::ostream& s) { cm.write_csv(s); });
        return 0;
    }

    // sweep mode: TRAIN and TEST are dataset directories, re-extracted per dimension
    if (cfg.metric != "euclidean" && cfg.metric != "boost") {
        throw InvalidInput("--sweep-dims supports --metric euclidean or boost, not a fixed model file");
    }
    const auto [lo, hi] = parse_sweep(sweep);
    const Dataset train_ds = load_dataset(train_path);
    const Dataset test_ds = load_dataset(test_path);
    std::vector<std::pair<std::size_t, double>> rows;
    for (std::size_t n = lo; n <= hi; ++n) {
        ExtractionConfig ex = cfg.extraction;
        ex.bank.n_bins = n;
        const double acc = accuracy(run(extract_dataset_features(train_ds, ex), extract_dataset_features(test_ds, ex)));
        std::cout << "bins=" << n << " accuracy=" << percent(acc) << '\n';
        rows.emplace_back(n, acc);
    }
    if (!out.empty()) {
        write_file(out, [&](std::ostream& s) {
            s << "bins,accuracy\n";
            for (const auto& [n, acc] : rows) s << n << ',' << detail::format_double(acc) << '\n';
        });
    }
    return 0;
}

int cmd_discriminate(const fs::path& features_csv, const fs::path& out_csv, const Overrides& o) {
    const PipelineConfig cfg = load_pipeline_config(o);
    FeatureSet features = sample_representatives(read_feature_csv(features_csv), cfg.representatives, cfg.seed);
    maybe_standardize(cfg, features, {});
    const Metric metric = resolve_metric(cfg, features);
    const DissimilarityMatrix dm = dissimilarity_matrix(features, metric);
    write_file(out_csv, [&](std::ostream& out) { dm.write_csv(out); });
    std::cout << "discrimination_error=" << percent(discrimination_error(dm), true) << '\n';
    return 0;
}

void add_extraction_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--alpha", o.alpha, "filter-bank growth factor (1 = linear spacing)");
    cmd->add_option("--bins", o.bins, "number of CQFB bins N");
    cmd->add_option("--fmax", o.fmax, "analysis bandwidth in Hz");
    cmd->add_option("--mode", o.mode, "integration mode: full|bounded");
    cmd->add_flag("--log-energy", o.log_energy, "store log(1 + a_j) instead of raw energies");
}

void add_training_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--regularizer", o.regularizer, "trace weight v");
    cmd->add_option("--iterations", o.iterations, "maximum boosting rounds");
    cmd->add_option("--impostors", o.impostors, "impostors sampled per (anchor, positive) pair");
}

void add_feature_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_flag("--standardize", o.standardize, "z-score features using the training/reference set");
    cmd->add_option("--representatives", o.representatives,
                    "keep this many seeded random samples per class of the training/reference set (0 = all)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CQFB haptic texture features and boosted Mahalanobis metric learning"};
    app.require_subcommand(1);
    Overrides o;
    app.add_option("--config", o.config_path, "key = value pipeline config file");
    app.add_option("--seed", o.seed, "random seed");

    std::string a, b, out, sweep;

    auto* synth = app.add_subcommand("synth", "generate a seeded synthetic dataset");
    synth->add_option("spec", a, "synthesis spec file")->required();
    synth->add_option("out_dir", b, "output dataset directory")->required();

    auto* extract = app.add_subcommand("extract", "extract CQFB features from a dataset directory");
    extract->add_option("dataset", a, "dataset root (<class>/<sample>.csv)")->required();
    extract->add_option("out_csv", b, "output feature CSV")->required();
    add_extraction_flags(extract, o);

    auto* train = app.add_subcommand("train", "learn a Mahalanobis metric from a feature CSV");
    train->add_option("features", a, "training feature CSV")->required();
    train->add_option("out_model", b, "output model file")->required();
    add_training_flags(train, o);
    add_feature_flags(train, o);

    auto* evaluate = app.add_subcommand("evaluate", "classify a test set and report accuracy");
    evaluate->add_option("train", a, "training feature CSV (dataset dir with --sweep-dims)")->required();
    evaluate->add_option("test", b, "test feature CSV (dataset dir with --sweep-dims)")->required();
    evaluate->add_option("--out", out, "confusion CSV (sweep table with --sweep-dims)");
    evaluate->add_option("--metric", o.metric, "euclidean|boost|<model file>");
    evaluate->add_option("--k", o.k, "neighbors for k-NN");
    evaluate->add_option("--classifier", o.classifier, "knn|nb");
    evaluate->add_option("--sweep-dims", sweep, "re-extract and evaluate for each N in N1..N2");
    add_extraction_flags(evaluate, o);
    add_training_flags(evaluate, o);
    add_feature_flags(evaluate, o);

    auto* discriminate = app.add_subcommand("discriminate", "pairwise class dissimilarity indices");
    discriminate->add_option("features", a, "feature CSV")->required();
    discriminate->add_option("out_csv", b, "output dissimilarity CSV")->required();
    discriminate->add_option("--metric", o.metric, "euclidean|boost|<model file>");
    add_training_flags(discriminate, o);
    add_feature_flags(discriminate, o);

    for (auto* cmd : {synth, extract, train, evaluate, discriminate}) {
        cmd->add_option("--config", o.config_path, "key = value pipeline config file");
        cmd->add_option("--seed", o.seed, "random seed");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return cmd_synth(a, b, o);
        if (*extract) return cmd_extract(a, b, o);
        if (*train) return cmd_train(a, b, o);
        if (*evaluate) return cmd_evaluate(a, b, out, sweep, o);
        if (*discriminate) return cmd_discriminate(a, b, o);
    } catch (const ComputationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
