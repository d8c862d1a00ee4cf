#pragma once

// End-to-end helpers shared by the CLI and the acceptance suite.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "hapmetric/boost_metric.hpp"
#include "hapmetric/cqfb.hpp"
#include "hapmetric/dataio.hpp"
#include "hapmetric/evaluation.hpp"
#include "hapmetric/feature_set.hpp"
#include "hapmetric/random.hpp"

namespace hapmetric {

struct ExtractionConfig {
    FilterBankConfig bank;
    IntegrationMode mode = IntegrationMode::Full;
    bool log_energy = false;
};

/// load -> DFT321 -> truncate at f_max -> CQFB, one row per dataset entry.
inline FeatureSet extract_dataset_features(const Dataset& dataset, const ExtractionConfig& config) {
    const FilterBank bank = build_filter_bank(config.bank);
    std::vector<FeatureVector> rows;
    rows.reserve(dataset.size());
    for (const auto& entry : dataset.entries) {
        try {
            FeatureVector fv = signal_features(entry.signal, bank, config.mode);
            if (config.log_energy) apply_log_energy(fv);
            fv.label = entry.label;
            rows.push_back(std::move(fv));
        } catch (const InvalidInput& e) {
            throw InvalidInput(entry.source + ": " + e.what());
        }
    }
    return FeatureSet::from_vectors(rows);
}

enum class Classifier { Knn, NaiveBayes };

inline Classifier parse_classifier(const std::string& text) {
    if (text == "knn") return Classifier::Knn;
    if (text == "nb") return Classifier::NaiveBayes;
    throw InvalidInput("unknown classifier '" + text + "' (expected knn|nb)");
}

/// Naive Bayes has no notion of distance, so a learned metric is applied by
/// classifying in the embedded space L^T x.
inline std::vector<std::string> classify(const FeatureSet& train, const Eigen::MatrixXd& test,
                                         Classifier classifier, std::size_t k, const Metric& metric) {
    if (classifier == Classifier::Knn) return knn_classify(train, test, k, metric);
    if (metric.is_euclidean()) return gaussian_nb(train, test);
    const EmbeddingTransform embed = embedding_transform(*metric.matrix(), 0.0);
    FeatureSet projected{train.labels, embed.apply_rows(train.values)};
    return gaussian_nb(projected, embed.apply_rows(test));
}

/// Keeps `per_class` seeded random samples of every class (all of a class
/// when it has fewer). per_class == 0 keeps everything.
inline FeatureSet sample_representatives(const FeatureSet& features, std::size_t per_class, std::uint64_t seed) {
    if (per_class == 0) return features;
    Rng rng(seed);
    std::vector<std::size_t> keep;
    for (const auto& [label, rows] : features.indices_by_class()) {
        const std::size_t take = std::min(per_class, rows.size());
        for (std::size_t pick : rng.sample_without_replacement(rows.size(), take)) keep.push_back(rows[pick]);
    }
    std::sort(keep.begin(), keep.end());
    return features.subset(keep);
}

}  // namespace hapmetric
