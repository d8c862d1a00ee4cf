#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "hapmetric/cqfb.hpp"
#include "hapmetric/error.hpp"

namespace hapmetric {

/// Labeled feature matrix: one row per sample.
struct FeatureSet {
    std::vector<std::string> labels;
    Eigen::MatrixXd values;

    std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }

    static FeatureSet from_vectors(const std::vector<FeatureVector>& vectors) {
        FeatureSet set;
        if (vectors.empty()) return set;
        const std::size_t dim = vectors.front().energies.size();
        set.values.resize(static_cast<Eigen::Index>(vectors.size()), static_cast<Eigen::Index>(dim));
        set.labels.reserve(vectors.size());
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            detail::require(vectors[i].energies.size() == dim, "feature set: inconsistent dimensions");
            for (std::size_t j = 0; j < dim; ++j) {
                set.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    vectors[i].energies[j];
            }
            set.labels.push_back(vectors[i].label.value_or(""));
        }
        return set;
    }

    /// Sorted distinct labels; the position of a label is its class id.
    std::vector<std::string> class_ids() const {
        std::vector<std::string> ids = labels;
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return ids;
    }

    /// Row indices grouped by label, keyed in class-id order.
    std::map<std::string, std::vector<std::size_t>> indices_by_class() const {
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
        return groups;
    }

    FeatureSet subset(const std::vector<std::size_t>& rows) const {
        FeatureSet out;
        out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
        out.labels.reserve(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            out.values.row(static_cast<Eigen::Index>(r)) = values.row(static_cast<Eigen::Index>(rows[r]));
            out.labels.push_back(labels[rows[r]]);
        }
        return out;
    }

    void check_finite() const {
        detail::require(values.allFinite(), "feature set: non-finite feature value");
    }
};

/// Per-dimension z-scoring fitted on a reference set.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& reference) {
        detail::require(reference.rows() >= 1, "standardizer: empty reference set");
        Standardizer s;
        s.mean = reference.colwise().mean().transpose();
        s.scale.resize(reference.cols());
        for (Eigen::Index j = 0; j < reference.cols(); ++j) {
            const double var = (reference.col(j).array() - s.mean(j)).square().mean();
            const double sd = std::sqrt(var);
            s.scale(j) = sd > 0.0 ? sd : 1.0;
        }
        return s;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& values) const {
        detail::require(values.cols() == mean.size(), "standardizer: dimension mismatch");
        Eigen::MatrixXd out = values.rowwise() - mean.transpose();
        return out.array().rowwise() / scale.transpose().array();
    }
};

}  // namespace hapmetric
