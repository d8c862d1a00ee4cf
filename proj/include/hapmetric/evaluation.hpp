#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "hapmetric/boost_metric.hpp"
#include "hapmetric/error.hpp"
#include "hapmetric/feature_set.hpp"

namespace hapmetric {

/// Majority vote among the k nearest training rows. Vote ties go to the class
/// with the smallest summed neighbor distance, then to the smaller class id.
/// Equidistant neighbors are ordered by training row.
inline std::vector<std::string> knn_classify(const FeatureSet& train, const Eigen::MatrixXd& test,
                                             std::size_t k, const Metric& metric) {
    detail::require(train.size() > 0, "knn: empty training set");
    detail::require(k >= 1 && k <= train.size(), "knn: k must be in [1, |train|]");
    detail::require(test.rows() == 0 || static_cast<std::size_t>(test.cols()) == train.dim(),
                    "knn: test dimension does not match training dimension");
    metric.check_dim(train.dim());

    std::vector<std::string> predictions;
    predictions.reserve(static_cast<std::size_t>(test.rows()));
    std::vector<std::pair<double, std::size_t>> ranked(train.size());
    for (Eigen::Index q = 0; q < test.rows(); ++q) {
        const Eigen::VectorXd query = test.row(q).transpose();
        for (std::size_t r = 0; r < train.size(); ++r) {
            ranked[r] = {metric(query, train.values.row(static_cast<Eigen::Index>(r)).transpose()), r};
        }
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end());

        struct Tally {
            std::size_t votes = 0;
            double summed = 0.0;
        };
        std::map<std::string, Tally> tallies;  // ordered by class id
        for (std::size_t n = 0; n < k; ++n) {
            auto& t = tallies[train.labels[ranked[n].second]];
            ++t.votes;
            t.summed += ranked[n].first;
        }
        auto best = tallies.begin();
        for (auto it = std::next(tallies.begin()); it != tallies.end(); ++it) {
            if (it->second.votes > best->second.votes ||
                (it->second.votes == best->second.votes && it->second.summed < best->second.summed)) {
                best = it;
            }
        }
        predictions.push_back(best->first);
    }
    return predictions;
}

/// Per-class, per-dimension Gaussian likelihoods; priors are class
/// frequencies (uniform for balanced data). Ties go to the lower class id.
class GaussianNaiveBayes {
public:
    static constexpr double kVarianceFloor = 1e-12;

    explicit GaussianNaiveBayes(const FeatureSet& train) {
        detail::require(train.size() > 0, "naive bayes: empty training set");
        const auto groups = train.indices_by_class();
        const double total = static_cast<double>(train.size());
        for (const auto& [label, rows] : groups) {
            detail::require(rows.size() >= 2,
                            "naive bayes: class '" + label + "' has fewer than 2 samples");
            const FeatureSet members = train.subset(rows);
            ClassModel cm;
            cm.label = label;
            cm.log_prior = std::log(static_cast<double>(rows.size()) / total);
            cm.mean = members.values.colwise().mean().transpose();
            cm.variance = ((members.values.rowwise() - cm.mean.transpose()).array().square().colwise().sum() /
                           static_cast<double>(rows.size()))
                              .transpose()
                              .max(kVarianceFloor)
                              .matrix();
            classes_.push_back(std::move(cm));
        }
        dim_ = train.dim();
    }

    /// Log joint log p(c) + sum_d log N(x_d; mu_cd, var_cd) per class, in class-id order.
    std::vector<double> log_posteriors(const Eigen::VectorXd& x) const {
        detail::require(static_cast<std::size_t>(x.size()) == dim_, "naive bayes: dimension mismatch");
        std::vector<double> out;
        out.reserve(classes_.size());
        for (const auto& cm : classes_) {
            const Eigen::ArrayXd diff = x - cm.mean;
            const double ll = -0.5 * ((2.0 * std::numbers::pi * cm.variance.array()).log() +
                                      diff.square() / cm.variance.array())
                                         .sum();
            out.push_back(cm.log_prior + ll);
        }
        return out;
    }

    std::string predict(const Eigen::VectorXd& x) const {
        const auto scores = log_posteriors(x);
        std::size_t best = 0;
        for (std::size_t c = 1; c < scores.size(); ++c) {
            if (scores[c] > scores[best]) best = c;
        }
        return classes_[best].label;
    }

private:
    struct ClassModel {
        std::string label;
        double log_prior = 0.0;
        Eigen::VectorXd mean;
        Eigen::VectorXd variance;
    };
    std::vector<ClassModel> classes_;
    std::size_t dim_ = 0;
};

inline std::vector<std::string> gaussian_nb(const FeatureSet& train, const Eigen::MatrixXd& test) {
    const GaussianNaiveBayes model(train);
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(test.rows()));
    for (Eigen::Index q = 0; q < test.rows(); ++q) out.push_back(model.predict(test.row(q).transpose()));
    return out;
}

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::vector<std::string> class_ids;
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

    std::int64_t total() const { return counts.sum(); }

    void write_csv(std::ostream& out) const {
        out << "true\\predicted";
        for (const auto& id : class_ids) out << ',' << id;
        out << '\n';
        for (Eigen::Index r = 0; r < counts.rows(); ++r) {
            out << class_ids[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < counts.cols(); ++c) out << ',' << counts(r, c);
            out << '\n';
        }
    }
};

/// Class ids default to the sorted union of true and predicted labels.
inline ConfusionMatrix confusion_matrix(const std::vector<std::string>& truth,
                                        const std::vector<std::string>& predicted,
                                        std::vector<std::string> class_ids = {}) {
    detail::require(truth.size() == predicted.size(), "confusion: label vectors differ in length");
    if (class_ids.empty()) {
        class_ids = truth;
        class_ids.insert(class_ids.end(), predicted.begin(), predicted.end());
        std::sort(class_ids.begin(), class_ids.end());
        class_ids.erase(std::unique(class_ids.begin(), class_ids.end()), class_ids.end());
    }
    std::map<std::string, Eigen::Index> index;
    for (std::size_t i = 0; i < class_ids.size(); ++i) index[class_ids[i]] = static_cast<Eigen::Index>(i);

    ConfusionMatrix cm;
    cm.class_ids = std::move(class_ids);
    const auto c = static_cast<Eigen::Index>(cm.class_ids.size());
    cm.counts.setZero(c, c);
    for (std::size_t n = 0; n < truth.size(); ++n) {
        const auto t = index.find(truth[n]);
        const auto p = index.find(predicted[n]);
        detail::require(t != index.end() && p != index.end(), "confusion: label outside class ids");
        ++cm.counts(t->second, p->second);
    }
    return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
    const std::int64_t total = cm.total();
    detail::require(total > 0, "accuracy: empty confusion matrix");
    return static_cast<double>(cm.counts.trace()) / static_cast<double>(total);
}

/// p_bc = |S| / |C_bc|: over all anchors x_i, positives x_j (i != j) from
/// class b and impostors x_k from class c, the fraction with
/// d(x_i, x_j) < d(x_i, x_k) strictly.
inline double dissimilarity_index(const Eigen::MatrixXd& class_b, const Eigen::MatrixXd& class_c,
                                  const Metric& metric) {
    const auto nb = class_b.rows();
    const auto nc = class_c.rows();
    detail::require(nb >= 2, "dissimilarity index: class b needs at least 2 samples");
    detail::require(nc >= 1, "dissimilarity index: class c needs at least 1 sample");
    detail::require(class_b.cols() == class_c.cols(), "dissimilarity index: dimension mismatch");
    metric.check_dim(static_cast<std::size_t>(class_b.cols()));

    std::uint64_t satisfied = 0;
    std::vector<double> to_impostors(static_cast<std::size_t>(nc));
    for (Eigen::Index i = 0; i < nb; ++i) {
        const Eigen::VectorXd anchor = class_b.row(i).transpose();
        for (Eigen::Index k = 0; k < nc; ++k) {
            to_impostors[static_cast<std::size_t>(k)] = metric(anchor, class_c.row(k).transpose());
        }
        std::sort(to_impostors.begin(), to_impostors.end());
        for (Eigen::Index j = 0; j < nb; ++j) {
            if (j == i) continue;
            const double intra = metric(anchor, class_b.row(j).transpose());
            // impostors strictly farther than the positive
            const auto farther = to_impostors.end() -
                                 std::upper_bound(to_impostors.begin(), to_impostors.end(), intra);
            satisfied += static_cast<std::uint64_t>(farther);
        }
    }
    const double total = static_cast<double>(nb) * static_cast<double>(nb - 1) * static_cast<double>(nc);
    return static_cast<double>(satisfied) / total;
}

struct DissimilarityMatrix {
    std::vector<std::string> class_ids;
    Eigen::MatrixXd p;  ///< p(b, c); diagonal unused (stored as NaN)

    void write_csv(std::ostream& out) const {
        out << "class";
        for (const auto& id : class_ids) out << ',' << id;
        out << '\n';
        const auto old_precision = out.precision(12);
        for (Eigen::Index b = 0; b < p.rows(); ++b) {
            out << class_ids[static_cast<std::size_t>(b)];
            for (Eigen::Index c = 0; c < p.cols(); ++c) {
                out << ',';
                if (b != c) out << p(b, c);
            }
            out << '\n';
        }
        out.precision(old_precision);
    }
};

inline DissimilarityMatrix dissimilarity_matrix(const FeatureSet& features, const Metric& metric) {
    const auto groups = features.indices_by_class();
    detail::require(groups.size() >= 2, "dissimilarity matrix: at least 2 classes are required");
    DissimilarityMatrix dm;
    std::vector<Eigen::MatrixXd> members;
    for (const auto& [label, rows] : groups) {
        dm.class_ids.push_back(label);
        members.push_back(features.subset(rows).values);
    }
    const auto c = static_cast<Eigen::Index>(members.size());
    dm.p = Eigen::MatrixXd::Constant(c, c, std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index b = 0; b < c; ++b) {
        for (Eigen::Index o = 0; o < c; ++o) {
            if (b == o) continue;
            dm.p(b, o) = dissimilarity_index(members[static_cast<std::size_t>(b)],
                                             members[static_cast<std::size_t>(o)], metric);
        }
    }
    return dm;
}

/// Mean of (1 - p_bc) over ordered off-diagonal pairs, in percent.
inline double discrimination_error(const DissimilarityMatrix& dm) {
    const auto c = dm.p.rows();
    detail::require(c >= 2 && dm.p.cols() == c, "discrimination error: at least 2 classes are required");
    double sum = 0.0;
    for (Eigen::Index b = 0; b < c; ++b) {
        for (Eigen::Index o = 0; o < c; ++o) {
            if (b != o) sum += 1.0 - dm.p(b, o);
        }
    }
    return 100.0 * sum / static_cast<double>(c * (c - 1));
}

}  // namespace hapmetric
