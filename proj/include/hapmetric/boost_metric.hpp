#pragma once

// Mahalanobis metric learning by boosting rank-one, trace-one base learners.
//
// The learned matrix is M = sum_k w_k z_k z_k^T with w_k >= 0 and unit z_k,
// so M is PSD by construction. Training minimizes
//
//     log sum_r exp(-rho_r) + v tr(M),
//     rho_r = (x_i - x_k)^T M (x_i - x_k) - (x_i - x_j)^T M (x_i - x_j)
//
// over triplets r = (i, j, k) with label(i) = label(j) != label(k). Each
// round is one column-generation step: the leading eigenvector z of the
// weighted constraint matrix sum_r u_r A_r is the base learner that most
// decreases the loss, and its weight comes from an exact line search. Earlier
// weights stay frozen (stagewise boosting).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hapmetric/error.hpp"
#include "hapmetric/feature_set.hpp"
#include "hapmetric/random.hpp"

namespace hapmetric {

/// Indices (anchor, same-class positive, other-class impostor) into a FeatureSet.
struct Triplet {
    std::size_t i = 0;
    std::size_t j = 0;
    std::size_t k = 0;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TrainConfig {
    double regularizer = 1e-7;          ///< v, weight of tr(M)
    std::size_t max_iterations = 3000;  ///< boosting rounds; 0 yields the zero model
    double convergence_tol = 1e-10;     ///< stop once lambda_max <= v + tol
    double line_search_tol = 1e-9;      ///< relative bracket width for the step search
    std::uint64_t rng_seed = 0;
    /// Largest change of any margin allowed in one step. Only binds when the
    /// loss keeps decreasing without bound along the new direction (v below
    /// every per-triplet slope).
    double max_margin_step = 1e4;
    double power_tol = 1e-10;
    std::size_t power_max_iterations = 10000;

    void validate() const {
        detail::require(std::isfinite(regularizer) && regularizer >= 0.0,
                        "train config: regularizer v must be >= 0");
        detail::require(convergence_tol > 0.0 && line_search_tol > 0.0 && power_tol > 0.0,
                        "train config: tolerances must be positive");
        detail::require(max_margin_step > 0.0, "train config: max_margin_step must be positive");
        detail::require(power_max_iterations >= 1, "train config: power_max_iterations must be >= 1");
    }
};

struct BaseLearner {
    double weight = 0.0;
    Eigen::VectorXd direction;  ///< unit norm
};

enum class StopReason { MaxIterations, NoImprovingLearner, ZeroStep };

inline std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::MaxIterations: return "max_iterations";
        case StopReason::NoImprovingLearner: return "no_improving_learner";
        case StopReason::ZeroStep: return "zero_step";
    }
    return "unknown";
}

class MahalanobisModel {
public:
    MahalanobisModel() = default;
    explicit MahalanobisModel(std::size_t dim)
        : matrix_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))) {}

    std::size_t dim() const { return static_cast<std::size_t>(matrix_.rows()); }
    const std::vector<BaseLearner>& terms() const { return terms_; }
    const Eigen::MatrixXd& matrix() const { return matrix_; }
    const std::vector<double>& loss_history() const { return loss_history_; }

    double trace() const { return matrix_.trace(); }
    double weight_sum() const {
        double s = 0.0;
        for (const auto& t : terms_) s += t.weight;
        return s;
    }

    void add_term(double weight, const Eigen::VectorXd& direction) {
        detail::require(weight >= 0.0 && std::isfinite(weight), "model: term weight must be >= 0");
        detail::require(static_cast<std::size_t>(direction.size()) == dim(), "model: dimension mismatch");
        const double norm = direction.norm();
        detail::require(norm > 0.0, "model: zero direction");
        Eigen::VectorXd z = direction / norm;
        matrix_.noalias() += weight * (z * z.transpose());
        terms_.push_back({weight, std::move(z)});
    }

    void push_loss(double value) { loss_history_.push_back(value); }

    /// Replaces the dense matrix wholesale (used when reading a model file,
    /// where the stored matrix is authoritative).
    void set_matrix(Eigen::MatrixXd m) {
        detail::require(m.rows() == m.cols() && static_cast<std::size_t>(m.rows()) == dim(),
                        "model: matrix must be dim x dim");
        matrix_ = std::move(m);
    }

    // training provenance, written to the model file
    double regularizer = 0.0;
    std::size_t max_iterations = 0;
    StopReason stop_reason = StopReason::MaxIterations;
    std::size_t power_iteration_misses = 0;  ///< rounds where power iteration hit its cap

private:
    Eigen::MatrixXd matrix_;
    std::vector<BaseLearner> terms_;
    std::vector<double> loss_history_;
};

/// Squared Mahalanobis form (x - y)^T M (x - y), clamped at 0 against rounding.
template <typename DerivedX, typename DerivedY>
double distance(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                const Eigen::MatrixXd& m) {
    detail::require(x.size() == y.size() && x.size() == m.rows(), "distance: dimension mismatch");
    const Eigen::VectorXd d = x - y;
    return std::max(0.0, d.dot(m * d));
}

template <typename DerivedX, typename DerivedY>
double distance(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                const MahalanobisModel& model) {
    return distance(x, y, model.matrix());
}

/// Either plain squared Euclidean distance or a learned Mahalanobis form.
class Metric {
public:
    static Metric euclidean() { return Metric{}; }
    static Metric learned(const MahalanobisModel& model) { return learned(model.matrix()); }
    static Metric learned(Eigen::MatrixXd m) {
        Metric metric;
        metric.matrix_ = std::move(m);
        return metric;
    }

    bool is_euclidean() const { return !matrix_.has_value(); }
    const std::optional<Eigen::MatrixXd>& matrix() const { return matrix_; }

    template <typename DerivedX, typename DerivedY>
    double operator()(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) const {
        if (matrix_) return distance(x, y, *matrix_);
        detail::require(x.size() == y.size(), "distance: dimension mismatch");
        return (x - y).squaredNorm();
    }

    void check_dim(std::size_t dim) const {
        if (matrix_) {
            detail::require(static_cast<std::size_t>(matrix_->rows()) == dim,
                            "metric dimension " + std::to_string(matrix_->rows()) +
                                " does not match feature dimension " + std::to_string(dim));
        }
    }

private:
    std::optional<Eigen::MatrixXd> matrix_;
};

/// rho_r = d_M(x_i, x_k) - d_M(x_i, x_j).
inline double margin(const Triplet& t, const FeatureSet& features, const Eigen::MatrixXd& m) {
    detail::require(t.i < features.size() && t.j < features.size() && t.k < features.size(),
                    "margin: triplet index out of range");
    const auto xi = features.values.row(static_cast<Eigen::Index>(t.i)).transpose();
    const auto xj = features.values.row(static_cast<Eigen::Index>(t.j)).transpose();
    const auto xk = features.values.row(static_cast<Eigen::Index>(t.k)).transpose();
    const Eigen::VectorXd dik = xi - xk;
    const Eigen::VectorXd dij = xi - xj;
    detail::require(dik.size() == m.rows() && m.rows() == m.cols(), "margin: dimension mismatch");
    return dik.dot(m * dik) - dij.dot(m * dij);
}

inline double margin(const Triplet& t, const FeatureSet& features, const MahalanobisModel& model) {
    return margin(t, features, model.matrix());
}

/// For every ordered same-class pair (i, j), i != j, draws `impostors_per_pair`
/// distinct impostors uniformly from the other classes. Pairs are visited in
/// row order so the output is a pure function of (features, count, seed).
inline std::vector<Triplet> generate_triplets(const FeatureSet& features, std::size_t impostors_per_pair,
                                              std::uint64_t rng_seed) {
    detail::require(impostors_per_pair >= 1, "generate_triplets: impostors_per_pair must be >= 1");
    const auto groups = features.indices_by_class();
    detail::require(groups.size() >= 2, "generate_triplets: at least 2 classes are required");
    for (const auto& [label, rows] : groups) {
        detail::require(rows.size() >= 2,
                        "generate_triplets: class '" + label + "' has fewer than 2 samples");
    }

    Rng rng(rng_seed);
    std::vector<Triplet> triplets;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const std::string& label = features.labels[i];
        std::vector<std::size_t> impostors;
        for (std::size_t k = 0; k < features.size(); ++k) {
            if (features.labels[k] != label) impostors.push_back(k);
        }
        detail::require(impostors_per_pair <= impostors.size(),
                        "generate_triplets: impostors_per_pair " + std::to_string(impostors_per_pair) +
                            " exceeds the " + std::to_string(impostors.size()) +
                            " available impostors for class '" + label + "'");
        for (std::size_t j : groups.at(label)) {
            if (j == i) continue;
            for (std::size_t pick : rng.sample_without_replacement(impostors.size(), impostors_per_pair)) {
                triplets.push_back({i, j, impostors[pick]});
            }
        }
    }
    return triplets;
}

/// All ordered (i, j) same-class pairs crossed with every impostor k.
inline std::vector<Triplet> all_triplets(const FeatureSet& features) {
    std::vector<Triplet> triplets;
    for (std::size_t i = 0; i < features.size(); ++i) {
        for (std::size_t j = 0; j < features.size(); ++j) {
            if (j == i || features.labels[j] != features.labels[i]) continue;
            for (std::size_t k = 0; k < features.size(); ++k) {
                if (features.labels[k] != features.labels[i]) triplets.push_back({i, j, k});
            }
        }
    }
    return triplets;
}

struct EigenPair {
    double value = 0.0;
    Eigen::VectorXd vector;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Leading algebraic eigenpair of a symmetric (possibly indefinite) matrix by
/// power iteration on A + cI, c = max absolute row sum (Gershgorin), which
/// makes the shifted matrix PSD so its dominant eigenvector is A's top one.
inline EigenPair leading_eigenpair(const Eigen::MatrixXd& a, Rng& rng, double tol = 1e-10,
                                   std::size_t max_iterations = 10000) {
    detail::require(a.rows() == a.cols() && a.rows() > 0, "leading_eigenpair: matrix must be square");
    const Eigen::Index n = a.rows();
    const double shift = a.cwiseAbs().rowwise().sum().maxCoeff();

    EigenPair out;
    out.vector.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) out.vector(i) = rng.normal();
    out.vector.normalize();
    if (shift == 0.0) {
        out.converged = true;
        return out;
    }

    Eigen::MatrixXd shifted = a;
    shifted.diagonal().array() += shift;
    Eigen::VectorXd next(n);
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        next.noalias() = shifted * out.vector;
        const double norm = next.norm();
        out.iterations = it;
        if (norm == 0.0) {
            // A = -cI: every vector is an eigenvector
            out.converged = true;
            break;
        }
        next /= norm;
        const double change = (next - out.vector).norm();
        out.vector = next;
        if (change < tol) {
            out.converged = true;
            break;
        }
    }
    out.value = out.vector.dot(a * out.vector);
    return out;
}

/// One-dimensional step objective along a new base learner:
///     g(w) = log sum_r exp(-(rho_r + w h_r)) + v (trace_before + w),
/// which is convex in w.
class LineSearchObjective {
public:
    LineSearchObjective(Eigen::VectorXd margins, Eigen::VectorXd slopes, double regularizer,
                        double trace_before = 0.0)
        : margins_(std::move(margins)), slopes_(std::move(slopes)), v_(regularizer),
          trace_before_(trace_before) {
        detail::require(margins_.size() == slopes_.size() && margins_.size() > 0,
                        "line search: margins and slopes must be non-empty and equal length");
    }

    double value(double w) const {
        const Eigen::ArrayXd e = -(margins_.array() + w * slopes_.array());
        const double top = e.maxCoeff();
        return top + std::log((e - top).exp().sum()) + v_ * (trace_before_ + w);
    }

    double derivative(double w) const {
        const Eigen::ArrayXd e = -(margins_.array() + w * slopes_.array());
        const Eigen::ArrayXd p = (e - e.maxCoeff()).exp();
        return v_ - (p * slopes_.array()).sum() / p.sum();
    }

    /// Minimizer over w >= 0: bracket by doubling from the natural scale
    /// 1 / max|h|, then bisect on g' until the bracket is narrower than
    /// rel_tol times its upper end. Returns 0 when g'(0) >= 0.
    double minimize(double rel_tol, double max_margin_step) const {
        const double max_slope = slopes_.cwiseAbs().maxCoeff();
        if (max_slope == 0.0 || derivative(0.0) >= 0.0) return 0.0;
        const double cap = max_margin_step / max_slope;

        double lo = 0.0;
        double hi = std::min(1.0 / max_slope, cap);
        while (derivative(hi) < 0.0) {
            if (hi >= cap) return cap;
            lo = hi;
            hi = std::min(2.0 * hi, cap);
        }
        for (int it = 0; it < 400 && hi - lo > rel_tol * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (derivative(mid) < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    }

private:
    Eigen::VectorXd margins_;
    Eigen::VectorXd slopes_;
    double v_;
    double trace_before_;
};

namespace detail {

/// Row r holds x_i - x_k (anchor minus impostor) and x_i - x_j.
struct TripletDifferences {
    Eigen::MatrixXd to_impostor;
    Eigen::MatrixXd to_positive;
};

inline TripletDifferences triplet_differences(const std::vector<Triplet>& triplets,
                                              const FeatureSet& features) {
    TripletDifferences d;
    const auto rows = static_cast<Eigen::Index>(triplets.size());
    d.to_impostor.resize(rows, features.values.cols());
    d.to_positive.resize(rows, features.values.cols());
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Triplet& t = triplets[static_cast<std::size_t>(r)];
        require(t.i < features.size() && t.j < features.size() && t.k < features.size(),
                "triplet index out of range");
        const auto xi = features.values.row(static_cast<Eigen::Index>(t.i));
        d.to_impostor.row(r) = xi - features.values.row(static_cast<Eigen::Index>(t.k));
        d.to_positive.row(r) = xi - features.values.row(static_cast<Eigen::Index>(t.j));
    }
    return d;
}

inline Eigen::VectorXd softmax_of_negated(const Eigen::VectorXd& margins) {
    const Eigen::ArrayXd e = -margins.array();
    Eigen::ArrayXd p = (e - e.maxCoeff()).exp();
    return (p / p.sum()).matrix();
}

inline double log_sum_exp_negated(const Eigen::VectorXd& margins) {
    const Eigen::ArrayXd e = -margins.array();
    const double top = e.maxCoeff();
    return top + std::log((e - top).exp().sum());
}

}  // namespace detail

/// Per-triplet slope h_r = <A_r, z z^T> = (z.(x_i - x_k))^2 - (z.(x_i - x_j))^2.
inline Eigen::VectorXd triplet_slopes(const std::vector<Triplet>& triplets, const FeatureSet& features,
                                      const Eigen::VectorXd& direction) {
    const auto d = detail::triplet_differences(triplets, features);
    return ((d.to_impostor * direction).array().square() - (d.to_positive * direction).array().square())
        .matrix();
}

/// The step objective a training round would face for `direction` given the
/// current model, exposed for diagnostics and gradient checks.
inline LineSearchObjective line_search_objective(const std::vector<Triplet>& triplets,
                                                 const FeatureSet& features,
                                                 const MahalanobisModel& model,
                                                 const Eigen::VectorXd& direction, double regularizer) {
    Eigen::VectorXd margins(static_cast<Eigen::Index>(triplets.size()));
    for (std::size_t r = 0; r < triplets.size(); ++r) {
        margins(static_cast<Eigen::Index>(r)) = margin(triplets[r], features, model);
    }
    return LineSearchObjective(std::move(margins), triplet_slopes(triplets, features, direction.normalized()),
                               regularizer, model.weight_sum());
}

/// Weighted constraint matrix sum_r u_r A_r for the current margins.
inline Eigen::MatrixXd weighted_constraint_matrix(const detail::TripletDifferences& d,
                                                  const Eigen::VectorXd& weights) {
    const Eigen::MatrixXd wi = d.to_impostor.array().colwise() * weights.array();
    const Eigen::MatrixXd wp = d.to_positive.array().colwise() * weights.array();
    Eigen::MatrixXd a = d.to_impostor.transpose() * wi - d.to_positive.transpose() * wp;
    return 0.5 * (a + a.transpose());
}

inline MahalanobisModel train_metric(const std::vector<Triplet>& triplets, const FeatureSet& features,
                                     const TrainConfig& config) {
    config.validate();
    detail::require(!triplets.empty(), "train_metric: empty triplet set");
    detail::require(features.dim() >= 1, "train_metric: features have no dimensions");
    features.check_finite();

    const auto diffs = detail::triplet_differences(triplets, features);
    MahalanobisModel model(features.dim());
    model.regularizer = config.regularizer;
    model.max_iterations = config.max_iterations;
    model.stop_reason = StopReason::MaxIterations;

    Eigen::VectorXd margins = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(triplets.size()));
    double loss = detail::log_sum_exp_negated(margins);
    model.push_loss(loss);

    Rng rng(config.rng_seed);
    for (std::size_t round = 0; round < config.max_iterations; ++round) {
        const Eigen::VectorXd u = detail::softmax_of_negated(margins);
        const Eigen::MatrixXd weighted = weighted_constraint_matrix(diffs, u);
        const EigenPair top = leading_eigenpair(weighted, rng, config.power_tol, config.power_max_iterations);
        if (!top.converged) ++model.power_iteration_misses;
        if (!std::isfinite(top.value) || !top.vector.allFinite()) {
            throw ComputationError("train_metric: non-finite eigenpair in round " + std::to_string(round));
        }
        if (top.value <= config.regularizer + config.convergence_tol) {
            model.stop_reason = StopReason::NoImprovingLearner;
            break;
        }

        const Eigen::VectorXd slopes =
            ((diffs.to_impostor * top.vector).array().square() -
             (diffs.to_positive * top.vector).array().square())
                .matrix();
        const LineSearchObjective objective(margins, slopes, config.regularizer, model.weight_sum());
        const double step = objective.minimize(config.line_search_tol, config.max_margin_step);
        const double next_loss = step > 0.0 ? objective.value(step) : loss;
        if (!(step > 0.0) || !(next_loss <= loss)) {
            model.stop_reason = StopReason::ZeroStep;
            break;
        }
        if (!std::isfinite(next_loss)) {
            throw ComputationError("train_metric: non-finite loss in round " + std::to_string(round));
        }

        margins.noalias() += step * slopes;
        model.add_term(step, top.vector);
        loss = next_loss;
        model.push_loss(loss);
    }
    return model;
}

/// Linear map x -> L^T x whose squared Euclidean distances reproduce d_M.
struct EmbeddingTransform {
    Eigen::MatrixXd projection;  ///< N x d, M ~= L L^T

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return projection.transpose() * x; }
    Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& rows) const { return rows * projection; }
};

/// Eigendecomposes M = V diag(lambda) V^T and keeps eigenvalues
/// >= truncation_tol * lambda_max (and > 0): L = V_d diag(lambda_d)^(1/2).
inline EmbeddingTransform embedding_transform(const Eigen::MatrixXd& m, double truncation_tol) {
    detail::require(m.rows() == m.cols() && m.rows() > 0, "embedding_transform: matrix must be square");
    detail::require(truncation_tol >= 0.0, "embedding_transform: truncation tolerance must be >= 0");
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (m + m.transpose()));
    if (solver.info() != Eigen::Success) throw ComputationError("embedding_transform: eigensolver failed");
    const Eigen::VectorXd& lambda = solver.eigenvalues();  // ascending
    const double top = lambda.maxCoeff();
    detail::require(top > 0.0, "embedding_transform: model is all zero");

    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = lambda.size() - 1; i >= 0; --i) {
        if (lambda(i) > 0.0 && lambda(i) >= truncation_tol * top) keep.push_back(i);
    }
    EmbeddingTransform out;
    out.projection.resize(m.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
        out.projection.col(static_cast<Eigen::Index>(c)) =
            solver.eigenvectors().col(keep[c]) * std::sqrt(lambda(keep[c]));
    }
    return out;
}

inline EmbeddingTransform embedding_transform(const MahalanobisModel& model, double truncation_tol) {
    return embedding_transform(model.matrix(), truncation_tol);
}

}  // namespace hapmetric
