#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "hapmetric/boost_metric.hpp"
#include "hapmetric/evaluation.hpp"
#include "hapmetric/model_io.hpp"
#include "hapmetric/random.hpp"
#include "oracles.hpp"

using namespace hapmetric;

namespace {

FeatureSet make_set(const std::vector<std::vector<double>>& rows, const std::vector<std::string>& labels) {
    FeatureSet s;
    s.labels = labels;
    s.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return s;
}

/// Isotropic Gaussian blobs with unit sigma; class c centered at separation * c on axis 0.
FeatureSet blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double separation, std::uint64_t seed) {
    Rng rng(seed);
    FeatureSet s;
    s.values.resize(static_cast<Eigen::Index>(classes * per_class), static_cast<Eigen::Index>(dim));
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            const auto r = static_cast<Eigen::Index>(c * per_class + i);
            for (std::size_t d = 0; d < dim; ++d) s.values(r, static_cast<Eigen::Index>(d)) = rng.normal();
            s.values(r, 0) += separation * static_cast<double>(c);
            s.labels.push_back("c" + std::to_string(c));
        }
    }
    return s;
}

/// Blobs whose class signal lives in dimension 0 while dimension 1 carries
/// large label-independent noise.
FeatureSet noisy_blobs(std::size_t classes, std::size_t per_class, std::uint64_t seed) {
    Rng rng(seed);
    FeatureSet s;
    s.values.resize(static_cast<Eigen::Index>(classes * per_class), 3);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            const auto r = static_cast<Eigen::Index>(c * per_class + i);
            s.values(r, 0) = 3.0 * static_cast<double>(c) + 0.3 * rng.normal();
            s.values(r, 1) = 20.0 * rng.normal();
            s.values(r, 2) = 0.5 * rng.normal();
            s.labels.push_back("c" + std::to_string(c));
        }
    }
    return s;
}

double satisfied_fraction(const std::vector<Triplet>& triplets, const FeatureSet& fs, const Eigen::MatrixXd& m) {
    std::size_t ok = 0;
    for (const auto& t : triplets) ok += margin(t, fs, m) > 0.0 ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(triplets.size());
}

void expect_model_invariants(const MahalanobisModel& model, Rng& rng) {
    const Eigen::MatrixXd& m = model.matrix();
    for (const auto& t : model.terms()) {
        EXPECT_GE(t.weight, 0.0);
        EXPECT_NEAR(t.direction.norm(), 1.0, 1e-9);
    }
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    EXPECT_LE((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-9 * scale);
    EXPECT_NEAR(m.trace(), model.weight_sum(), 1e-9 * std::max(1.0, model.weight_sum()));
    for (int probe = 0; probe < 20; ++probe) {
        Eigen::VectorXd x(m.rows());
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
        EXPECT_GE(x.dot(m * x), -1e-9 * x.squaredNorm() * scale);
    }
    const auto& h = model.loss_history();
    for (std::size_t t = 1; t < h.size(); ++t) EXPECT_LE(h[t], h[t - 1] + 1e-12);
}

}  // namespace

TEST(Margin, HandComputedExamples) {
    const FeatureSet fs = make_set({{0, 0}, {0, 1}, {2, 0}}, {"a", "a", "b"});
    const Triplet t{0, 1, 2};
    EXPECT_EQ(margin(t, fs, Eigen::MatrixXd::Zero(2, 2)), 0.0);
    EXPECT_DOUBLE_EQ(margin(t, fs, Eigen::MatrixXd::Identity(2, 2)), 3.0);
    EXPECT_DOUBLE_EQ(margin(t, fs, Eigen::Vector2d(1, 0).asDiagonal().toDenseMatrix()), 4.0);
    EXPECT_THROW(margin(t, fs, Eigen::MatrixXd::Identity(3, 3)), InvalidInput);
}

TEST(Distance, HandComputedExamples) {
    const Eigen::Vector2d x(1.5, -2.0);
    const Eigen::Vector2d y(2.5, -1.0);
    EXPECT_EQ(distance(x, x, Eigen::MatrixXd::Identity(2, 2)), 0.0);
    EXPECT_DOUBLE_EQ(distance(x, y, Eigen::MatrixXd::Identity(2, 2)), (x - y).squaredNorm());
    EXPECT_DOUBLE_EQ(distance(x, y, Eigen::MatrixXd(2.0 * Eigen::MatrixXd::Identity(2, 2))), 4.0);
    EXPECT_THROW(distance(x, y, Eigen::MatrixXd::Identity(3, 3)), InvalidInput);
}

TEST(Distance, NonNegativeAndSymmetricUnderLearnedMetric) {
    Rng rng(4);
    MahalanobisModel model(4);
    for (int t = 0; t < 3; ++t) {
        Eigen::VectorXd z(4);
        for (Eigen::Index i = 0; i < 4; ++i) z(i) = rng.normal();
        model.add_term(rng.uniform(0.1, 2.0), z);
    }
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd x(4), y(4);
        for (Eigen::Index i = 0; i < 4; ++i) {
            x(i) = rng.normal();
            y(i) = rng.normal();
        }
        EXPECT_GE(distance(x, y, model), 0.0);
        EXPECT_NEAR(distance(x, y, model), distance(y, x, model), 1e-12);
        EXPECT_NEAR(distance(x, y, model), oracle::sq_distance(x, y, model.matrix()), 1e-10);
    }
}

TEST(Triplets, CountsFollowOrderedPairs) {
    const FeatureSet tiny = make_set({{0}, {1}, {5}, {6}}, {"a", "a", "b", "b"});
    EXPECT_EQ(generate_triplets(tiny, 1, 0).size(), 4u);

    const FeatureSet full_corpus_shape = blobs(69, 10, 2, 1.0, 3);
    EXPECT_EQ(generate_triplets(full_corpus_shape, 1, 42).size(), 6210u);
}

TEST(Triplets, RespectLabelContractAndSeed) {
    const FeatureSet fs = blobs(4, 5, 3, 2.0, 1);
    const auto a = generate_triplets(fs, 3, 99);
    const auto b = generate_triplets(fs, 3, 99);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, generate_triplets(fs, 3, 100));
    ASSERT_EQ(a.size(), 4u * 5u * 4u * 3u);
    for (std::size_t r = 0; r < a.size(); ++r) {
        const auto& t = a[r];
        EXPECT_NE(t.i, t.j);
        EXPECT_EQ(fs.labels[t.i], fs.labels[t.j]);
        EXPECT_NE(fs.labels[t.k], fs.labels[t.i]);
        // impostors for one (i, j) pair are distinct
        if (r % 3 != 0) EXPECT_NE(t.k, a[r - 1].k);
    }
}

TEST(Triplets, RejectsDegenerateInput) {
    EXPECT_THROW(generate_triplets(make_set({{0}, {1}, {5}}, {"a", "a", "b"}), 1, 0), InvalidInput);
    EXPECT_THROW(generate_triplets(make_set({{0}, {1}}, {"a", "a"}), 1, 0), InvalidInput);
    const FeatureSet tiny = make_set({{0}, {1}, {5}, {6}}, {"a", "a", "b", "b"});
    EXPECT_THROW(generate_triplets(tiny, 3, 0), InvalidInput);
    EXPECT_THROW(generate_triplets(tiny, 0, 0), InvalidInput);
}

TEST(PowerIteration, MatchesDenseEigensolver) {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(10));
        Eigen::MatrixXd a(n, n);
        for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c < n; ++c) a(r, c) = rng.normal();
        }
        a = (0.5 * (a + a.transpose())).eval();
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(a);
        const auto& ev = ref.eigenvalues();
        // power iteration converges at rate (l2 + c)/(l1 + c); skip near-degenerate tops
        if (ev(n - 1) - ev(n - 2) < 0.05) continue;
        const EigenPair top = leading_eigenpair(a, rng);
        EXPECT_NEAR(top.value, ev(n - 1), 1e-8);
        EXPECT_NEAR(std::abs(top.vector.dot(ref.eigenvectors().col(n - 1))), 1.0, 1e-8);
    }
}

TEST(PowerIteration, FindsAlgebraicNotMagnitudeLeader) {
    Rng rng(1);
    const Eigen::MatrixXd a = Eigen::Vector3d(-10.0, 1.0, 0.5).asDiagonal();
    const EigenPair top = leading_eigenpair(a, rng);
    EXPECT_NEAR(top.value, 1.0, 1e-9);
    EXPECT_NEAR(std::abs(top.vector(1)), 1.0, 1e-9);
}

TEST(LineSearch, AnalyticDerivativeMatchesFiniteDifferences) {
    Rng rng(5);
    const std::size_t r = 40;
    Eigen::VectorXd margins(r), slopes(r);
    for (std::size_t i = 0; i < r; ++i) {
        margins(static_cast<Eigen::Index>(i)) = rng.normal();
        slopes(static_cast<Eigen::Index>(i)) = rng.normal();
    }
    const LineSearchObjective g(margins, slopes, 1e-2, 0.3);
    for (int probe = 0; probe < 20; ++probe) {
        const double w = rng.uniform(0.0, 3.0);
        const double h = 1e-5;
        const double fd = (g.value(w + h) - g.value(w - h)) / (2.0 * h);
        EXPECT_LE(std::abs(g.derivative(w) - fd), 1e-5 * std::max(1.0, std::abs(fd))) << "w=" << w;
    }
}

TEST(LineSearch, MinimizerIsStationaryOrClamped) {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd margins(25), slopes(25);
        for (Eigen::Index i = 0; i < 25; ++i) {
            margins(i) = rng.normal();
            slopes(i) = rng.normal() + 0.3;
        }
        const LineSearchObjective g(margins, slopes, 0.05);
        const double w = g.minimize(1e-12, 1e6);
        if (w == 0.0) {
            EXPECT_GE(g.derivative(0.0), 0.0);
        } else {
            EXPECT_NEAR(g.derivative(w), 0.0, 1e-6);
            // brute-force scan never beats the minimizer
            for (int s = 0; s <= 200; ++s) EXPECT_LE(g.value(w), g.value(0.05 * w * s) + 1e-12);
        }
    }
}

TEST(Train, SingleTripletPicksFirstAxis) {
    const FeatureSet fs = make_set({{0, 0}, {0, 1}, {1, 0}}, {"a", "a", "b"});
    const std::vector<Triplet> triplets{{0, 1, 2}};
    TrainConfig cfg;
    cfg.regularizer = 0.0;
    cfg.max_iterations = 1;
    const MahalanobisModel model = train_metric(triplets, fs, cfg);
    ASSERT_EQ(model.terms().size(), 1u);
    EXPECT_NEAR(std::abs(model.terms()[0].direction(0)), 1.0, 1e-9);
    EXPECT_NEAR(model.terms()[0].direction(1), 0.0, 1e-9);
    EXPECT_GT(model.terms()[0].weight, 0.0);

    const Eigen::VectorXd xi = fs.values.row(0), xj = fs.values.row(1), xk = fs.values.row(2);
    EXPECT_GT(distance(xi, xk, model), distance(xi, xj, model));

    // brute-force scan of g(w) = log exp(-w) along U = e1 e1^T: strictly decreasing
    double previous = 0.0;
    for (int s = 1; s <= 100; ++s) {
        const double w = 0.1 * s;
        const double g = std::log(std::exp(-w));
        EXPECT_LT(g, previous);
        previous = g;
    }
}

TEST(Train, ZeroIterationsGivesZeroModel) {
    const FeatureSet fs = blobs(2, 4, 3, 5.0, 2);
    TrainConfig cfg;
    cfg.max_iterations = 0;
    const MahalanobisModel model = train_metric(generate_triplets(fs, 1, 0), fs, cfg);
    EXPECT_TRUE(model.terms().empty());
    EXPECT_EQ(model.matrix(), Eigen::MatrixXd::Zero(3, 3));
    EXPECT_EQ(distance(fs.values.row(0).transpose(), fs.values.row(5).transpose(), model), 0.0);
}

TEST(Train, RejectsBadInput) {
    const FeatureSet fs = blobs(2, 4, 3, 5.0, 2);
    EXPECT_THROW(train_metric({}, fs, TrainConfig{}), InvalidInput);
    FeatureSet broken = fs;
    broken.values(0, 0) = std::nan("");
    EXPECT_THROW(train_metric(generate_triplets(fs, 1, 0), broken, TrainConfig{}), InvalidInput);
    TrainConfig bad;
    bad.regularizer = -1.0;
    EXPECT_THROW(train_metric(generate_triplets(fs, 1, 0), fs, bad), InvalidInput);
}

TEST(Train, SeparatedBlobsSatisfyEveryTrainingTriplet) {
    const FeatureSet fs = blobs(2, 10, 2, 10.0, 8);
    const auto triplets = all_triplets(fs);
    TrainConfig cfg;
    cfg.max_iterations = 50;
    const MahalanobisModel model = train_metric(triplets, fs, cfg);
    EXPECT_EQ(satisfied_fraction(triplets, fs, model.matrix()), 1.0);
    EXPECT_GE(satisfied_fraction(triplets, fs, model.matrix()),
              satisfied_fraction(triplets, fs, Eigen::MatrixXd::Identity(2, 2)));
}

TEST(Train, InvariantsHoldOnRandomCorpora) {
    Rng probe_rng(77);
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const FeatureSet fs = noisy_blobs(3 + seed % 3, 6, seed);
        const auto triplets = generate_triplets(fs, 2, seed);
        TrainConfig cfg;
        cfg.max_iterations = 40;
        cfg.rng_seed = seed;
        const MahalanobisModel model = train_metric(triplets, fs, cfg);
        expect_model_invariants(model, probe_rng);
        EXPECT_EQ(model.loss_history().size(), model.terms().size() + 1);
    }
}

TEST(Train, LearnsToIgnoreNoiseDimension) {
    const FeatureSet train = noisy_blobs(4, 10, 1);
    const FeatureSet test = noisy_blobs(4, 10, 2);
    TrainConfig cfg;
    cfg.max_iterations = 100;
    const MahalanobisModel model = train_metric(generate_triplets(train, 3, 1), train, cfg);
    const auto truth = test.labels;
    const double euclid = accuracy(confusion_matrix(truth, knn_classify(train, test.values, 3, Metric::euclidean())));
    const double learned = accuracy(confusion_matrix(truth, knn_classify(train, test.values, 3, Metric::learned(model))));
    EXPECT_GT(learned, euclid);
    EXPECT_GE(learned, 0.95);
}

TEST(Train, ZeroRegularizerStopsOnlyWithoutImprovingLearner) {
    // one class pair where the positive is always farther than the impostor
    // along every direction: no base learner can help
    const FeatureSet fs = make_set({{0, 0}, {4, 0}, {1, 0}, {5, 0}}, {"a", "a", "b", "b"});
    const std::vector<Triplet> triplets{{0, 1, 2}};
    TrainConfig cfg;
    cfg.regularizer = 0.0;
    cfg.convergence_tol = 1e-9;
    const MahalanobisModel model = train_metric(triplets, fs, cfg);
    EXPECT_EQ(model.stop_reason, StopReason::NoImprovingLearner);
    EXPECT_TRUE(model.terms().empty());
    // A = diag(1 - 16, 0) has lambda_max = 0 <= tol
}

TEST(Train, StoppingRuleMatchesDenseEigenvalue) {
    const FeatureSet fs = noisy_blobs(3, 5, 9);
    const auto triplets = generate_triplets(fs, 2, 9);
    TrainConfig cfg;
    cfg.regularizer = 0.0;
    cfg.convergence_tol = 1e-3;
    cfg.max_iterations = 400;
    const MahalanobisModel model = train_metric(triplets, fs, cfg);
    if (model.stop_reason == StopReason::NoImprovingLearner) {
        Eigen::VectorXd margins(static_cast<Eigen::Index>(triplets.size()));
        for (std::size_t r = 0; r < triplets.size(); ++r) margins(static_cast<Eigen::Index>(r)) = margin(triplets[r], fs, model);
        const Eigen::ArrayXd e = (-margins.array()) - (-margins.array()).maxCoeff();
        const Eigen::VectorXd u = (e.exp() / e.exp().sum()).matrix();
        Eigen::MatrixXd weighted = Eigen::MatrixXd::Zero(3, 3);
        for (std::size_t r = 0; r < triplets.size(); ++r) {
            const Eigen::VectorXd a = fs.values.row(static_cast<Eigen::Index>(triplets[r].i)) -
                                      fs.values.row(static_cast<Eigen::Index>(triplets[r].k));
            const Eigen::VectorXd b = fs.values.row(static_cast<Eigen::Index>(triplets[r].i)) -
                                      fs.values.row(static_cast<Eigen::Index>(triplets[r].j));
            weighted += u(static_cast<Eigen::Index>(r)) * (a * a.transpose() - b * b.transpose());
        }
        const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(weighted).eigenvalues().maxCoeff();
        EXPECT_LE(top, cfg.convergence_tol * (1.0 + 1e-6));
    } else {
        EXPECT_EQ(model.terms().size(), cfg.max_iterations);
    }
}

TEST(Train, ReproducibleForFixedSeed) {
    const FeatureSet fs = noisy_blobs(3, 6, 4);
    const auto triplets = generate_triplets(fs, 2, 4);
    TrainConfig cfg;
    cfg.max_iterations = 25;
    cfg.rng_seed = 12;
    const MahalanobisModel a = train_metric(triplets, fs, cfg);
    const MahalanobisModel b = train_metric(triplets, fs, cfg);
    std::ostringstream sa, sb;
    write_model(sa, a);
    write_model(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(Embedding, IdentityPreservesDistances) {
    const EmbeddingTransform l = embedding_transform(Eigen::MatrixXd::Identity(3, 3), 0.0);
    EXPECT_EQ(l.projection.cols(), 3);
    const Eigen::Vector3d x(1, 2, 3), y(-1, 0.5, 4);
    EXPECT_NEAR((l.apply(x) - l.apply(y)).squaredNorm(), (x - y).squaredNorm(), 1e-12);
}

TEST(Embedding, RankDeficientDiagonal) {
    const Eigen::MatrixXd m = Eigen::Vector2d(4.0, 0.0).asDiagonal();
    const EmbeddingTransform l = embedding_transform(m, 1e-6);
    ASSERT_EQ(l.projection.cols(), 1);
    const Eigen::Vector2d x(1.5, -7.0);
    EXPECT_NEAR(std::abs(l.apply(x)(0)), 3.0, 1e-12);
}

TEST(Embedding, ReconstructsRandomPsdModel) {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        MahalanobisModel model(6);
        for (int t = 0; t < 5; ++t) {
            Eigen::VectorXd z(6);
            for (Eigen::Index i = 0; i < 6; ++i) z(i) = rng.normal();
            model.add_term(rng.uniform(0.01, 3.0), z);
        }
        const EmbeddingTransform l = embedding_transform(model, 0.0);
        const Eigen::MatrixXd rebuilt = l.projection * l.projection.transpose();
        EXPECT_LE((rebuilt - model.matrix()).norm(), 1e-8 * model.trace());
    }
}

TEST(Embedding, RejectsZeroModel) {
    EXPECT_THROW(embedding_transform(MahalanobisModel(3), 0.0), InvalidInput);
}

TEST(Embedding, NeighborRankingMatchesLearnedDistance) {
    const FeatureSet fs = noisy_blobs(3, 8, 21);
    TrainConfig cfg;
    cfg.max_iterations = 30;
    const MahalanobisModel model = train_metric(generate_triplets(fs, 2, 2), fs, cfg);
    const EmbeddingTransform l = embedding_transform(model, 0.0);
    const Eigen::MatrixXd embedded = l.apply_rows(fs.values);
    Rng rng(3);
    for (int q = 0; q < 30; ++q) {
        Eigen::VectorXd x(3);
        for (Eigen::Index i = 0; i < 3; ++i) x(i) = 5.0 * rng.normal();
        const Eigen::VectorXd ex = l.apply(x);
        std::vector<std::pair<double, std::size_t>> by_model, by_embedding;
        for (std::size_t r = 0; r < fs.size(); ++r) {
            const auto row = static_cast<Eigen::Index>(r);
            by_model.push_back({distance(x, fs.values.row(row).transpose(), model), r});
            by_embedding.push_back({(ex - embedded.row(row).transpose()).squaredNorm(), r});
        }
        std::sort(by_model.begin(), by_model.end());
        std::sort(by_embedding.begin(), by_embedding.end());
        bool ties = false;
        for (std::size_t r = 1; r < by_model.size(); ++r) {
            ties |= by_model[r].first - by_model[r - 1].first < 1e-9 * std::max(1.0, by_model[r].first);
        }
        if (ties) continue;
        for (std::size_t r = 0; r < by_model.size(); ++r) EXPECT_EQ(by_model[r].second, by_embedding[r].second);
    }
}

TEST(ModelFile, RoundTripPreservesModel) {
    const FeatureSet fs = noisy_blobs(3, 5, 13);
    TrainConfig cfg;
    cfg.max_iterations = 10;
    const MahalanobisModel model = train_metric(generate_triplets(fs, 1, 1), fs, cfg);
    std::stringstream buf;
    write_model(buf, model);
    const MahalanobisModel back = read_model(buf, "mem");
    EXPECT_EQ(back.matrix(), model.matrix());
    EXPECT_EQ(back.loss_history(), model.loss_history());
    ASSERT_EQ(back.terms().size(), model.terms().size());
    for (std::size_t t = 0; t < model.terms().size(); ++t) {
        EXPECT_EQ(back.terms()[t].weight, model.terms()[t].weight);
        EXPECT_LE((back.terms()[t].direction - model.terms()[t].direction).norm(), 1e-15);
    }
    EXPECT_EQ(back.regularizer, cfg.regularizer);
    EXPECT_EQ(back.max_iterations, cfg.max_iterations);
}

TEST(ModelFile, LayoutAndErrors) {
    MahalanobisModel zero(2);
    zero.push_loss(std::log(4.0));
    std::ostringstream out;
    write_model(out, zero);
    std::istringstream lines(out.str());
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "dim=2");
    std::getline(lines, line);
    EXPECT_EQ(line, "terms=0");
    std::getline(lines, line);
    EXPECT_EQ(line, "0,0");

    std::istringstream truncated("dim=2\nterms=1\n");
    EXPECT_THROW(read_model(truncated, "t"), InvalidInput);
    std::istringstream bad_dim("dim=2\nterms=0\n1,0\n0\nloss_history=\n");
    EXPECT_THROW(read_model(bad_dim, "t"), InvalidInput);
}
