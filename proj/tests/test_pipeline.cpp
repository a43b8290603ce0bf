#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "diodeq/pipeline.hpp"
#include "diodeq/rng.hpp"

using namespace diodeq;

namespace {

struct ConstReg : Regressor {
    double c;
    bool is_fit = false;
    explicit ConstReg(double value) : c(value) {}
    void fit(const Eigen::MatrixXd&, const Eigen::VectorXd&) override { is_fit = true; }
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override {
        return Eigen::VectorXd::Constant(X.rows(), c);
    }
    bool fitted() const override { return is_fit; }
};

// leakage canary: records every row value seen at fit time
struct RowRecorder : Regressor {
    std::set<double>* seen;
    bool is_fit = false;
    explicit RowRecorder(std::set<double>* sink) : seen(sink) {}
    void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd&) override {
        for (Eigen::Index i = 0; i < X.rows(); ++i) seen->insert(X(i, 0));
        is_fit = true;
    }
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override {
        return Eigen::VectorXd::Zero(X.rows());
    }
    bool fitted() const override { return is_fit; }
};

Eigen::MatrixXd random_X(Rng& rng, int rows, int cols) {
    Eigen::MatrixXd X(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) X(i, j) = rng.uniform(-3, 3);
    return X;
}

// step-function data where exact splits beat distance averaging
void step_data(Eigen::MatrixXd& X, Eigen::VectorXd& y) {
    std::vector<double> xs;
    for (double v : {0.0, 0.7, 1.4, 2.1, 2.8, 3.5, 7.3, 7.5, 7.7, 7.9,
                     8.1, 8.3, 8.5, 8.7, 12.4, 13.1, 13.8, 14.5, 15.2, 15.9})
        xs.push_back(v);
    const int reps = 2;
    X.resize(static_cast<Eigen::Index>(xs.size() * reps), 1);
    y.resize(X.rows());
    int k = 0;
    for (int r = 0; r < reps; ++r)
        for (double v : xs) {
            const double jitter = 0.013 * (k % 7) - 0.039;
            X(k, 0) = v + jitter;
            y(k) = X(k, 0) < 8.0 ? 0.0 : 10.0;
            ++k;
        }
}

} // namespace

TEST_CASE("regression tree: constant target collapses to one leaf") {
    Eigen::MatrixXd X(6, 1);
    X << 0, 1, 2, 3, 4, 5;
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(6, 3.14);
    RegressionTree t;
    t.fit(X, y, TreeConfig{8, 1});
    CHECK(t.depth() == 0);
    CHECK((t.predict(X).array() - 3.14).abs().maxCoeff() == 0.0);
}

TEST_CASE("regression tree memorizes distinct features at unbounded depth") {
    Rng rng(41);
    const Eigen::MatrixXd X = random_X(rng, 24, 2);
    Eigen::VectorXd y(24);
    for (int i = 0; i < 24; ++i) y(i) = rng.uniform(-5, 5);
    RegressionTree t;
    t.fit(X, y, TreeConfig{64, 1});
    CHECK((t.predict(X) - y).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("regression tree honors max depth") {
    Rng rng(43);
    const Eigen::MatrixXd X = random_X(rng, 64, 2);
    Eigen::VectorXd y(64);
    for (int i = 0; i < 64; ++i) y(i) = rng.uniform(-5, 5);
    for (std::size_t d : {1u, 2u, 3u}) {
        RegressionTree t;
        t.fit(X, y, TreeConfig{d, 1});
        CHECK(t.depth() <= d);
    }
}

TEST_CASE("gbt: constant target predicts the constant") {
    Eigen::MatrixXd X(8, 1);
    for (int i = 0; i < 8; ++i) X(i, 0) = i;
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(8, -2.5);
    GbtRegressor g;
    g.fit(X, y);
    CHECK((g.predict(X).array() + 2.5).abs().maxCoeff() < 1e-12);
}

TEST_CASE("gbt with eta=1 and unbounded depth memorizes the training set") {
    Rng rng(47);
    const Eigen::MatrixXd X = random_X(rng, 20, 1);
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) y(i) = rng.uniform(-5, 5);
    GbtConfig cfg;
    cfg.rounds = 1;
    cfg.shrinkage = 1.0;
    cfg.max_depth = 64;
    GbtRegressor g(cfg);
    g.fit(X, y);
    CHECK(mse(y, g.predict(X)) < 1e-20);
}

TEST_CASE("gbt training error is non-increasing round by round") {
    Rng rng(53);
    const Eigen::MatrixXd X = random_X(rng, 60, 2);
    Eigen::VectorXd y(60);
    for (int i = 0; i < 60; ++i)
        y(i) = std::sin(X(i, 0)) + 0.3 * X(i, 1) + 0.05 * rng.normal();
    for (double eta : {0.1, 0.5, 1.0}) {
        GbtConfig cfg;
        cfg.rounds = 30;
        cfg.shrinkage = eta;
        GbtRegressor g(cfg);
        g.fit(X, y);
        const auto& hist = g.train_history();
        REQUIRE(hist.size() == 30);
        for (std::size_t r = 1; r < hist.size(); ++r)
            CHECK(hist[r] <= hist[r - 1] + 1e-15);
    }
}

TEST_CASE("gbt JSON round trip preserves predictions") {
    Rng rng(59);
    const Eigen::MatrixXd X = random_X(rng, 30, 2);
    Eigen::VectorXd y(30);
    for (int i = 0; i < 30; ++i) y(i) = X(i, 0) * X(i, 1);
    GbtRegressor g;
    g.fit(X, y);
    const GbtRegressor back = GbtRegressor::from_json(g.to_json());
    CHECK(g.predict(X) == back.predict(X));
}

TEST_CASE("stacking appends exactly the inner model's predictions") {
    Rng rng(61);
    const Eigen::MatrixXd X = random_X(rng, 10, 2);

    ConstReg c7(7.5);
    c7.fit(X, Eigen::VectorXd::Zero(10));
    const Eigen::MatrixXd aug = stacking_augment(c7, X);
    CHECK(aug.cols() == 3);  // 2-feature input -> 3-feature output
    CHECK(aug.leftCols(2) == X);
    CHECK((aug.col(2).array() - 7.5).abs().maxCoeff() == 0.0);

    GbtRegressor g;
    Eigen::VectorXd y(10);
    for (int i = 0; i < 10; ++i) y(i) = rng.uniform(-1, 1);
    g.fit(X, y);
    const Eigen::MatrixXd aug2 = stacking_augment(g, X);
    CHECK(aug2.col(2) == g.predict(X));  // bit-for-bit
}

TEST_CASE("feature union concatenates columns positionally") {
    Rng rng(67);
    const Eigen::MatrixXd A = random_X(rng, 6, 3);
    const Eigen::MatrixXd B = random_X(rng, 6, 2);
    const Eigen::MatrixXd U = feature_union(A, B);
    CHECK(U.cols() == 5);
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 3; ++j) CHECK(U(i, j) == A(i, j));
        for (int j = 0; j < 2; ++j) CHECK(U(i, 3 + j) == B(i, j));
    }
    const Eigen::MatrixXd empty(6, 0);
    CHECK(feature_union(A, empty) == A);
    CHECK_THROWS_AS(feature_union(A, random_X(rng, 5, 2)), DimensionError);
}

TEST_CASE("pipeline tree structural validation") {
    const PipelineTree good = fig5_tree(GbtConfig{}, KnnConfig{});
    good.validate();
    CHECK(good.depth() == 3);
    CHECK(good.feature_width(1, 2) == 5);  // union output: stacked 3 + raw 2

    PipelineTree bad = good;
    bad.nodes[2].kind = NodeKind::KnnEstimator;  // estimator below the root
    CHECK_THROWS_AS(bad.validate(), DomainError);

    PipelineTree arity = good;
    arity.nodes[1].children = {2};  // union with one child
    CHECK_THROWS_AS(arity.validate(), DomainError);

    PipelineTree leaf = good;
    leaf.nodes[3].kind = NodeKind::IqrScaler;  // transformer leaf
    CHECK_THROWS_AS(leaf.validate(), DomainError);

    const PipelineTree back = PipelineTree::from_json(good.to_json());
    CHECK(back.nodes.size() == good.nodes.size());
    CHECK(back.nodes[2].kind == NodeKind::StackingGbt);
}

TEST_CASE("fig5 pipeline equals the manual stage composition") {
    Rng rng(71);
    const Eigen::MatrixXd X = random_X(rng, 40, 2);
    Eigen::VectorXd y(40);
    for (int i = 0; i < 40; ++i) y(i) = std::sin(X(i, 0)) - 0.5 * X(i, 1);
    const Eigen::MatrixXd Xt = random_X(rng, 12, 2);
    Eigen::VectorXd yt(12);
    for (int i = 0; i < 12; ++i) yt(i) = std::sin(Xt(i, 0)) - 0.5 * Xt(i, 1);

    GbtConfig gbt;
    gbt.rounds = 20;
    KnnConfig knn;
    knn.k = 4;
    knn.p = 2.0;

    const FitReport rep = fig5_pipeline(X, y, Xt, yt, gbt, knn);

    // manual composition: stacking(GBT) -> union with raw -> KNN
    GbtRegressor inner(gbt);
    inner.fit(X, y);
    const Eigen::MatrixXd stage1 = stacking_augment(inner, X);
    const Eigen::MatrixXd stage2 = feature_union(stage1, X);
    KnnRegressor est(knn);
    est.fit(stage2, y);
    const Eigen::MatrixXd t1 = stacking_augment(inner, Xt);
    const Eigen::MatrixXd t2 = feature_union(t1, Xt);
    CHECK(*rep.train_mse == doctest::Approx(mse(y, est.predict(stage2))).epsilon(1e-14));
    CHECK(*rep.test_mse == doctest::Approx(mse(yt, est.predict(t2))).epsilon(1e-14));
}

TEST_CASE("fig5 on a constant target is exact") {
    Rng rng(73);
    const Eigen::MatrixXd X = random_X(rng, 20, 2);
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 4.0);
    const FitReport rep = fig5_pipeline(X, y, X, y, GbtConfig{}, KnnConfig{});
    CHECK(*rep.train_mse == doctest::Approx(0.0));
    CHECK(*rep.test_mse == doctest::Approx(0.0));
}

TEST_CASE("fig5 predictions are invariant to test row order") {
    Rng rng(79);
    const Eigen::MatrixXd X = random_X(rng, 40, 2);
    Eigen::VectorXd y(40);
    for (int i = 0; i < 40; ++i) y(i) = X(i, 0) + X(i, 1) * X(i, 1);
    PipelineModel model(fig5_tree(GbtConfig{}, KnnConfig{}));
    model.fit(X, y);

    const Eigen::MatrixXd Q = random_X(rng, 10, 2);
    Eigen::MatrixXd Qr(10, 2);
    for (int i = 0; i < 10; ++i) Qr.row(i) = Q.row(9 - i);
    const Eigen::VectorXd a = model.predict(Q);
    const Eigen::VectorXd b = model.predict(Qr);
    for (int i = 0; i < 10; ++i) CHECK(a(i) == b(9 - i));
}

TEST_CASE("pipeline model JSON round trip preserves predictions") {
    Rng rng(83);
    const Eigen::MatrixXd X = random_X(rng, 30, 2);
    Eigen::VectorXd y(30);
    for (int i = 0; i < 30; ++i) y(i) = std::cos(X(i, 0));
    PipelineModel model(fig5_tree(GbtConfig{}, KnnConfig{}));
    model.fit(X, y);
    const PipelineModel back = PipelineModel::from_json(model.to_json());
    const Eigen::MatrixXd Q = random_X(rng, 8, 2);
    CHECK(model.predict(Q) == back.predict(Q));
}

TEST_CASE("cross-validation canary: stacking inner sees only training rows") {
    // wrap a hand-built stacking -> knn pipeline whose inner regressor
    // records the rows it was fitted on
    std::set<double> seen;
    struct CanaryPipeline : Regressor {
        std::set<double>* sink;
        KnnRegressor knn{KnnConfig{}};
        bool is_fit = false;
        explicit CanaryPipeline(std::set<double>* s) : sink(s) {}
        void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) override {
            RowRecorder rec(sink);
            rec.fit(X, y);
            knn = KnnRegressor(KnnConfig{});
            knn.fit(stacking_augment(rec, X), y);
            is_fit = true;
        }
        Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override {
            RowRecorder rec(sink);  // predict-time transform does not refit
            const_cast<RowRecorder&>(rec).is_fit = true;
            return knn.predict(stacking_augment(rec, X));
        }
        bool fitted() const override { return is_fit; }
    };

    Eigen::MatrixXd X(12, 1);
    Eigen::VectorXd y(12);
    for (int i = 0; i < 12; ++i) {
        X(i, 0) = 1000.0 + i;  // distinct marker values
        y(i) = i;
    }
    const auto folds = kfold_indices(12, 3, 5);
    const auto cv = cross_validate(
        [&] { return std::unique_ptr<Regressor>(new CanaryPipeline(&seen)); }, X, y, 3, 5);
    (void)cv;
    // the recorder never saw all 12 rows in one fit: remove each fold's
    // rows and check the union matches what three train-fits could see
    CHECK(seen.size() == 12);  // across the three fits every row appears
    // per-fit leakage is ruled out structurally: each fit ran on 8 rows;
    // re-run a single fold manually and compare
    std::set<double> single;
    CanaryPipeline one(&single);
    std::vector<std::size_t> train_rows;
    for (std::size_t g = 1; g < folds.size(); ++g)
        train_rows.insert(train_rows.end(), folds[g].begin(), folds[g].end());
    Eigen::MatrixXd Xtr(train_rows.size(), 1);
    Eigen::VectorXd ytr(train_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
        Xtr(static_cast<Eigen::Index>(i), 0) = X(static_cast<Eigen::Index>(train_rows[i]), 0);
        ytr(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(train_rows[i]));
    }
    one.fit(Xtr, ytr);
    for (std::size_t held : folds[0])
        CHECK(single.count(X(static_cast<Eigen::Index>(held), 0)) == 0);
}

TEST_CASE("gp search: single-estimator registry returns a bare pipeline") {
    Rng rng(89);
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    step_data(X, y);
    GpConfig cfg;
    cfg.population = 6;
    cfg.generations = 3;
    cfg.cv_folds = 4;
    cfg.seed = 2;
    cfg.registry = {NodeKind::KnnEstimator};
    const GpResult res = gp_search(cfg, X, y);
    CHECK(res.best.nodes.size() == 2);
    CHECK(res.best.nodes[0].kind == NodeKind::KnnEstimator);
    CHECK(res.best.nodes[1].kind == NodeKind::Source);
}

TEST_CASE("gp search: elitism keeps the best fitness non-increasing") {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    step_data(X, y);
    GpConfig cfg;
    cfg.population = 10;
    cfg.generations = 8;
    cfg.cv_folds = 4;
    cfg.seed = 11;
    const GpResult res = gp_search(cfg, X, y);
    REQUIRE(res.best_history.size() == 8);
    for (std::size_t g = 1; g < res.best_history.size(); ++g)
        CHECK(res.best_history[g] <= res.best_history[g - 1] + 1e-15);

    const GpResult res2 = gp_search(cfg, X, y);
    CHECK(res.best_history == res2.best_history);  // seed determinism
    CHECK(res.best.to_json() == res2.best.to_json());
}

TEST_CASE("gp search finds the GBT node on step data, matching exhaustive search") {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    step_data(X, y);

    GpConfig cfg;
    cfg.population = 10;
    cfg.generations = 6;
    cfg.cv_folds = 4;
    cfg.seed = 17;
    cfg.registry = {NodeKind::KnnEstimator, NodeKind::GbtEstimator};
    const GpResult res = gp_search(cfg, X, y);

    bool has_gbt = false;
    for (const auto& nd : res.best.nodes)
        has_gbt |= nd.kind == NodeKind::GbtEstimator || nd.kind == NodeKind::StackingGbt;
    CHECK(has_gbt);

    // exhaustive depth-1 oracle over the same hyper menus and CV folds
    const std::uint64_t cv_seed = Rng::derive_seed(cfg.seed, 0x62);
    double best_knn = 1e300, best_gbt = 1e300;
    for (std::size_t k : {2u, 4u, 8u})
        for (double p : {1.0, 2.0, 4.0}) {
            KnnConfig kc;
            kc.k = k;
            kc.p = p;
            const auto cv = cross_validate(
                [&] { return std::unique_ptr<Regressor>(new KnnRegressor(kc)); }, X, y,
                cfg.cv_folds, cv_seed);
            best_knn = std::min(best_knn, cv.mean_mse);
        }
    for (std::size_t rounds : {20u, 50u})
        for (std::size_t depth : {2u, 3u})
            for (double eta : {0.1, 0.3}) {
                GbtConfig gc;
                gc.rounds = rounds;
                gc.max_depth = depth;
                gc.shrinkage = eta;
                const auto cv = cross_validate(
                    [&] { return std::unique_ptr<Regressor>(new GbtRegressor(gc)); }, X, y,
                    cfg.cv_folds, cv_seed);
                best_gbt = std::min(best_gbt, cv.mean_mse);
            }
    CHECK(best_gbt < best_knn);  // the dataset is GBT-favoring under CV
    CHECK(res.best_fitness <= best_gbt + 1e-12);
}
