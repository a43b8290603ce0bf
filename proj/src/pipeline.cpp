#include "diodeq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "diodeq/rng.hpp"

namespace diodeq {

// ---------------------------------------------------------------------------
// RegressionTree

std::int32_t RegressionTree::build(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   std::vector<std::size_t>& idx, std::size_t lo,
                                   std::size_t hi, std::size_t depth,
                                   const TreeConfig& config) {
    const std::size_t n = hi - lo;
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        const double v = y(static_cast<Eigen::Index>(idx[i]));
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / static_cast<double>(n);
    const double sse = sum2 - sum * sum / static_cast<double>(n);

    const auto make_leaf = [&]() {
        nodes_.push_back(Node{-1, 0.0, mean, -1, -1});
        return static_cast<std::int32_t>(nodes_.size() - 1);
    };

    if (depth >= config.max_depth || n < 2 * config.min_samples_leaf || sse <= 0.0)
        return make_leaf();

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_sse = sse;
    std::vector<std::size_t> sorted(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                    idx.begin() + static_cast<std::ptrdiff_t>(hi));

    for (int f = 0; f < X.cols(); ++f) {
        std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
            const double va = X(static_cast<Eigen::Index>(a), f);
            const double vb = X(static_cast<Eigen::Index>(b), f);
            return va < vb || (va == vb && a < b);
        });
        double left_sum = 0.0, left_sum2 = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double v = y(static_cast<Eigen::Index>(sorted[i]));
            left_sum += v;
            left_sum2 += v * v;
            const double x_here = X(static_cast<Eigen::Index>(sorted[i]), f);
            const double x_next = X(static_cast<Eigen::Index>(sorted[i + 1]), f);
            if (x_here == x_next) continue;
            const std::size_t nl = i + 1, nr = n - nl;
            if (nl < config.min_samples_leaf || nr < config.min_samples_leaf) continue;
            const double right_sum = sum - left_sum;
            const double right_sum2 = sum2 - left_sum2;
            const double split_sse =
                (left_sum2 - left_sum * left_sum / static_cast<double>(nl)) +
                (right_sum2 - right_sum * right_sum / static_cast<double>(nr));
            if (split_sse < best_sse) {
                best_sse = split_sse;
                best_feature = f;
                best_threshold = 0.5 * (x_here + x_next);
            }
        }
    }

    if (best_feature < 0)
        return make_leaf();

    // partition idx[lo, hi) by the chosen split, stable on original order
    std::stable_partition(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                          idx.begin() + static_cast<std::ptrdiff_t>(hi),
                          [&](std::size_t i) {
                              return X(static_cast<Eigen::Index>(i), best_feature) <=
                                     best_threshold;
                          });
    std::size_t mid = lo;
    while (mid < hi &&
           X(static_cast<Eigen::Index>(idx[mid]), best_feature) <= best_threshold)
        ++mid;

    nodes_.push_back(Node{best_feature, best_threshold, mean, -1, -1});
    const auto node_id = static_cast<std::int32_t>(nodes_.size() - 1);
    const std::int32_t left = build(X, y, idx, lo, mid, depth + 1, config);
    const std::int32_t right = build(X, y, idx, mid, hi, depth + 1, config);
    nodes_[static_cast<std::size_t>(node_id)].left = left;
    nodes_[static_cast<std::size_t>(node_id)].right = right;
    return node_id;
}

void RegressionTree::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const TreeConfig& config) {
    if (X.rows() != y.size())
        throw DimensionError("tree fit: row count mismatch");
    if (X.rows() == 0)
        throw EmptyDatasetError("tree fit on empty data");
    nodes_.clear();
    std::vector<std::size_t> idx(static_cast<std::size_t>(X.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    // the root ends up last in nodes_? No: build pushes parent before children,
    // so the root is node 0 only when called first; keep the returned id.
    const std::int32_t root = build(X, y, idx, 0, idx.size(), 0, config);
    root_ = root;
}

Eigen::VectorXd RegressionTree::predict(const Eigen::MatrixXd& X) const {
    if (nodes_.empty())
        throw Error("tree predict before fit");
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        std::int32_t node = root_;
        while (nodes_[static_cast<std::size_t>(node)].feature >= 0) {
            const Node& nd = nodes_[static_cast<std::size_t>(node)];
            node = X(r, nd.feature) <= nd.threshold ? nd.left : nd.right;
        }
        out(r) = nodes_[static_cast<std::size_t>(node)].value;
    }
    return out;
}

std::size_t RegressionTree::depth() const {
    if (nodes_.empty()) return 0;
    std::function<std::size_t(std::int32_t)> walk = [&](std::int32_t node) -> std::size_t {
        const Node& nd = nodes_[static_cast<std::size_t>(node)];
        if (nd.feature < 0) return 0;
        return 1 + std::max(walk(nd.left), walk(nd.right));
    };
    return walk(root_);
}

nlohmann::json RegressionTree::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& nd : nodes_)
        nodes.push_back({{"feature", nd.feature},
                         {"threshold", nd.threshold},
                         {"value", nd.value},
                         {"left", nd.left},
                         {"right", nd.right}});
    return {{"nodes", nodes}, {"root", root_}};
}

RegressionTree RegressionTree::from_json(const nlohmann::json& j) {
    RegressionTree t;
    for (const auto& nd : j.at("nodes"))
        t.nodes_.push_back(Node{nd.at("feature").get<int>(), nd.at("threshold").get<double>(),
                                nd.at("value").get<double>(), nd.at("left").get<std::int32_t>(),
                                nd.at("right").get<std::int32_t>()});
    t.root_ = j.value("root", 0);
    if (t.nodes_.empty())
        throw SchemaError("tree JSON holds no nodes");
    return t;
}

// ---------------------------------------------------------------------------
// GbtRegressor

void GbtConfig::validate() const {
    if (rounds == 0) throw DomainError("gbt rounds must be positive");
    if (!(shrinkage > 0.0) || shrinkage > 1.0)
        throw DomainError("gbt shrinkage must lie in (0, 1]");
    if (max_depth == 0) throw DomainError("gbt max_depth must be positive");
    if (min_samples_leaf == 0) throw DomainError("gbt min_samples_leaf must be positive");
}

nlohmann::json GbtConfig::to_json() const {
    return {{"rounds", rounds},
            {"shrinkage", shrinkage},
            {"max_depth", max_depth},
            {"min_samples_leaf", min_samples_leaf}};
}

GbtConfig GbtConfig::from_json(const nlohmann::json& j) {
    GbtConfig c;
    c.rounds = j.value("rounds", c.rounds);
    c.shrinkage = j.value("shrinkage", c.shrinkage);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
    c.validate();
    return c;
}

void GbtRegressor::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    config_.validate();
    if (X.rows() != y.size())
        throw DimensionError("gbt fit: row count mismatch");
    if (static_cast<std::size_t>(X.rows()) < 2 * config_.min_samples_leaf)
        throw EmptyDatasetError("gbt fit: fewer than 2*min_samples_leaf rows");

    trees_.clear();
    train_history_.clear();
    base_ = y.mean();
    Eigen::VectorXd residual = y.array() - base_;
    const TreeConfig tree_cfg{config_.max_depth, config_.min_samples_leaf};

    for (std::size_t round = 0; round < config_.rounds; ++round) {
        RegressionTree tree;
        tree.fit(X, residual, tree_cfg);
        const Eigen::VectorXd pred = tree.predict(X);
        residual -= config_.shrinkage * pred;
        trees_.push_back(std::move(tree));
        train_history_.push_back(residual.squaredNorm() / static_cast<double>(y.size()));
    }
    fitted_ = true;
}

Eigen::VectorXd GbtRegressor::predict(const Eigen::MatrixXd& X) const {
    require_fitted();
    Eigen::VectorXd out = Eigen::VectorXd::Constant(X.rows(), base_);
    for (const auto& tree : trees_)
        out += config_.shrinkage * tree.predict(X);
    return out;
}

nlohmann::json GbtRegressor::to_json() const {
    require_fitted();
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) trees.push_back(t.to_json());
    return {{"config", config_.to_json()}, {"base", base_}, {"trees", trees}};
}

GbtRegressor GbtRegressor::from_json(const nlohmann::json& j) {
    GbtRegressor g(GbtConfig::from_json(j.at("config")));
    g.base_ = j.at("base").get<double>();
    for (const auto& t : j.at("trees"))
        g.trees_.push_back(RegressionTree::from_json(t));
    g.fitted_ = true;
    return g;
}

// ---------------------------------------------------------------------------
// transformers

Eigen::MatrixXd stacking_augment(const Regressor& fitted_inner, const Eigen::MatrixXd& X) {
    const Eigen::VectorXd pred = fitted_inner.predict(X);
    Eigen::MatrixXd out(X.rows(), X.cols() + 1);
    out.leftCols(X.cols()) = X;
    out.col(X.cols()) = pred;
    return out;
}

Eigen::MatrixXd feature_union(const Eigen::MatrixXd& left, const Eigen::MatrixXd& right) {
    if (left.rows() != right.rows())
        throw DimensionError("feature_union: row count mismatch");
    Eigen::MatrixXd out(left.rows(), left.cols() + right.cols());
    out.leftCols(left.cols()) = left;
    out.rightCols(right.cols()) = right;
    return out;
}

// ---------------------------------------------------------------------------
// PipelineTree

std::string to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::Source: return "source";
        case NodeKind::IqrScaler: return "iqr-scaler";
        case NodeKind::StandardScaler: return "standard-scaler";
        case NodeKind::StackingGbt: return "stacking-gbt";
        case NodeKind::StackingKnn: return "stacking-knn";
        case NodeKind::FeatureUnion: return "feature-union";
        case NodeKind::KnnEstimator: return "knn-regressor";
        case NodeKind::GbtEstimator: return "gbt-regressor";
    }
    return "unknown";
}

NodeKind node_kind_from_string(const std::string& s) {
    if (s == "source") return NodeKind::Source;
    if (s == "iqr-scaler") return NodeKind::IqrScaler;
    if (s == "standard-scaler") return NodeKind::StandardScaler;
    if (s == "stacking-gbt") return NodeKind::StackingGbt;
    if (s == "stacking-knn") return NodeKind::StackingKnn;
    if (s == "feature-union") return NodeKind::FeatureUnion;
    if (s == "knn-regressor") return NodeKind::KnnEstimator;
    if (s == "gbt-regressor") return NodeKind::GbtEstimator;
    throw SchemaError("unknown pipeline node kind: " + s);
}

bool is_estimator(NodeKind kind) {
    return kind == NodeKind::KnnEstimator || kind == NodeKind::GbtEstimator;
}

bool is_transformer(NodeKind kind) {
    switch (kind) {
        case NodeKind::IqrScaler:
        case NodeKind::StandardScaler:
        case NodeKind::StackingGbt:
        case NodeKind::StackingKnn:
        case NodeKind::FeatureUnion:
            return true;
        default:
            return false;
    }
}

std::size_t node_arity(NodeKind kind) {
    if (kind == NodeKind::Source) return 0;
    if (kind == NodeKind::FeatureUnion) return 2;
    return 1;
}

void PipelineTree::validate() const {
    if (nodes.empty())
        throw DomainError("empty pipeline tree");
    if (!is_estimator(nodes[0].kind))
        throw DomainError("pipeline root must be an estimator");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& nd = nodes[i];
        if (i > 0 && is_estimator(nd.kind))
            throw DomainError("estimator below the pipeline root");
        if (nd.children.size() != node_arity(nd.kind))
            throw DomainError("node '" + to_string(nd.kind) + "' has wrong arity");
        for (std::size_t c : nd.children) {
            if (c >= nodes.size() || c == i)
                throw DomainError("pipeline child index out of range");
        }
    }
    // reachability and leaf check from the root
    std::vector<char> seen(nodes.size(), 0);
    std::function<void(std::size_t)> walk = [&](std::size_t i) {
        if (seen[i])
            throw DomainError("pipeline tree is not a tree (shared node)");
        seen[i] = 1;
        if (nodes[i].children.empty() && nodes[i].kind != NodeKind::Source)
            throw DomainError("pipeline leaf is not a source node");
        for (std::size_t c : nodes[i].children) walk(c);
    };
    walk(0);
}

std::size_t PipelineTree::depth() const {
    std::function<std::size_t(std::size_t)> walk = [&](std::size_t i) -> std::size_t {
        const auto& nd = nodes[i];
        std::size_t child_max = 0;
        for (std::size_t c : nd.children) child_max = std::max(child_max, walk(c));
        return (nd.kind == NodeKind::Source ? 0 : 1) + child_max;
    };
    return nodes.empty() ? 0 : walk(0);
}

std::size_t PipelineTree::feature_width(std::size_t node, std::size_t input_width) const {
    const auto& nd = nodes.at(node);
    switch (nd.kind) {
        case NodeKind::Source: return input_width;
        case NodeKind::IqrScaler:
        case NodeKind::StandardScaler:
            return feature_width(nd.children[0], input_width);
        case NodeKind::StackingGbt:
        case NodeKind::StackingKnn:
            return feature_width(nd.children[0], input_width) + 1;
        case NodeKind::FeatureUnion:
            return feature_width(nd.children[0], input_width) +
                   feature_width(nd.children[1], input_width);
        case NodeKind::KnnEstimator:
        case NodeKind::GbtEstimator:
            return feature_width(nd.children[0], input_width);
    }
    throw DomainError("unknown node kind");
}

nlohmann::json PipelineTree::to_json() const {
    nlohmann::json nodes_json = nlohmann::json::array();
    for (const auto& nd : nodes)
        nodes_json.push_back({{"kind", to_string(nd.kind)},
                              {"hyper", nd.hyper},
                              {"children", nd.children}});
    return {{"nodes", nodes_json}};
}

PipelineTree PipelineTree::from_json(const nlohmann::json& j) {
    PipelineTree t;
    for (const auto& nd : j.at("nodes")) {
        PipelineNode p;
        p.kind = node_kind_from_string(nd.at("kind").get<std::string>());
        p.hyper = nd.value("hyper", nlohmann::json::object());
        p.children = nd.value("children", std::vector<std::size_t>{});
        t.nodes.push_back(std::move(p));
    }
    t.validate();
    return t;
}

PipelineTree fig5_tree(const GbtConfig& gbt, const KnnConfig& knn) {
    PipelineTree t;
    t.nodes.resize(5);
    t.nodes[0] = PipelineNode{NodeKind::KnnEstimator, knn.to_json(), {1}};
    t.nodes[1] = PipelineNode{NodeKind::FeatureUnion, nlohmann::json::object(), {2, 4}};
    t.nodes[2] = PipelineNode{NodeKind::StackingGbt, gbt.to_json(), {3}};
    t.nodes[3] = PipelineNode{NodeKind::Source, nlohmann::json::object(), {}};
    t.nodes[4] = PipelineNode{NodeKind::Source, nlohmann::json::object(), {}};
    t.validate();
    return t;
}

// ---------------------------------------------------------------------------
// PipelineModel

PipelineModel::PipelineModel(PipelineTree tree) : tree_(std::move(tree)) {
    tree_.validate();
}

namespace {

KnnConfig knn_config_from_hyper(const nlohmann::json& hyper) {
    return hyper.empty() ? KnnConfig{} : KnnConfig::from_json(hyper);
}

GbtConfig gbt_config_from_hyper(const nlohmann::json& hyper) {
    return hyper.empty() ? GbtConfig{} : GbtConfig::from_json(hyper);
}

} // namespace

Eigen::MatrixXd PipelineModel::transform_fit(std::size_t node, const Eigen::MatrixXd& X,
                                             const Eigen::VectorXd& y) {
    const auto& nd = tree_.nodes[node];
    switch (nd.kind) {
        case NodeKind::Source:
            return X;
        case NodeKind::IqrScaler:
        case NodeKind::StandardScaler: {
            const Eigen::MatrixXd in = transform_fit(nd.children[0], X, y);
            const ScalerKind kind = nd.kind == NodeKind::IqrScaler ? ScalerKind::IqrRobust
                                                                   : ScalerKind::Standard;
            scalers_[node] = std::make_unique<ScalerParams>(fit_scaler(in, kind));
            return apply_scaler(*scalers_[node], in);
        }
        case NodeKind::StackingGbt: {
            const Eigen::MatrixXd in = transform_fit(nd.children[0], X, y);
            gbts_[node] = std::make_unique<GbtRegressor>(gbt_config_from_hyper(nd.hyper));
            gbts_[node]->fit(in, y);
            return stacking_augment(*gbts_[node], in);
        }
        case NodeKind::StackingKnn: {
            const Eigen::MatrixXd in = transform_fit(nd.children[0], X, y);
            auto cfg = knn_config_from_hyper(nd.hyper);
            knns_[node] = std::make_unique<KnnRegressor>(cfg);
            knns_[node]->fit(in, y);
            return stacking_augment(*knns_[node], in);
        }
        case NodeKind::FeatureUnion: {
            const Eigen::MatrixXd left = transform_fit(nd.children[0], X, y);
            const Eigen::MatrixXd right = transform_fit(nd.children[1], X, y);
            return feature_union(left, right);
        }
        case NodeKind::KnnEstimator:
        case NodeKind::GbtEstimator:
            throw DomainError("estimator encountered below the pipeline root");
    }
    throw DomainError("unknown node kind");
}

Eigen::MatrixXd PipelineModel::transform_apply(std::size_t node,
                                               const Eigen::MatrixXd& X) const {
    const auto& nd = tree_.nodes[node];
    switch (nd.kind) {
        case NodeKind::Source:
            return X;
        case NodeKind::IqrScaler:
        case NodeKind::StandardScaler:
            return apply_scaler(*scalers_[node], transform_apply(nd.children[0], X));
        case NodeKind::StackingGbt:
            return stacking_augment(*gbts_[node], transform_apply(nd.children[0], X));
        case NodeKind::StackingKnn:
            return stacking_augment(*knns_[node], transform_apply(nd.children[0], X));
        case NodeKind::FeatureUnion:
            return feature_union(transform_apply(nd.children[0], X),
                                 transform_apply(nd.children[1], X));
        case NodeKind::KnnEstimator:
        case NodeKind::GbtEstimator:
            throw DomainError("estimator encountered below the pipeline root");
    }
    throw DomainError("unknown node kind");
}

void PipelineModel::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    tree_.validate();
    scalers_.clear();
    gbts_.clear();
    knns_.clear();
    scalers_.resize(tree_.nodes.size());
    gbts_.resize(tree_.nodes.size());
    knns_.resize(tree_.nodes.size());

    const auto& root = tree_.nodes[0];
    const Eigen::MatrixXd features = transform_fit(root.children[0], X, y);
    if (root.kind == NodeKind::KnnEstimator) {
        knns_[0] = std::make_unique<KnnRegressor>(knn_config_from_hyper(root.hyper));
        knns_[0]->fit(features, y);
    } else {
        gbts_[0] = std::make_unique<GbtRegressor>(gbt_config_from_hyper(root.hyper));
        gbts_[0]->fit(features, y);
    }
    fitted_ = true;
}

Eigen::VectorXd PipelineModel::predict(const Eigen::MatrixXd& X) const {
    require_fitted();
    const Eigen::MatrixXd features = transform_apply(tree_.nodes[0].children[0], X);
    if (tree_.nodes[0].kind == NodeKind::KnnEstimator)
        return knns_[0]->predict(features);
    return gbts_[0]->predict(features);
}

nlohmann::json PipelineModel::to_json() const {
    require_fitted();
    nlohmann::json j;
    j["tree"] = tree_.to_json();
    nlohmann::json state = nlohmann::json::array();
    for (std::size_t i = 0; i < tree_.nodes.size(); ++i) {
        nlohmann::json s = nlohmann::json::object();
        if (scalers_[i]) s["scaler"] = scalers_[i]->to_json();
        if (gbts_[i]) s["gbt"] = gbts_[i]->to_json();
        if (knns_[i]) s["knn"] = knns_[i]->to_json();
        state.push_back(s);
    }
    j["state"] = state;
    return j;
}

PipelineModel PipelineModel::from_json(const nlohmann::json& j) {
    PipelineModel m(PipelineTree::from_json(j.at("tree")));
    const auto& state = j.at("state");
    if (state.size() != m.tree_.nodes.size())
        throw SchemaError("pipeline state length mismatch");
    m.scalers_.resize(m.tree_.nodes.size());
    m.gbts_.resize(m.tree_.nodes.size());
    m.knns_.resize(m.tree_.nodes.size());
    for (std::size_t i = 0; i < m.tree_.nodes.size(); ++i) {
        if (state[i].contains("scaler"))
            m.scalers_[i] = std::make_unique<ScalerParams>(ScalerParams::from_json(state[i]["scaler"]));
        if (state[i].contains("gbt"))
            m.gbts_[i] = std::make_unique<GbtRegressor>(GbtRegressor::from_json(state[i]["gbt"]));
        if (state[i].contains("knn"))
            m.knns_[i] = std::make_unique<KnnRegressor>(KnnRegressor::from_json(state[i]["knn"]));
    }
    m.fitted_ = true;
    return m;
}

FitReport fig5_pipeline(const Eigen::MatrixXd& X_train, const Eigen::VectorXd& y_train,
                        const Eigen::MatrixXd& X_test, const Eigen::VectorXd& y_test,
                        const GbtConfig& gbt, const KnnConfig& knn) {
    PipelineModel model(fig5_tree(gbt, knn));
    model.fit(X_train, y_train);
    FitReport report;
    report.model_id = "fig5";
    report.hyperparameters = {{"gbt", gbt.to_json()}, {"knn", knn.to_json()}};
    report.train_mse = mse(y_train, model.predict(X_train));
    if (X_test.rows() > 0) {
        report.test_mse = mse(y_test, model.predict(X_test));
        if (y_test.size() >= 2) {
            const double var = (y_test.array() - y_test.mean()).matrix().squaredNorm();
            if (var > 0.0) report.r2 = r2_score(y_test, model.predict(X_test));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// GP search

void GpConfig::validate() const {
    if (population < 2) throw DomainError("gp population must be at least 2");
    if (generations == 0) throw DomainError("gp generations must be positive");
    if (mutation_rate < 0.0 || mutation_rate > 1.0)
        throw DomainError("gp mutation rate must lie in [0,1]");
    if (crossover_rate < 0.0 || crossover_rate > 1.0)
        throw DomainError("gp crossover rate must lie in [0,1]");
    if (tournament == 0) throw DomainError("gp tournament size must be positive");
    if (cv_folds < 2) throw DomainError("gp cv folds must be at least 2");
    if (elitism == 0) throw DomainError("gp elitism must keep at least one individual");
    if (max_depth == 0) throw DomainError("gp max depth must be positive");
    bool any_estimator = false;
    for (NodeKind k : registry) any_estimator |= is_estimator(k);
    if (!any_estimator)
        throw DomainError("gp registry holds no estimator kind");
}

namespace {

struct GpToolbox {
    std::vector<NodeKind> estimators;
    std::vector<NodeKind> transformers;
    std::size_t max_depth;

    explicit GpToolbox(const GpConfig& cfg) : max_depth(cfg.max_depth) {
        for (NodeKind k : cfg.registry) {
            if (is_estimator(k)) estimators.push_back(k);
            if (is_transformer(k)) transformers.push_back(k);
        }
    }

    nlohmann::json sample_hyper(NodeKind kind, Rng& rng) const {
        switch (kind) {
            case NodeKind::KnnEstimator: {
                const std::size_t ks[] = {2, 4, 8};
                const double ps[] = {1.0, 2.0, 4.0};
                KnnConfig c;
                c.k = ks[rng.below(3)];
                c.p = ps[rng.below(3)];
                return c.to_json();
            }
            case NodeKind::GbtEstimator: {
                const std::size_t rounds[] = {20, 50};
                const std::size_t depths[] = {2, 3};
                const double shrink[] = {0.1, 0.3};
                GbtConfig c;
                c.rounds = rounds[rng.below(2)];
                c.max_depth = depths[rng.below(2)];
                c.shrinkage = shrink[rng.below(2)];
                return c.to_json();
            }
            case NodeKind::StackingGbt: {
                GbtConfig c;
                c.rounds = 20;
                c.max_depth = 3;
                return c.to_json();
            }
            case NodeKind::StackingKnn: {
                KnnConfig c;
                c.k = 4;
                c.p = 2.0;
                return c.to_json();
            }
            default:
                return nlohmann::json::object();
        }
    }

    // grow a transformer subtree rooted at depth `depth` (stages used so far)
    std::size_t grow(PipelineTree& tree, std::size_t depth, Rng& rng) const {
        const bool must_stop = depth >= max_depth || transformers.empty();
        if (must_stop || rng.uniform() < 0.35) {
            tree.nodes.push_back(PipelineNode{NodeKind::Source, nlohmann::json::object(), {}});
            return tree.nodes.size() - 1;
        }
        const NodeKind kind = transformers[rng.below(transformers.size())];
        const std::size_t me = tree.nodes.size();
        tree.nodes.push_back(PipelineNode{kind, sample_hyper(kind, rng), {}});
        for (std::size_t c = 0; c < node_arity(kind); ++c) {
            const std::size_t child = grow(tree, depth + 1, rng);
            tree.nodes[me].children.push_back(child);
        }
        return me;
    }

    PipelineTree random_tree(Rng& rng) const {
        PipelineTree t;
        const NodeKind root = estimators[rng.below(estimators.size())];
        t.nodes.push_back(PipelineNode{root, sample_hyper(root, rng), {}});
        const std::size_t child = grow(t, 1, rng);
        t.nodes[0].children.push_back(child);
        t.validate();
        return t;
    }

    // replace a random node with a registry-compatible node (same arity
    // class); the root swaps estimator kind, transformers swap kind and
    // resample hyperparameters
    PipelineTree mutate(const PipelineTree& tree, Rng& rng) const {
        PipelineTree t = tree;
        const std::size_t target = rng.below(t.nodes.size());
        PipelineNode& nd = t.nodes[target];
        if (target == 0) {
            const NodeKind kind = estimators[rng.below(estimators.size())];
            nd.kind = kind;
            nd.hyper = sample_hyper(kind, rng);
            return t;
        }
        if (nd.kind == NodeKind::Source) {
            // grow a fresh subtree in place of the source leaf when depth allows
            return t;
        }
        std::vector<NodeKind> options;
        for (NodeKind k : transformers)
            if (node_arity(k) == node_arity(nd.kind)) options.push_back(k);
        if (options.empty()) return t;
        const NodeKind kind = options[rng.below(options.size())];
        nd.kind = kind;
        nd.hyper = sample_hyper(kind, rng);
        return t;
    }
};

// deep-copy the subtree of `src` rooted at `from` into `dst`, returning the
// new root index
std::size_t copy_subtree(const PipelineTree& src, std::size_t from, PipelineTree& dst) {
    const std::size_t me = dst.nodes.size();
    dst.nodes.push_back(PipelineNode{src.nodes[from].kind, src.nodes[from].hyper, {}});
    for (std::size_t c : src.nodes[from].children) {
        const std::size_t child = copy_subtree(src, c, dst);
        dst.nodes[me].children.push_back(child);
    }
    return me;
}

// rebuild `tree` as a compact tree, replacing the subtree at `at` with the
// subtree of `donor` rooted at `donor_at`
PipelineTree splice(const PipelineTree& tree, std::size_t at, const PipelineTree& donor,
                    std::size_t donor_at) {
    PipelineTree out;
    std::function<std::size_t(std::size_t)> walk = [&](std::size_t i) -> std::size_t {
        if (i == at) return copy_subtree(donor, donor_at, out);
        const std::size_t me = out.nodes.size();
        out.nodes.push_back(PipelineNode{tree.nodes[i].kind, tree.nodes[i].hyper, {}});
        for (std::size_t c : tree.nodes[i].children) {
            const std::size_t child = walk(c);
            out.nodes[me].children.push_back(child);
        }
        return me;
    };
    walk(0);
    return out;
}

} // namespace

GpResult gp_search(const GpConfig& config, const Eigen::MatrixXd& X,
                   const Eigen::VectorXd& y) {
    config.validate();
    if (X.rows() != y.size())
        throw DimensionError("gp_search: row count mismatch");
    const GpToolbox toolbox(config);
    Rng rng(Rng::derive_seed(config.seed, 0x61));
    const std::uint64_t cv_seed = Rng::derive_seed(config.seed, 0x62);

    auto fitness_of = [&](const PipelineTree& tree) -> double {
        try {
            tree.validate();
            const auto cv = cross_validate(
                [&] { return std::unique_ptr<Regressor>(new PipelineModel(tree)); }, X, y,
                config.cv_folds, cv_seed);
            return std::isfinite(cv.mean_mse) ? cv.mean_mse
                                              : std::numeric_limits<double>::infinity();
        } catch (const std::exception&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    std::vector<PipelineTree> population;
    population.reserve(config.population);
    for (std::size_t i = 0; i < config.population; ++i)
        population.push_back(toolbox.random_tree(rng));

    std::vector<double> fitness(config.population);
    GpResult result;

    for (std::size_t gen = 0; gen < config.generations; ++gen) {
        for (std::size_t i = 0; i < population.size(); ++i)
            fitness[i] = fitness_of(population[i]);

        // rank: fitness ascending, insertion order on ties
        std::vector<std::size_t> rank(population.size());
        std::iota(rank.begin(), rank.end(), 0);
        std::stable_sort(rank.begin(), rank.end(),
                         [&](std::size_t a, std::size_t b) { return fitness[a] < fitness[b]; });

        double mean = 0.0;
        std::size_t finite = 0;
        for (double f : fitness)
            if (std::isfinite(f)) {
                mean += f;
                ++finite;
            }
        result.best_history.push_back(fitness[rank[0]]);
        result.mean_history.push_back(finite ? mean / static_cast<double>(finite)
                                             : std::numeric_limits<double>::infinity());

        if (gen + 1 == config.generations) {
            result.best = population[rank[0]];
            result.best_fitness = fitness[rank[0]];
            break;
        }

        auto tournament_pick = [&]() -> const PipelineTree& {
            std::size_t best = rng.below(population.size());
            for (std::size_t t = 1; t < config.tournament; ++t) {
                const std::size_t cand = rng.below(population.size());
                if (fitness[cand] < fitness[best] ||
                    (fitness[cand] == fitness[best] && cand < best))
                    best = cand;
            }
            return population[best];
        };

        std::vector<PipelineTree> next;
        next.reserve(config.population);
        for (std::size_t e = 0; e < std::min(config.elitism, population.size()); ++e)
            next.push_back(population[rank[e]]);

        while (next.size() < config.population) {
            PipelineTree child = tournament_pick();
            if (rng.uniform() < config.crossover_rate) {
                const PipelineTree& other = tournament_pick();
                // swap a random non-root subtree from each parent
                if (child.nodes.size() > 1 && other.nodes.size() > 1) {
                    const std::size_t at = 1 + rng.below(child.nodes.size() - 1);
                    const std::size_t from = 1 + rng.below(other.nodes.size() - 1);
                    PipelineTree crossed = splice(child, at, other, from);
                    try {
                        crossed.validate();
                        if (crossed.depth() <= config.max_depth) child = std::move(crossed);
                    } catch (const std::exception&) {
                        // keep the untouched parent copy
                    }
                }
            }
            if (rng.uniform() < config.mutation_rate) {
                PipelineTree mutated = toolbox.mutate(child, rng);
                try {
                    mutated.validate();
                    if (mutated.depth() <= config.max_depth) child = std::move(mutated);
                } catch (const std::exception&) {
                }
            }
            next.push_back(std::move(child));
        }
        population = std::move(next);
    }
    return result;
}

} // namespace diodeq
