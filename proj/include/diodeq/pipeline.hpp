#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "diodeq/dataset.hpp"
#include "diodeq/knn.hpp"
#include "diodeq/regression.hpp"

namespace diodeq {

struct TreeConfig {
    std::size_t max_depth = 3;
    std::size_t min_samples_leaf = 1;
};

// Binary regression tree with exact greedy variance-reduction splits;
// leaves predict the mean target of their samples.
class RegressionTree {
public:
    void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const TreeConfig& config);
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
    bool fitted() const { return !nodes_.empty(); }
    std::size_t depth() const;

    nlohmann::json to_json() const;
    static RegressionTree from_json(const nlohmann::json& j);

private:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        double value = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
    };

    std::int32_t build(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi,
                       std::size_t depth, const TreeConfig& config);

    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
};

struct GbtConfig {
    std::size_t rounds = 50;
    double shrinkage = 0.1;  // eta in (0, 1]
    std::size_t max_depth = 3;
    std::size_t min_samples_leaf = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static GbtConfig from_json(const nlohmann::json& j);
};

// First-order gradient boosting on squared loss: round t fits a tree to the
// residuals y - F_{t-1}(x).
class GbtRegressor : public Regressor {
public:
    GbtRegressor() = default;
    explicit GbtRegressor(GbtConfig config) : config_(std::move(config)) {}

    void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) override;
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override;
    bool fitted() const override { return fitted_; }

    const GbtConfig& config() const { return config_; }
    // training MSE after each boosting round
    const std::vector<double>& train_history() const { return train_history_; }

    nlohmann::json to_json() const;
    static GbtRegressor from_json(const nlohmann::json& j);

private:
    GbtConfig config_;
    double base_ = 0.0;
    std::vector<RegressionTree> trees_;
    std::vector<double> train_history_;
    bool fitted_ = false;
};

// Appends the inner regressor's predictions as one extra feature column.
Eigen::MatrixXd stacking_augment(const Regressor& fitted_inner, const Eigen::MatrixXd& X);

// Concatenates feature blocks column-wise (left then right).
Eigen::MatrixXd feature_union(const Eigen::MatrixXd& left, const Eigen::MatrixXd& right);

// ---------------------------------------------------------------------------
// Tree-encoded pipelines (the GP genotype)

enum class NodeKind {
    Source,          // raw input features (leaf)
    IqrScaler,       // 1 child
    StandardScaler,  // 1 child
    StackingGbt,     // 1 child, appends a GBT prediction column
    StackingKnn,     // 1 child, appends a KNN prediction column
    FeatureUnion,    // 2 children
    KnnEstimator,    // root only, 1 child
    GbtEstimator,    // root only, 1 child
};

std::string to_string(NodeKind kind);
NodeKind node_kind_from_string(const std::string& s);
bool is_estimator(NodeKind kind);
bool is_transformer(NodeKind kind);
std::size_t node_arity(NodeKind kind);

struct PipelineNode {
    NodeKind kind = NodeKind::Source;
    nlohmann::json hyper = nlohmann::json::object();
    std::vector<std::size_t> children;
};

struct PipelineTree {
    std::vector<PipelineNode> nodes;  // node 0 is the root estimator

    // Structural type check: estimator at the root only, transformer
    // arities respected, every leaf a Source.
    void validate() const;
    // Longest root-to-leaf path counting estimator/transformer stages
    // (Source excluded): a bare estimator has depth 1.
    std::size_t depth() const;
    // Output feature width per node for d input features.
    std::size_t feature_width(std::size_t node, std::size_t input_width) const;

    nlohmann::json to_json() const;
    static PipelineTree from_json(const nlohmann::json& j);
};

// The fixed stacked genotype: KNN estimator fed by the union of a
// GBT-stacked copy of the data and the raw data (2 -> 3 -> 5 features).
PipelineTree fig5_tree(const GbtConfig& gbt, const KnnConfig& knn);

// A pipeline tree fitted end to end: transformers and the estimator are
// fit on the training data only, and predictions replay the transforms.
class PipelineModel : public Regressor {
public:
    PipelineModel() = default;
    explicit PipelineModel(PipelineTree tree);

    void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) override;
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override;
    bool fitted() const override { return fitted_; }

    const PipelineTree& tree() const { return tree_; }

    nlohmann::json to_json() const;  // genotype plus fitted component state
    static PipelineModel from_json(const nlohmann::json& j);

private:
    Eigen::MatrixXd transform_fit(std::size_t node, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y);
    Eigen::MatrixXd transform_apply(std::size_t node, const Eigen::MatrixXd& X) const;

    PipelineTree tree_;
    // per-node fitted payloads (indexed like tree_.nodes)
    std::vector<std::unique_ptr<ScalerParams>> scalers_;
    std::vector<std::unique_ptr<GbtRegressor>> gbts_;
    std::vector<std::unique_ptr<KnnRegressor>> knns_;
    bool fitted_ = false;
};

// One run of the fixed stacked pipeline: fit on train, report train/test MSE.
FitReport fig5_pipeline(const Eigen::MatrixXd& X_train, const Eigen::VectorXd& y_train,
                        const Eigen::MatrixXd& X_test, const Eigen::VectorXd& y_test,
                        const GbtConfig& gbt, const KnnConfig& knn);

// ---------------------------------------------------------------------------
// Genetic-programming pipeline search

struct GpConfig {
    std::size_t population = 24;
    std::size_t generations = 50;
    double mutation_rate = 0.7;
    double crossover_rate = 0.15;
    std::size_t tournament = 3;
    std::size_t cv_folds = 5;
    std::uint64_t seed = 42;
    std::size_t elitism = 1;
    std::size_t max_depth = 3;
    std::vector<NodeKind> registry = {
        NodeKind::IqrScaler,  NodeKind::StandardScaler, NodeKind::StackingGbt,
        NodeKind::StackingKnn, NodeKind::FeatureUnion,  NodeKind::KnnEstimator,
        NodeKind::GbtEstimator,
    };

    void validate() const;
};

struct GpResult {
    PipelineTree best;
    double best_fitness = 0.0;
    std::vector<double> best_history;  // per generation, non-increasing
    std::vector<double> mean_history;  // over finite-fitness individuals
};

// Generational GP with tournament selection, subtree crossover, node
// mutation and elitism. Fitness is k-fold CV mean MSE; individuals that
// fail to evaluate score +inf and stay in the population.
GpResult gp_search(const GpConfig& config, const Eigen::MatrixXd& X,
                   const Eigen::VectorXd& y);

} // namespace diodeq
