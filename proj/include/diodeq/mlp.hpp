#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "diodeq/regression.hpp"

namespace diodeq {

struct MlpConfig {
    // input ... output; hidden layers use RELU, the output layer is linear
    std::vector<std::size_t> layer_sizes = {2, 16, 32, 32, 16, 1};
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 1000;
    std::uint64_t init_seed = 42;
    double init_std = 0.1;

    void validate() const;
    nlohmann::json to_json() const;
    static MlpConfig from_json(const nlohmann::json& j);
};

struct LayerWeights {
    Eigen::MatrixXd W;  // fan_out x fan_in
    Eigen::VectorXd b;
};

using MlpWeights = std::vector<LayerWeights>;

struct ForwardCache {
    Eigen::MatrixXd input;                 // fan_in x batch
    std::vector<Eigen::MatrixXd> pre;      // per layer, pre-activation
    std::vector<Eigen::MatrixXd> act;      // per layer, post-activation
};

MlpWeights init_mlp_weights(const MlpConfig& config);

// Columns are samples. Returns the output block (out_dim x batch); fills
// the cache when given.
Eigen::MatrixXd mlp_forward(const MlpWeights& weights, const Eigen::MatrixXd& inputs,
                            ForwardCache* cache = nullptr);

// Gradients of the batch-mean squared error (1/m sum (y - yhat)^2),
// averaged over the batch.
MlpWeights mlp_backward(const MlpWeights& weights, const ForwardCache& cache,
                        const Eigen::MatrixXd& targets);

struct AdamState {
    std::vector<LayerWeights> m;
    std::vector<LayerWeights> v;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState like(const MlpWeights& weights);
};

void adam_step(AdamState& state, MlpWeights& weights, const MlpWeights& gradients,
               double learning_rate);

struct MlpHistory {
    std::vector<double> train_mse;
    std::vector<double> test_mse;  // empty when no test set supplied
};

class MlpRegressor : public Regressor {
public:
    MlpRegressor() = default;
    explicit MlpRegressor(MlpConfig config) : config_(std::move(config)) {}

    void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) override;
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override;
    bool fitted() const override { return fitted_; }

    // Seeded minibatch Adam; features are expected pre-scaled (standard
    // scaling). Records train (and test) MSE per epoch; throws
    // DivergenceError on a non-finite loss.
    MlpHistory train(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const Eigen::MatrixXd* X_test = nullptr,
                     const Eigen::VectorXd* y_test = nullptr,
                     MlpHistory* partial_out = nullptr);

    const MlpConfig& config() const { return config_; }
    const MlpWeights& weights() const { return weights_; }
    MlpWeights& mutable_weights() { return weights_; }

    nlohmann::json to_json() const;
    static MlpRegressor from_json(const nlohmann::json& j);

private:
    MlpConfig config_;
    MlpWeights weights_;
    bool fitted_ = false;
};

} // namespace diodeq
