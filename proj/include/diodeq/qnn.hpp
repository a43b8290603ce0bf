#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "diodeq/dataset.hpp"
#include "diodeq/fock.hpp"

namespace diodeq {

// One circuit layer: R(theta1) -> S(r) -> R(theta2) -> D(d) -> K(kappa).
// Squeeze magnitude and displacement are real; phases live in the rotations.
struct QnnLayerParams {
    double rotation1 = 0.0;
    double squeeze = 0.0;
    double rotation2 = 0.0;
    double displacement = 0.0;
    double kerr = 0.0;
};

inline constexpr int kQnnLayers = 8;
inline constexpr std::size_t kQnnParamsPerLayer = 5;

struct EncodedInput {
    double alpha_in = 0.0;  // displacement amplitude, in [-1.1, 1] on train data
    double r_in = 0.0;      // squeeze magnitude, in [0, 0.8] on train data
    bool extrapolated = false;  // outside the fitted range (linear extrapolation)
};

struct QnnModel {
    std::vector<QnnLayerParams> layers;
    ScalerParams voltage_scaler;    // min-max onto [-1.1, 1]
    ScalerParams intensity_scaler;  // min-max onto [0, 0.8]
    bool absolute_encoding = false; // |.| applied to encoded values when true
    double target_scale = 1e3;      // currents are multiplied by this for the loss
    int cutoff = kDefaultCutoff;
    double trace_penalty = 0.01;    // lambda

    std::size_t n_params() const { return layers.size() * kQnnParamsPerLayer; }
    Eigen::VectorXd flat_params() const;
    void set_flat_params(const Eigen::VectorXd& p);

    nlohmann::json to_json() const;
    static QnnModel from_json(const nlohmann::json& j);
};

// Fits the two encoding scalers on the training data and draws the 40
// initial parameters from a seeded zero-mean Gaussian.
QnnModel make_qnn_model(const IVDataset& train_data, std::size_t n_layers = kQnnLayers,
                        int cutoff = kDefaultCutoff, double init_std = 1e-3,
                        std::uint64_t seed = 42);

EncodedInput qnn_encode(const QnnModel& model, const IVSample& sample);

struct QnnForwardResult {
    double prediction = 0.0;  // <x> of the final state, in scaled-target units
    double trace = 0.0;       // <psi|1|psi>
    FockState state;
};

// Prepare D(alpha) S(r) |0>, apply each layer, measure x.
QnnForwardResult qnn_forward(const QnnModel& model, const EncodedInput& input);

// Mean squared error of <x> against scaled targets plus
// lambda * mean(1 - trace).
double qnn_loss(const QnnModel& model, const std::vector<EncodedInput>& inputs,
                const Eigen::VectorXd& scaled_targets);

// Central finite differences, step h, over all layer parameters; ordering
// is layer-major (rotation1, squeeze, rotation2, displacement, kerr).
Eigen::VectorXd qnn_gradient(const QnnModel& model, const std::vector<EncodedInput>& inputs,
                             const Eigen::VectorXd& scaled_targets, double h = 1e-3);

struct QnnTrainOptions {
    std::size_t epochs = 500;
    std::size_t batch_size = 32;
    double learning_rate = 0.005;
    double fd_step = 1e-3;
    std::uint64_t seed = 42;
    double abort_trace = 0.9;  // abort when any sample's trace falls below
};

struct QnnHistory {
    std::vector<double> train_loss;
    std::vector<double> test_loss;   // empty without a test set
    std::vector<double> min_trace;   // over train (and test) samples, per epoch
};

// Seeded minibatch Adam on finite-difference gradients. Targets are scaled
// by model.target_scale internally; throws DivergenceError on non-finite
// loss or on a trace below options.abort_trace.
QnnHistory qnn_train(QnnModel& model, const IVDataset& train_data,
                     const IVDataset* test_data, const QnnTrainOptions& options,
                     QnnHistory* partial_out = nullptr);

} // namespace diodeq
