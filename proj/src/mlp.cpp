#include "diodeq/mlp.hpp"

#include <cmath>
#include <numeric>

#include "diodeq/rng.hpp"

namespace diodeq {

void MlpConfig::validate() const {
    if (layer_sizes.size() < 3)
        throw DomainError("MLP needs at least one hidden layer");
    for (std::size_t s : layer_sizes)
        if (s == 0)
            throw DomainError("MLP layer sizes must be positive");
    if (!(learning_rate > 0.0))
        throw DomainError("learning rate must be positive");
    if (batch_size == 0)
        throw DomainError("batch size must be positive");
    if (!(init_std > 0.0))
        throw DomainError("init std must be positive");
}

nlohmann::json MlpConfig::to_json() const {
    nlohmann::json j;
    j["layer_sizes"] = layer_sizes;
    j["learning_rate"] = learning_rate;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["init_seed"] = init_seed;
    j["init_std"] = init_std;
    return j;
}

MlpConfig MlpConfig::from_json(const nlohmann::json& j) {
    MlpConfig c;
    if (j.contains("layer_sizes")) c.layer_sizes = j["layer_sizes"].get<std::vector<std::size_t>>();
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.init_seed = j.value("init_seed", c.init_seed);
    c.init_std = j.value("init_std", c.init_std);
    c.validate();
    return c;
}

MlpWeights init_mlp_weights(const MlpConfig& config) {
    config.validate();
    Rng rng(Rng::derive_seed(config.init_seed, 0x11));
    MlpWeights w;
    w.reserve(config.layer_sizes.size() - 1);
    for (std::size_t l = 0; l + 1 < config.layer_sizes.size(); ++l) {
        LayerWeights lw;
        lw.W.resize(static_cast<Eigen::Index>(config.layer_sizes[l + 1]),
                    static_cast<Eigen::Index>(config.layer_sizes[l]));
        lw.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config.layer_sizes[l + 1]));
        for (Eigen::Index r = 0; r < lw.W.rows(); ++r)
            for (Eigen::Index c = 0; c < lw.W.cols(); ++c)
                lw.W(r, c) = rng.normal(0.0, config.init_std);
        w.push_back(std::move(lw));
    }
    return w;
}

Eigen::MatrixXd mlp_forward(const MlpWeights& weights, const Eigen::MatrixXd& inputs,
                            ForwardCache* cache) {
    if (weights.empty())
        throw Error("forward pass on an empty network");
    if (inputs.rows() != weights.front().W.cols())
        throw DimensionError("forward: input dimension mismatch");

    if (cache) {
        cache->input = inputs;
        cache->pre.clear();
        cache->act.clear();
        cache->pre.reserve(weights.size());
        cache->act.reserve(weights.size());
    }

    Eigen::MatrixXd a = inputs;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Eigen::MatrixXd z = (weights[l].W * a).colwise() + weights[l].b;
        if (l + 1 < weights.size())
            a = z.array().max(0.0).matrix();  // RELU, derivative 0 at 0
        else
            a = z;  // linear output layer
        if (cache) {
            cache->pre.push_back(std::move(z));
            cache->act.push_back(a);
        }
    }
    return a;
}

MlpWeights mlp_backward(const MlpWeights& weights, const ForwardCache& cache,
                        const Eigen::MatrixXd& targets) {
    if (cache.act.size() != weights.size())
        throw Error("backward called without a matching forward cache");
    const Eigen::MatrixXd& output = cache.act.back();
    if (output.rows() != targets.rows() || output.cols() != targets.cols())
        throw DimensionError("backward: target shape mismatch");
    const double m = static_cast<double>(targets.cols());

    MlpWeights grads(weights.size());
    // dE/dz at the linear output layer for E = (1/m) sum (y - yhat)^2
    Eigen::MatrixXd delta = 2.0 / m * (output - targets);
    for (std::size_t l = weights.size(); l-- > 0;) {
        const Eigen::MatrixXd& prev_act = l == 0 ? cache.input : cache.act[l - 1];
        grads[l].W = delta * prev_act.transpose();
        grads[l].b = delta.rowwise().sum();
        if (l > 0) {
            delta = weights[l].W.transpose() * delta;
            delta.array() *= (cache.pre[l - 1].array() > 0.0).cast<double>();
        }
    }
    return grads;
}

AdamState AdamState::like(const MlpWeights& weights) {
    AdamState s;
    s.m.resize(weights.size());
    s.v.resize(weights.size());
    for (std::size_t l = 0; l < weights.size(); ++l) {
        s.m[l].W = Eigen::MatrixXd::Zero(weights[l].W.rows(), weights[l].W.cols());
        s.m[l].b = Eigen::VectorXd::Zero(weights[l].b.size());
        s.v[l].W = Eigen::MatrixXd::Zero(weights[l].W.rows(), weights[l].W.cols());
        s.v[l].b = Eigen::VectorXd::Zero(weights[l].b.size());
    }
    return s;
}

void adam_step(AdamState& state, MlpWeights& weights, const MlpWeights& gradients,
               double learning_rate) {
    if (state.m.size() != weights.size() || gradients.size() != weights.size())
        throw DimensionError("adam_step: state/parameter shape mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    auto update = [&](auto& m, auto& v, auto& p, const auto& g) {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        p.array() -= learning_rate * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + state.epsilon);
    };
    for (std::size_t l = 0; l < weights.size(); ++l) {
        update(state.m[l].W, state.v[l].W, weights[l].W, gradients[l].W);
        update(state.m[l].b, state.v[l].b, weights[l].b, gradients[l].b);
    }
}

void MlpRegressor::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    train(X, y);
}

MlpHistory MlpRegressor::train(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Eigen::MatrixXd* X_test, const Eigen::VectorXd* y_test,
                               MlpHistory* partial_out) {
    config_.validate();
    if (X.rows() != y.size())
        throw DimensionError("mlp train: row count mismatch");
    if (X.rows() == 0)
        throw EmptyDatasetError("mlp train on empty data");
    if (static_cast<std::size_t>(X.cols()) != config_.layer_sizes.front())
        throw DimensionError("mlp train: feature count does not match the input layer");

    weights_ = init_mlp_weights(config_);
    fitted_ = true;
    AdamState adam = AdamState::like(weights_);
    MlpHistory history;

    const Eigen::MatrixXd Xt = X.transpose();  // fan_in x n
    const Eigen::MatrixXd Yt = y.transpose();
    const auto n = static_cast<std::size_t>(X.rows());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(Rng::derive_seed(config_.init_seed, 0x22));

    for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += config_.batch_size) {
            const std::size_t stop = std::min(start + config_.batch_size, n);
            Eigen::MatrixXd xb(X.cols(), static_cast<Eigen::Index>(stop - start));
            Eigen::MatrixXd yb(1, static_cast<Eigen::Index>(stop - start));
            for (std::size_t i = start; i < stop; ++i) {
                xb.col(static_cast<Eigen::Index>(i - start)) = Xt.col(static_cast<Eigen::Index>(order[i]));
                yb(0, static_cast<Eigen::Index>(i - start)) = Yt(0, static_cast<Eigen::Index>(order[i]));
            }
            ForwardCache cache;
            mlp_forward(weights_, xb, &cache);
            const MlpWeights grads = mlp_backward(weights_, cache, yb);
            adam_step(adam, weights_, grads, config_.learning_rate);
        }

        const double train_loss = mse(y, predict(X));
        if (!std::isfinite(train_loss)) {
            if (partial_out) *partial_out = history;
            throw DivergenceError("training loss became non-finite", epoch);
        }
        history.train_mse.push_back(train_loss);
        if (X_test && y_test)
            history.test_mse.push_back(mse(*y_test, predict(*X_test)));
        if (partial_out) *partial_out = history;
    }
    return history;
}

Eigen::VectorXd MlpRegressor::predict(const Eigen::MatrixXd& X) const {
    require_fitted();
    const Eigen::MatrixXd out = mlp_forward(weights_, X.transpose());
    return out.row(0).transpose();
}

nlohmann::json MlpRegressor::to_json() const {
    require_fitted();
    nlohmann::json j;
    j["config"] = config_.to_json();
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& lw : weights_) {
        nlohmann::json layer;
        nlohmann::json wm = nlohmann::json::array();
        for (Eigen::Index r = 0; r < lw.W.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < lw.W.cols(); ++c) row.push_back(lw.W(r, c));
            wm.push_back(row);
        }
        layer["W"] = wm;
        layer["b"] = std::vector<double>(lw.b.data(), lw.b.data() + lw.b.size());
        layers.push_back(layer);
    }
    j["layers"] = layers;
    return j;
}

MlpRegressor MlpRegressor::from_json(const nlohmann::json& j) {
    MlpRegressor model(MlpConfig::from_json(j.at("config")));
    for (const auto& layer : j.at("layers")) {
        LayerWeights lw;
        const auto& wm = layer.at("W");
        lw.W.resize(static_cast<Eigen::Index>(wm.size()),
                    static_cast<Eigen::Index>(wm.front().size()));
        for (std::size_t r = 0; r < wm.size(); ++r) {
            const auto row = wm[r].get<std::vector<double>>();
            for (std::size_t c = 0; c < row.size(); ++c)
                lw.W(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
        }
        const auto b = layer.at("b").get<std::vector<double>>();
        lw.b = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
        model.weights_.push_back(std::move(lw));
    }
    if (model.weights_.empty())
        throw SchemaError("mlp model: no layers");
    model.fitted_ = true;
    return model;
}

} // namespace diodeq
