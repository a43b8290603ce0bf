#include "diodeq/qnn.hpp"

#include <cmath>
#include <numeric>

#include "diodeq/rng.hpp"

namespace diodeq {

namespace {

// Training workspace: spectral bases of the real displacement and squeeze
// directions at a padded cutoff, compressed gate blocks at the working
// cutoff. Layer gates built here match apply_* gate semantics to rounding.
class CircuitWorkspace {
public:
    explicit CircuitWorkspace(int cutoff)
        : cutoff_(cutoff), pad_(cutoff + 40) {
        const CMatrix a = annihilation_matrix(pad_);
        const CMatrix ad = a.adjoint();
        const Cplx mi(0.0, -1.0);
        Eigen::SelfAdjointEigenSolver<CMatrix> disp(mi * (ad - a));
        Eigen::SelfAdjointEigenSolver<CMatrix> sqz(mi * 0.5 * (a * a - ad * ad));
        if (disp.info() != Eigen::Success || sqz.info() != Eigen::Success)
            throw Error("circuit workspace eigendecomposition failed");
        disp_lam_ = disp.eigenvalues();
        sqz_lam_ = sqz.eigenvalues();
        disp_rows_ = disp.eigenvectors().topRows(cutoff_);
        sqz_rows_ = sqz.eigenvectors().topRows(cutoff_);
        disp_cols_ = disp.eigenvectors().adjoint().leftCols(cutoff_);
        sqz_cols_ = sqz.eigenvectors().adjoint().leftCols(cutoff_);

        const LadderOperators ops = ladder_matrices(cutoff_);
        x_op_ = ops.x;
        ns_.resize(cutoff_);
        for (int n = 0; n < cutoff_; ++n) ns_(n) = static_cast<double>(n);
    }

    int cutoff() const { return cutoff_; }

    CMatrix displacement_block(double d) const {
        const CVector phase =
            (Cplx(0.0, 1.0) * d * disp_lam_.cast<Cplx>().array()).exp().matrix();
        return disp_rows_ * phase.asDiagonal() * disp_cols_;
    }

    CMatrix squeeze_block(double r) const {
        const CVector phase =
            (Cplx(0.0, 1.0) * r * sqz_lam_.cast<Cplx>().array()).exp().matrix();
        return sqz_rows_ * phase.asDiagonal() * sqz_cols_;
    }

    CVector rotation_diag(double phi) const {
        return (Cplx(0.0, 1.0) * phi * ns_.cast<Cplx>().array()).exp().matrix();
    }

    CVector kerr_diag(double kappa) const {
        return (Cplx(0.0, 1.0) * kappa * (ns_.array() * ns_.array()).cast<Cplx>()).exp().matrix();
    }

    // U = K D R2 S R1, the layer applied left to right on a state.
    CMatrix layer_matrix(const QnnLayerParams& p) const {
        CMatrix u = squeeze_block(p.squeeze) * rotation_diag(p.rotation1).asDiagonal();
        u = displacement_block(p.displacement) * (rotation_diag(p.rotation2).asDiagonal() * u);
        return kerr_diag(p.kerr).asDiagonal() * u;
    }

    CVector encode_state(const EncodedInput& in) const {
        CVector v = CVector::Zero(cutoff_);
        v(0) = 1.0;
        v = squeeze_block(in.r_in) * v;
        v = displacement_block(in.alpha_in) * v;
        return v;
    }

    double expect_x(const CVector& psi) const {
        return (psi.adjoint() * (x_op_ * psi))(0, 0).real();
    }

    const CMatrix& x_op() const { return x_op_; }

private:
    static CMatrix annihilation_matrix(int dim) {
        CMatrix a = CMatrix::Zero(dim, dim);
        for (int n = 1; n < dim; ++n)
            a(n - 1, n) = std::sqrt(static_cast<double>(n));
        return a;
    }

    int cutoff_;
    int pad_;
    Eigen::VectorXd disp_lam_, sqz_lam_, ns_;
    CMatrix disp_rows_, sqz_rows_, disp_cols_, sqz_cols_;
    CMatrix x_op_;
};

double batch_loss(const CircuitWorkspace& ws, const CMatrix& states,
                  const Eigen::VectorXd& targets, double lambda) {
    const Eigen::Index m = states.cols();
    double fit = 0.0, trace_pen = 0.0;
    const CMatrix xs = ws.x_op() * states;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double pred = (states.col(i).adjoint() * xs.col(i))(0, 0).real();
        const double tr = states.col(i).squaredNorm();
        const double e = targets(i) - pred;
        fit += e * e;
        trace_pen += 1.0 - tr;
    }
    return fit / static_cast<double>(m) + lambda * trace_pen / static_cast<double>(m);
}

void check_model(const QnnModel& model) {
    if (model.layers.empty())
        throw DomainError("QNN model has no layers");
    if (model.cutoff < 2)
        throw DomainError("QNN cutoff must be at least 2");
    if (model.trace_penalty < 0.0)
        throw DomainError("trace penalty must be non-negative");
}

} // namespace

Eigen::VectorXd QnnModel::flat_params() const {
    Eigen::VectorXd p(static_cast<Eigen::Index>(n_params()));
    Eigen::Index k = 0;
    for (const auto& l : layers) {
        p(k++) = l.rotation1;
        p(k++) = l.squeeze;
        p(k++) = l.rotation2;
        p(k++) = l.displacement;
        p(k++) = l.kerr;
    }
    return p;
}

void QnnModel::set_flat_params(const Eigen::VectorXd& p) {
    if (static_cast<std::size_t>(p.size()) != n_params())
        throw DimensionError("QNN parameter vector length mismatch");
    Eigen::Index k = 0;
    for (auto& l : layers) {
        l.rotation1 = p(k++);
        l.squeeze = p(k++);
        l.rotation2 = p(k++);
        l.displacement = p(k++);
        l.kerr = p(k++);
    }
}

nlohmann::json QnnModel::to_json() const {
    nlohmann::json j;
    nlohmann::json ls = nlohmann::json::array();
    for (const auto& l : layers)
        ls.push_back({l.rotation1, l.squeeze, l.rotation2, l.displacement, l.kerr});
    j["layers"] = ls;
    j["voltage_scaler"] = voltage_scaler.to_json();
    j["intensity_scaler"] = intensity_scaler.to_json();
    j["absolute_encoding"] = absolute_encoding;
    j["target_scale"] = target_scale;
    j["cutoff"] = cutoff;
    j["lambda"] = trace_penalty;
    return j;
}

QnnModel QnnModel::from_json(const nlohmann::json& j) {
    QnnModel m;
    m.layers.clear();
    for (const auto& l : j.at("layers"))
        m.layers.push_back(QnnLayerParams{l[0].get<double>(), l[1].get<double>(),
                                          l[2].get<double>(), l[3].get<double>(),
                                          l[4].get<double>()});
    m.voltage_scaler = ScalerParams::from_json(j.at("voltage_scaler"));
    m.intensity_scaler = ScalerParams::from_json(j.at("intensity_scaler"));
    m.absolute_encoding = j.value("absolute_encoding", false);
    m.target_scale = j.value("target_scale", 1e3);
    m.cutoff = j.value("cutoff", kDefaultCutoff);
    m.trace_penalty = j.value("lambda", 0.01);
    check_model(m);
    return m;
}

QnnModel make_qnn_model(const IVDataset& train_data, std::size_t n_layers, int cutoff,
                        double init_std, std::uint64_t seed) {
    if (train_data.empty())
        throw EmptyDatasetError("QNN encoding scalers need training data");
    if (!(init_std > 0.0))
        throw DomainError("init std must be positive");

    QnnModel m;
    m.cutoff = cutoff;
    const Eigen::MatrixXd X = train_data.features();
    m.voltage_scaler = fit_scaler(X.col(0), ScalerKind::MinMax, -1.1, 1.0);
    m.intensity_scaler = fit_scaler(X.col(1), ScalerKind::MinMax, 0.0, 0.8);

    Rng rng(Rng::derive_seed(seed, 0x51));
    m.layers.resize(n_layers);
    for (auto& l : m.layers) {
        l.rotation1 = rng.normal(0.0, init_std);
        l.squeeze = rng.normal(0.0, init_std);
        l.rotation2 = rng.normal(0.0, init_std);
        l.displacement = rng.normal(0.0, init_std);
        l.kerr = rng.normal(0.0, init_std);
    }
    check_model(m);
    return m;
}

EncodedInput qnn_encode(const QnnModel& model, const IVSample& sample) {
    Eigen::MatrixXd v(1, 1), p(1, 1);
    v(0, 0) = sample.voltage;
    p(0, 0) = sample.intensity;
    EncodedInput out;
    out.alpha_in = apply_scaler(model.voltage_scaler, v)(0, 0);
    out.r_in = apply_scaler(model.intensity_scaler, p)(0, 0);
    out.extrapolated = out.alpha_in < -1.1 || out.alpha_in > 1.0 || out.r_in < 0.0 ||
                       out.r_in > 0.8;
    if (model.absolute_encoding) {
        out.alpha_in = std::abs(out.alpha_in);
        out.r_in = std::abs(out.r_in);
    }
    return out;
}

QnnForwardResult qnn_forward(const QnnModel& model, const EncodedInput& input) {
    check_model(model);
    CircuitWorkspace ws(model.cutoff);
    CVector psi = ws.encode_state(input);
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        psi = ws.layer_matrix(model.layers[l]) * psi;

    QnnForwardResult r;
    r.prediction = ws.expect_x(psi);
    r.trace = psi.squaredNorm();
    r.state.cutoff = model.cutoff;
    r.state.amplitudes = psi;
    return r;
}

double qnn_loss(const QnnModel& model, const std::vector<EncodedInput>& inputs,
                const Eigen::VectorXd& scaled_targets) {
    check_model(model);
    if (inputs.empty())
        throw EmptyDatasetError("QNN loss of an empty batch");
    if (static_cast<Eigen::Index>(inputs.size()) != scaled_targets.size())
        throw DimensionError("QNN loss: batch size mismatch");

    CircuitWorkspace ws(model.cutoff);
    CMatrix states(model.cutoff, static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i)
        states.col(static_cast<Eigen::Index>(i)) = ws.encode_state(inputs[i]);
    for (const auto& layer : model.layers)
        states = ws.layer_matrix(layer) * states;
    return batch_loss(ws, states, scaled_targets, model.trace_penalty);
}

namespace {

// Central differences with cached per-layer prefix states and suffix
// matrices: exactly loss(theta +/- h e_j), evaluated without rebuilding
// unaffected layers.
Eigen::VectorXd gradient_impl(const CircuitWorkspace& ws, const QnnModel& model,
                              const CMatrix& encoded, const Eigen::VectorXd& targets,
                              double h) {
    const std::size_t n_layers = model.layers.size();
    const int cut = ws.cutoff();

    std::vector<CMatrix> layer_mats(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l)
        layer_mats[l] = ws.layer_matrix(model.layers[l]);

    std::vector<CMatrix> prefix(n_layers + 1);  // prefix[l]: states after l layers
    prefix[0] = encoded;
    for (std::size_t l = 0; l < n_layers; ++l)
        prefix[l + 1] = layer_mats[l] * prefix[l];

    std::vector<CMatrix> suffix(n_layers + 1);  // suffix[l]: product of layers l..end
    suffix[n_layers] = CMatrix::Identity(cut, cut);
    for (std::size_t l = n_layers; l-- > 0;)
        suffix[l] = suffix[l + 1] * layer_mats[l];

    Eigen::VectorXd grad(static_cast<Eigen::Index>(n_layers * kQnnParamsPerLayer));
    Eigen::Index g = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        for (std::size_t k = 0; k < kQnnParamsPerLayer; ++k) {
            double plus = 0.0, minus = 0.0;
            for (const double sign : {+1.0, -1.0}) {
                QnnLayerParams p = model.layers[l];
                double* field = k == 0   ? &p.rotation1
                                : k == 1 ? &p.squeeze
                                : k == 2 ? &p.rotation2
                                : k == 3 ? &p.displacement
                                         : &p.kerr;
                *field += sign * h;
                const CMatrix states = suffix[l + 1] * (ws.layer_matrix(p) * prefix[l]);
                const double loss = batch_loss(ws, states, targets, model.trace_penalty);
                (sign > 0 ? plus : minus) = loss;
            }
            grad(g++) = (plus - minus) / (2.0 * h);
        }
    }
    return grad;
}

} // namespace

Eigen::VectorXd qnn_gradient(const QnnModel& model, const std::vector<EncodedInput>& inputs,
                             const Eigen::VectorXd& scaled_targets, double h) {
    check_model(model);
    if (inputs.empty())
        throw EmptyDatasetError("QNN gradient of an empty batch");
    if (static_cast<Eigen::Index>(inputs.size()) != scaled_targets.size())
        throw DimensionError("QNN gradient: batch size mismatch");
    if (!(h > 0.0))
        throw DomainError("finite-difference step must be positive");

    CircuitWorkspace ws(model.cutoff);
    CMatrix encoded(model.cutoff, static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i)
        encoded.col(static_cast<Eigen::Index>(i)) = ws.encode_state(inputs[i]);
    return gradient_impl(ws, model, encoded, scaled_targets, h);
}

QnnHistory qnn_train(QnnModel& model, const IVDataset& train_data,
                     const IVDataset* test_data, const QnnTrainOptions& options,
                     QnnHistory* partial_out) {
    check_model(model);
    if (train_data.empty())
        throw EmptyDatasetError("QNN training on an empty dataset");
    if (options.batch_size == 0)
        throw DomainError("batch size must be positive");
    if (!(options.learning_rate > 0.0))
        throw DomainError("learning rate must be positive");

    CircuitWorkspace ws(model.cutoff);

    auto encode_all = [&](const IVDataset& ds, CMatrix& states, Eigen::VectorXd& targets) {
        states.resize(model.cutoff, static_cast<Eigen::Index>(ds.size()));
        targets.resize(static_cast<Eigen::Index>(ds.size()));
        for (std::size_t i = 0; i < ds.size(); ++i) {
            states.col(static_cast<Eigen::Index>(i)) =
                ws.encode_state(qnn_encode(model, ds.samples[i]));
            targets(static_cast<Eigen::Index>(i)) = ds.samples[i].current * model.target_scale;
        }
    };

    CMatrix train_states;
    Eigen::VectorXd train_targets;
    encode_all(train_data, train_states, train_targets);
    CMatrix test_states;
    Eigen::VectorXd test_targets;
    if (test_data && !test_data->empty())
        encode_all(*test_data, test_states, test_targets);

    const std::size_t n = train_data.size();
    const Eigen::Index n_params = static_cast<Eigen::Index>(model.n_params());
    Eigen::VectorXd adam_m = Eigen::VectorXd::Zero(n_params);
    Eigen::VectorXd adam_v = Eigen::VectorXd::Zero(n_params);
    std::size_t adam_t = 0;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(Rng::derive_seed(options.seed, 0x52));

    QnnHistory history;

    auto epoch_diagnostics = [&](std::size_t epoch) {
        std::vector<CMatrix> mats(model.layers.size());
        for (std::size_t l = 0; l < model.layers.size(); ++l)
            mats[l] = ws.layer_matrix(model.layers[l]);
        auto run = [&](const CMatrix& states0, const Eigen::VectorXd& targets, double& loss,
                       double& min_tr) {
            CMatrix states = states0;
            for (const auto& m : mats) states = m * states;
            loss = batch_loss(ws, states, targets, model.trace_penalty);
            min_tr = 1.0;
            for (Eigen::Index i = 0; i < states.cols(); ++i)
                min_tr = std::min(min_tr, states.col(i).squaredNorm());
        };
        double train_loss = 0.0, min_trace = 1.0;
        run(train_states, train_targets, train_loss, min_trace);
        history.train_loss.push_back(train_loss);
        if (test_states.cols() > 0) {
            double test_loss = 0.0, test_min_tr = 1.0;
            run(test_states, test_targets, test_loss, test_min_tr);
            history.test_loss.push_back(test_loss);
            min_trace = std::min(min_trace, test_min_tr);
        }
        history.min_trace.push_back(min_trace);
        if (partial_out) *partial_out = history;
        if (!std::isfinite(train_loss))
            throw DivergenceError("QNN training loss became non-finite", epoch);
        if (min_trace < options.abort_trace)
            throw DivergenceError("QNN state trace fell below " +
                                      std::to_string(options.abort_trace),
                                  epoch);
    };

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += options.batch_size) {
            const std::size_t stop = std::min(start + options.batch_size, n);
            CMatrix batch(model.cutoff, static_cast<Eigen::Index>(stop - start));
            Eigen::VectorXd targets(static_cast<Eigen::Index>(stop - start));
            for (std::size_t i = start; i < stop; ++i) {
                batch.col(static_cast<Eigen::Index>(i - start)) =
                    train_states.col(static_cast<Eigen::Index>(order[i]));
                targets(static_cast<Eigen::Index>(i - start)) =
                    train_targets(static_cast<Eigen::Index>(order[i]));
            }
            const Eigen::VectorXd grad =
                gradient_impl(ws, model, batch, targets, options.fd_step);

            adam_t += 1;
            const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(adam_t));
            const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(adam_t));
            adam_m = 0.9 * adam_m + 0.1 * grad;
            adam_v = 0.999 * adam_v.array() + 0.001 * grad.array().square();
            Eigen::VectorXd params = model.flat_params();
            params.array() -= options.learning_rate * (adam_m.array() / bc1) /
                              ((adam_v.array() / bc2).sqrt() + 1e-8);
            model.set_flat_params(params);
        }
        epoch_diagnostics(epoch);
    }
    return history;
}

} // namespace diodeq
