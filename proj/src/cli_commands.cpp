#include "diodeq/cli_commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "diodeq/dataset.hpp"
#include "diodeq/fock.hpp"
#include "diodeq/knn.hpp"
#include "diodeq/mlp.hpp"
#include "diodeq/physics.hpp"
#include "diodeq/pipeline.hpp"
#include "diodeq/qnn.hpp"
#include "diodeq/regression.hpp"
#include "diodeq/rng.hpp"

namespace diodeq::cli {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kSplitOffset = 0x10;   // shared by every model kind
constexpr std::uint64_t kModelOffset = 0x20;
constexpr double kTestFraction = 0.15;

bool log_enabled() {
    const char* env = std::getenv("DIODEQ_LOG");
    return env && *env && std::string(env) != "0" && std::string(env) != "off";
}

void log_line(const std::string& msg) {
    if (log_enabled()) std::cerr << "[diodeq] " << msg << "\n";
}

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

nlohmann::json meta_block() {
    return {{"timestamp", timestamp_utc()}, {"tool", "diodeq"}};
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out)
        throw SchemaError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw SchemaError("cannot open JSON file: " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

int classify(const std::exception& e) {
    if (dynamic_cast<const ConvergenceError*>(&e) || dynamic_cast<const DivergenceError*>(&e) ||
        dynamic_cast<const TruncationError*>(&e) || dynamic_cast<const DegenerateError*>(&e))
        return kExitCompute;
    return kExitInput;
}

int report_failure(const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify(e);
}

nlohmann::json stats_to_json(const ColumnStats& c) {
    return {{"count", c.count}, {"mean", c.mean}, {"std", c.std_dev}, {"min", c.min},
            {"25%", c.q25},     {"50%", c.median}, {"75%", c.q75},    {"max", c.max}};
}

void write_history_csv(const fs::path& path, const std::vector<double>& train,
                       const std::vector<double>& test, const std::vector<double>* trace) {
    std::ofstream out(path);
    out << "epoch,train_" << (trace ? "loss" : "mse") << ",test_" << (trace ? "loss" : "mse");
    if (trace) out << ",min_trace";
    out << "\n";
    char buf[128];
    for (std::size_t i = 0; i < train.size(); ++i) {
        out << i;
        std::snprintf(buf, sizeof(buf), ",%.17g", train[i]);
        out << buf;
        if (i < test.size()) {
            std::snprintf(buf, sizeof(buf), ",%.17g", test[i]);
            out << buf;
        } else {
            out << ",";
        }
        if (trace) {
            std::snprintf(buf, sizeof(buf), ",%.17g", (*trace)[i]);
            out << buf;
        }
        out << "\n";
    }
}

struct SplitData {
    SplitIndices idx;
    IVDataset train;
    IVDataset test;
};

SplitData shared_split(const IVDataset& ds, std::uint64_t seed) {
    SplitData s;
    s.idx = split_train_test(ds.size(), kTestFraction, Rng::derive_seed(seed, kSplitOffset));
    s.train = subset(ds, s.idx.train);
    s.test = subset(ds, s.idx.test);
    return s;
}

// ---- model envelope -------------------------------------------------------

// model.json: {"kind", "seed", "test_fraction", "feature_scaler"?, "model", "meta"}

Eigen::VectorXd predict_with_envelope(const nlohmann::json& envelope, const IVDataset& ds) {
    const std::string kind = envelope.at("kind").get<std::string>();
    Eigen::MatrixXd X = ds.features();
    if (envelope.contains("feature_scaler") && !envelope["feature_scaler"].is_null())
        X = apply_scaler(ScalerParams::from_json(envelope["feature_scaler"]), X);

    if (kind == "knn")
        return KnnRegressor::from_json(envelope.at("model")).predict(X);
    if (kind == "mlp")
        return MlpRegressor::from_json(envelope.at("model")).predict(X);
    if (kind == "fig5" || kind == "gp")
        return PipelineModel::from_json(envelope.at("model")).predict(X);
    if (kind == "qnn") {
        const QnnModel m = QnnModel::from_json(envelope.at("model"));
        Eigen::VectorXd out(static_cast<Eigen::Index>(ds.size()));
        for (std::size_t i = 0; i < ds.size(); ++i)
            out(static_cast<Eigen::Index>(i)) =
                qnn_forward(m, qnn_encode(m, ds.samples[i])).prediction / m.target_scale;
        return out;
    }
    throw SchemaError("unknown model kind in model file: " + kind);
}

} // namespace

int cmd_stats(const CommonOptions& opt) {
    try {
        const IVDataset ds = load_csv(opt.input);
        const SummaryStats st = summary_stats(ds);

        auto row = [](const char* name, double v, double p, double i) {
            std::printf("%-12s %14.6g %14.6g %14.6g\n", name, v, p, i);
        };
        std::printf("%-12s %14s %14s %14s\n", "Stats", "V (Volt)", "P (mW/cm2)", "I (A)");
        std::printf("%-12s %14zu %14zu %14zu\n", "No. Samples", st.voltage.count,
                    st.intensity.count, st.current.count);
        row("Mean", st.voltage.mean, st.intensity.mean, st.current.mean);
        row("Std", st.voltage.std_dev, st.intensity.std_dev, st.current.std_dev);
        row("Min", st.voltage.min, st.intensity.min, st.current.min);
        row("Max", st.voltage.max, st.intensity.max, st.current.max);
        row("25%", st.voltage.q25, st.intensity.q25, st.current.q25);
        row("50%", st.voltage.median, st.intensity.median, st.current.median);
        row("75%", st.voltage.q75, st.intensity.q75, st.current.q75);

        nlohmann::json j;
        j["input"] = opt.input;
        j["stats"] = {{"voltage", stats_to_json(st.voltage)},
                      {"intensity", stats_to_json(st.intensity)},
                      {"current", stats_to_json(st.current)}};
        j["meta"] = meta_block();
        fs::create_directories(opt.out_dir);
        write_json(fs::path(opt.out_dir) / "report.json", j);
        return kExitOk;
    } catch (const std::exception& e) {
        return report_failure(e);
    }
}

namespace {

struct TrainArtifacts {
    nlohmann::json model;                       // engine payload
    nlohmann::json feature_scaler;              // or null
    FitReport report;
    std::vector<double> hist_train, hist_test, hist_trace;
    bool has_trace = false;
};

TrainArtifacts train_knn(const SplitData& sp, const nlohmann::json& config,
                         std::uint64_t seed) {
    TrainArtifacts art;
    const Eigen::MatrixXd X_raw = sp.train.features();
    const ScalerKind sk = config.value("scaler", std::string("iqr-robust")) == "standard"
                              ? ScalerKind::Standard
                              : ScalerKind::IqrRobust;
    const ScalerParams scaler = fit_scaler(X_raw, sk);
    const Eigen::MatrixXd X = apply_scaler(scaler, X_raw);
    const Eigen::MatrixXd Xt = apply_scaler(scaler, sp.test.features());
    const Eigen::VectorXd y = sp.train.targets();
    const Eigen::VectorXd yt = sp.test.targets();

    KnnConfig kc;
    kc.k = config.value("k", std::size_t{4});
    kc.p = config.value("p", 4.0);
    if (config.value("search", std::string("brute")) == "kd-tree")
        kc.search = KnnConfig::Search::KdTree;
    if (config.value("weighting", std::string("inverse-distance")) == "uniform")
        kc.weighting = KnnConfig::Weighting::Uniform;

    if (config.contains("grid")) {
        const std::size_t folds = config.value("cv_folds", std::size_t{13});
        std::vector<nlohmann::json> grid;
        for (const auto& g : config["grid"]) grid.push_back(g);
        const auto gs = grid_search(
            [](const nlohmann::json& g) {
                return std::unique_ptr<Regressor>(new KnnRegressor(KnnConfig::from_json(g)));
            },
            "knn", grid, X, y, folds, Rng::derive_seed(seed, kModelOffset));
        kc = KnnConfig::from_json(gs.best_params);
        art.report.validation_mse = gs.best_mean_mse;
        log_line("grid search selected " + gs.best_params.dump());
    }

    KnnRegressor model(kc);
    model.fit(X, y);
    art.model = model.to_json();
    art.feature_scaler = scaler.to_json();
    art.report.model_id = "knn";
    art.report.hyperparameters = kc.to_json();
    art.report.train_mse = mse(y, model.predict(X));
    art.report.test_mse = mse(yt, model.predict(Xt));
    art.report.r2 = r2_score(yt, model.predict(Xt));
    return art;
}

TrainArtifacts train_mlp(const SplitData& sp, const nlohmann::json& config,
                         std::uint64_t seed) {
    TrainArtifacts art;
    const ScalerParams scaler = fit_scaler(sp.train.features(), ScalerKind::Standard);
    const Eigen::MatrixXd X = apply_scaler(scaler, sp.train.features());
    const Eigen::MatrixXd Xt = apply_scaler(scaler, sp.test.features());
    const Eigen::VectorXd y = sp.train.targets();
    const Eigen::VectorXd yt = sp.test.targets();

    MlpConfig mc;
    if (config.contains("layer_sizes"))
        mc.layer_sizes = config["layer_sizes"].get<std::vector<std::size_t>>();
    mc.learning_rate = config.value("learning_rate", 1e-3);
    mc.batch_size = config.value("batch_size", std::size_t{32});
    mc.epochs = config.value("epochs", std::size_t{500});
    mc.init_std = config.value("init_std", 0.1);
    mc.init_seed = Rng::derive_seed(seed, kModelOffset);

    MlpRegressor model(mc);
    MlpHistory partial;
    const MlpHistory hist = model.train(X, y, &Xt, &yt, &partial);
    art.model = model.to_json();
    art.feature_scaler = scaler.to_json();
    art.hist_train = hist.train_mse;
    art.hist_test = hist.test_mse;
    art.report.model_id = "mlp";
    art.report.hyperparameters = mc.to_json();
    art.report.train_mse = mse(y, model.predict(X));
    art.report.test_mse = mse(yt, model.predict(Xt));
    art.report.r2 = r2_score(yt, model.predict(Xt));
    return art;
}

TrainArtifacts train_fig5(const SplitData& sp, const nlohmann::json& config) {
    TrainArtifacts art;
    const GbtConfig gbt = config.contains("gbt") ? GbtConfig::from_json(config["gbt"])
                                                 : GbtConfig{};
    KnnConfig knn;
    if (config.contains("knn")) knn = KnnConfig::from_json(config["knn"]);

    PipelineModel model(fig5_tree(gbt, knn));
    const Eigen::MatrixXd X = sp.train.features();
    const Eigen::VectorXd y = sp.train.targets();
    model.fit(X, y);
    art.model = model.to_json();
    art.feature_scaler = nullptr;
    art.report.model_id = "fig5";
    art.report.hyperparameters = {{"gbt", gbt.to_json()}, {"knn", knn.to_json()}};
    art.report.train_mse = mse(y, model.predict(X));
    art.report.test_mse = mse(sp.test.targets(), model.predict(sp.test.features()));
    art.report.r2 = r2_score(sp.test.targets(), model.predict(sp.test.features()));
    return art;
}

TrainArtifacts train_gp(const SplitData& sp, const nlohmann::json& config,
                        std::uint64_t seed, const std::string& out_dir) {
    TrainArtifacts art;
    GpConfig gc;
    gc.population = config.value("population", gc.population);
    gc.generations = config.value("generations", gc.generations);
    gc.mutation_rate = config.value("mutation_rate", gc.mutation_rate);
    gc.crossover_rate = config.value("crossover_rate", gc.crossover_rate);
    gc.tournament = config.value("tournament", gc.tournament);
    gc.cv_folds = config.value("cv_folds", gc.cv_folds);
    gc.elitism = config.value("elitism", gc.elitism);
    gc.max_depth = config.value("max_depth", gc.max_depth);
    gc.seed = Rng::derive_seed(seed, kModelOffset);
    if (config.contains("registry")) {
        gc.registry.clear();
        for (const auto& k : config["registry"])
            gc.registry.push_back(node_kind_from_string(k.get<std::string>()));
    }

    const Eigen::MatrixXd X = sp.train.features();
    const Eigen::VectorXd y = sp.train.targets();
    const GpResult res = gp_search(gc, X, y);

    {
        std::ofstream out(fs::path(out_dir) / "fitness_history.csv");
        out << "generation,best_mse,mean_mse\n";
        char buf[128];
        for (std::size_t g = 0; g < res.best_history.size(); ++g) {
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", g, res.best_history[g],
                          res.mean_history[g]);
            out << buf;
        }
    }

    PipelineModel winner(res.best);
    winner.fit(X, y);
    art.model = winner.to_json();
    art.model["genotype"] = res.best.to_json();
    art.feature_scaler = nullptr;
    art.report.model_id = "gp";
    art.report.hyperparameters = {{"population", gc.population},
                                  {"generations", gc.generations},
                                  {"crossover_rate", gc.crossover_rate},
                                  {"mutation_rate", gc.mutation_rate},
                                  {"winner", res.best.to_json()}};
    art.report.validation_mse = res.best_fitness;
    art.report.train_mse = mse(y, winner.predict(X));
    art.report.test_mse = mse(sp.test.targets(), winner.predict(sp.test.features()));
    art.report.r2 = r2_score(sp.test.targets(), winner.predict(sp.test.features()));
    return art;
}

TrainArtifacts train_qnn(const SplitData& sp, const nlohmann::json& config,
                         std::uint64_t seed) {
    TrainArtifacts art;
    QnnModel model = make_qnn_model(sp.train, config.value("layers", std::size_t{8}),
                                    config.value("cutoff", 18),
                                    config.value("init_std", 1e-3),
                                    Rng::derive_seed(seed, kModelOffset));
    model.trace_penalty = config.value("lambda", 0.01);
    model.absolute_encoding = config.value("absolute_encoding", false);

    QnnTrainOptions opt;
    opt.epochs = std::min<std::size_t>(config.value("epochs", std::size_t{500}), 500);
    opt.batch_size = config.value("batch_size", std::size_t{32});
    opt.learning_rate = config.value("learning_rate", 0.005);
    opt.seed = Rng::derive_seed(seed, kModelOffset + 1);

    QnnHistory partial;
    QnnHistory hist;
    try {
        hist = qnn_train(model, sp.train, &sp.test, opt, &partial);
    } catch (...) {
        art.hist_train = partial.train_loss;
        art.hist_test = partial.test_loss;
        art.hist_trace = partial.min_trace;
        art.has_trace = true;
        throw;
    }
    art.model = model.to_json();
    art.feature_scaler = nullptr;  // the qnn carries its own encoding scalers
    art.hist_train = hist.train_loss;
    art.hist_test = hist.test_loss;
    art.hist_trace = hist.min_trace;
    art.has_trace = true;
    art.report.model_id = "qnn";
    art.report.hyperparameters = {{"layers", model.layers.size()},
                                  {"cutoff", model.cutoff},
                                  {"lambda", model.trace_penalty},
                                  {"epochs", opt.epochs},
                                  {"learning_rate", opt.learning_rate},
                                  {"batch_size", opt.batch_size}};

    // report MSE in ampere units (predictions un-scaled by target_scale)
    auto dataset_mse = [&](const IVDataset& ds) {
        Eigen::VectorXd pred(static_cast<Eigen::Index>(ds.size()));
        for (std::size_t i = 0; i < ds.size(); ++i)
            pred(static_cast<Eigen::Index>(i)) =
                qnn_forward(model, qnn_encode(model, ds.samples[i])).prediction /
                model.target_scale;
        return mse(ds.targets(), pred);
    };
    art.report.train_mse = dataset_mse(sp.train);
    art.report.test_mse = dataset_mse(sp.test);
    return art;
}

} // namespace

int cmd_train(const CommonOptions& opt, const std::string& model_kind,
              const nlohmann::json& config) {
    SplitData sp;
    fs::path out;
    try {
        const IVDataset ds = load_csv(opt.input);
        sp = shared_split(ds, opt.seed);
        out = fs::path(opt.out_dir);
        fs::create_directories(out);
        write_json(out / "split_manifest.json",
                   {{"seed", opt.seed},
                    {"test_fraction", kTestFraction},
                    {"train", sp.idx.train},
                    {"test", sp.idx.test}});
    } catch (const std::exception& e) {
        return report_failure(e);
    }

    TrainArtifacts art;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (model_kind == "knn")
            art = train_knn(sp, config, opt.seed);
        else if (model_kind == "mlp")
            art = train_mlp(sp, config, opt.seed);
        else if (model_kind == "fig5")
            art = train_fig5(sp, config);
        else if (model_kind == "gp")
            art = train_gp(sp, config, opt.seed, out.string());
        else if (model_kind == "qnn")
            art = train_qnn(sp, config, opt.seed);
        else
            throw SchemaError("unknown model kind: " + model_kind +
                              " (expected knn|mlp|fig5|gp|qnn)");
    } catch (const std::exception& e) {
        // persist whatever history exists, then report the failure
        std::error_code ec;
        fs::create_directories(out, ec);
        write_history_csv(out / "history.csv", art.hist_train, art.hist_test,
                          art.has_trace ? &art.hist_trace : nullptr);
        std::cerr << "training failed: " << e.what() << "\n";
        return dynamic_cast<const SchemaError*>(&e) ? kExitInput : kExitCompute;
    }
    const auto t1 = std::chrono::steady_clock::now();
    art.report.wall_time_seconds = std::chrono::duration<double>(t1 - t0).count();

    nlohmann::json envelope;
    envelope["kind"] = model_kind;
    envelope["seed"] = opt.seed;
    envelope["test_fraction"] = kTestFraction;
    envelope["feature_scaler"] = art.feature_scaler;
    envelope["model"] = art.model;
    if (art.report.validation_mse)
        envelope["validation_mse"] = *art.report.validation_mse;
    envelope["meta"] = meta_block();
    write_json(out / "model.json", envelope);

    nlohmann::json report = art.report.to_json();
    report.erase("wall_time_seconds");  // timing lives in meta so reports stay deterministic
    report["split"] = {{"train_size", sp.train.size()}, {"test_size", sp.test.size()}};
    report["meta"] = meta_block();
    report["meta"]["wall_time_seconds"] = art.report.wall_time_seconds;
    write_json(out / "report.json", report);

    if (!art.hist_train.empty())
        write_history_csv(out / "history.csv", art.hist_train, art.hist_test,
                          art.has_trace ? &art.hist_trace : nullptr);
    std::printf("%s: train MSE %.6g, test MSE %.6g\n", model_kind.c_str(),
                art.report.train_mse.value_or(0.0), art.report.test_mse.value_or(0.0));
    return kExitOk;
}

int cmd_compare(const CommonOptions& opt, const std::vector<std::string>& model_files) {
    try {
        if (model_files.empty())
            throw SchemaError("compare needs at least one model file");
        const IVDataset ds = load_csv(opt.input);

        nlohmann::json rows = nlohmann::json::array();
        std::printf("%-8s %14s %14s %14s\n", "Model", "Train", "Test", "Validation");
        for (const auto& file : model_files) {
            const nlohmann::json envelope = read_json_file(file);
            const std::string kind = envelope.at("kind").get<std::string>();
            const std::uint64_t seed = envelope.at("seed").get<std::uint64_t>();
            const SplitData sp = shared_split(ds, seed);

            const Eigen::VectorXd pred_train = predict_with_envelope(envelope, sp.train);
            const Eigen::VectorXd pred_test = predict_with_envelope(envelope, sp.test);
            const double train = mse(sp.train.targets(), pred_train);
            const double test = mse(sp.test.targets(), pred_test);

            nlohmann::json row = {{"model", kind}, {"file", file},
                                  {"train_mse", train},  {"test_mse", test}};
            std::string val = "-";
            if (envelope.contains("validation_mse")) {
                row["validation_mse"] = envelope["validation_mse"];
                val = envelope["validation_mse"].dump();
            }
            rows.push_back(row);
            std::printf("%-8s %14.6g %14.6g %14s\n", kind.c_str(), train, test, val.c_str());
        }
        fs::create_directories(opt.out_dir);
        write_json(fs::path(opt.out_dir) / "report.json",
                   {{"comparison", rows}, {"meta", meta_block()}});
        return kExitOk;
    } catch (const std::exception& e) {
        return report_failure(e);
    }
}

namespace {

nlohmann::json run_stage(const std::string& name, const std::function<nlohmann::json()>& fn,
                         bool& any_ok) {
    try {
        nlohmann::json j = fn();
        j["status"] = "ok";
        any_ok = true;
        return j;
    } catch (const std::exception& e) {
        log_line("stage " + name + " failed: " + e.what());
        return {{"status", "failed"}, {"error", e.what()}};
    }
}

void split_columns(const IVDataset& ds, std::vector<double>& v, std::vector<double>& i) {
    v.clear();
    i.clear();
    for (const auto& s : ds.samples) {
        v.push_back(s.voltage);
        i.push_back(s.current);
    }
}

double current_at_bias(const IVDataset& ds, double bias) {
    double best = std::numeric_limits<double>::infinity();
    double current = 0.0;
    for (const auto& s : ds.samples) {
        const double d = std::abs(s.voltage - bias);
        if (d < best) {
            best = d;
            current = s.current;
        }
    }
    return current;
}

} // namespace

int cmd_physics(const CommonOptions& opt, const PhysicsInputs& in) {
    nlohmann::json consts = nlohmann::json::object();
    IVDataset dark;
    try {
        dark = load_csv(in.dark_csv);
        if (!in.constants_json.empty()) consts = read_json_file(in.constants_json);
    } catch (const std::exception& e) {
        return report_failure(e);
    }

    const double T = consts.value("temperature_K", 300.0);
    const double area = consts.value("area_cm2", 0.01);
    const double a_star = consts.value("richardson_A_cm2K2", 32.0);
    const double eps_r = consts.value("epsilon_r", 2.89);
    const double thickness = consts.value("film_thickness_nm", 150.0) * 1e-9;
    const double wavelength = consts.value("wavelength_nm", 194.0) * 1e-9;
    const double bias = consts.value("bias_V", -3.0);
    double win_lo = 0.05, win_hi = 0.18;
    if (consts.contains("ideality_window_V")) {
        win_lo = consts["ideality_window_V"][0].get<double>();
        win_hi = consts["ideality_window_V"][1].get<double>();
    }

    const fs::path out(opt.out_dir);
    fs::create_directories(out);
    bool any_ok = false;
    nlohmann::json stages;

    std::vector<double> Vd, Id;
    split_columns(dark, Vd, Id);

    double dark_ideality = 0.0;
    stages["ideality_dark"] = run_stage("ideality_dark", [&] {
        const DiodeFitResult f = ideality_factor(Vd, Id, win_lo, win_hi, T);
        dark_ideality = f.ideality;
        return nlohmann::json{{"n", f.ideality},
                              {"I0_A", f.saturation_current},
                              {"window_V", {f.window_lo, f.window_hi}},
                              {"residual_rms", f.residual_rms},
                              {"barrier_eV", barrier_height(f.saturation_current, area,
                                                            a_star, T)}};
    }, any_ok);

    stages["norde_dark"] = run_stage("norde_dark", [&] {
        const double n = dark_ideality > 0.0 ? dark_ideality : 2.0;
        const NordeResult r = norde_series_resistance(Vd, Id, n, T, area, a_star);
        return nlohmann::json{{"Rs_ohm", r.series_resistance},
                              {"barrier_eV", r.barrier_height_eV},
                              {"v_min", r.v_min},
                              {"gamma", r.gamma},
                              {"boundary_minimum", r.boundary_minimum}};
    }, any_ok);

    stages["transport_forward_dark"] = run_stage("transport_forward_dark", [&] {
        const TwoSegmentResult r = transport_regions(Vd, Id);
        // forward log-log axes
        std::ofstream csv(out / "transport_forward_dark.csv");
        csv << "ln_v,ln_i\n";
        char buf[80];
        for (std::size_t k = 0; k < Vd.size(); ++k)
            if (Vd[k] > 0 && Id[k] > 0) {
                std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", std::log(Vd[k]),
                              std::log(Id[k]));
                csv << buf;
            }
        return nlohmann::json{{"slope_low", r.low.slope},
                              {"slope_high", r.high.slope},
                              {"label_low", r.low.label},
                              {"label_high", r.high.label},
                              {"break_ln_v", r.break_x},
                              {"degenerate", r.degenerate}};
    }, any_ok);

    stages["reverse_beta_dark"] = run_stage("reverse_beta_dark", [&] {
        const ReverseBetaResult r = field_emission_beta(Vd, Id, eps_r, thickness, T);
        std::ofstream csv(out / "reverse_field_dark.csv");
        csv << "sqrt_E,ln_abs_i\n";
        char buf[80];
        for (std::size_t k = 0; k < Vd.size(); ++k)
            if (Vd[k] < 0 && Id[k] != 0) {
                std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n",
                              std::sqrt(-Vd[k] / thickness), std::log(std::abs(Id[k])));
                csv << buf;
            }
        return nlohmann::json{{"beta_pf_theory", r.beta_pf_theory},
                              {"beta_sc_theory", r.beta_sc_theory},
                              {"beta_low", r.beta_low},
                              {"beta_high", r.beta_high},
                              {"label_low", r.label_low},
                              {"label_high", r.label_high}};
    }, any_ok);

    nlohmann::json illuminated = nlohmann::json::array();
    std::ofstream merits_csv(out / "merits_vs_intensity.csv");
    merits_csv << "intensity_mW_cm2,responsivity_A_W,detectivity_jones,eqe_percent,"
                  "noise_current_A\n";
    for (const auto& file : in.light_csvs) {
        nlohmann::json entry;
        entry["file"] = file;
        try {
            const IVDataset light = load_csv(file);
            std::vector<double> Vl, Il;
            split_columns(light, Vl, Il);
            const double intensity = summary_stats(light).intensity.max;
            entry["intensity_mW_cm2"] = intensity;

            bool dummy = false;
            entry["ideality"] = run_stage("ideality_light", [&] {
                const DiodeFitResult f = ideality_factor(Vl, Il, win_lo, win_hi, T);
                return nlohmann::json{{"n", f.ideality}, {"I0_A", f.saturation_current}};
            }, dummy);
            entry["norde"] = run_stage("norde_light", [&] {
                const double nl = entry["ideality"].value("n", 2.0);
                const NordeResult r = norde_series_resistance(Vl, Il, nl, T, area, a_star);
                return nlohmann::json{{"Rs_ohm", r.series_resistance}};
            }, dummy);
            entry["merits"] = run_stage("merits", [&] {
                const double i_ph =
                    std::abs(current_at_bias(light, bias) - current_at_bias(dark, bias));
                const FiguresOfMerit m = figures_of_merit(
                    i_ph / area, std::abs(current_at_bias(dark, bias)) / area,
                    intensity * 1e-3, wavelength, area);
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g\n", intensity,
                              m.responsivity, m.detectivity, m.eqe_percent, m.noise_current);
                merits_csv << buf;
                return nlohmann::json{{"bias_V", bias},
                                      {"j_ph_A_cm2", m.j_ph},
                                      {"j_dark_A_cm2", m.j_dark},
                                      {"responsivity_A_W", m.responsivity},
                                      {"detectivity_jones", m.detectivity},
                                      {"eqe_percent", m.eqe_percent},
                                      {"noise_current_A", m.noise_current},
                                      {"nep_W", m.nep}};
            }, dummy);
            if (dummy) any_ok = true;
        } catch (const std::exception& e) {
            entry["status"] = "failed";
            entry["error"] = e.what();
        }
        illuminated.push_back(entry);
    }
    stages["illuminated"] = illuminated;

    if (!in.transient_csv.empty()) {
        stages["transient"] = run_stage("transient", [&] {
            std::ifstream tin(in.transient_csv);
            if (!tin) throw SchemaError("cannot open " + in.transient_csv);
            std::string line;
            std::getline(tin, line);  // header time_s,current_A
            std::vector<double> t, i;
            while (std::getline(tin, line)) {
                if (line.empty()) continue;
                const auto comma = line.find(',');
                if (comma == std::string::npos)
                    throw SchemaError("transient CSV needs time_s,current_A");
                t.push_back(std::stod(line.substr(0, comma)));
                i.push_back(std::stod(line.substr(comma + 1)));
            }
            const TransientMetrics m = transient_metrics(t, i);
            return nlohmann::json{{"rise_time_s", m.rise_time},
                                  {"fall_time_s", m.fall_time},
                                  {"on_off_ratio", m.on_off_ratio},
                                  {"residual_off_A", m.residual_off},
                                  {"cycles", m.n_cycles}};
        }, any_ok);
    } else {
        stages["transient"] = {{"status", "skipped"}};
    }

    if (!in.spectrum_csv.empty()) {
        stages["band_gap"] = run_stage("band_gap", [&] {
            std::ifstream sin_(in.spectrum_csv);
            if (!sin_) throw SchemaError("cannot open " + in.spectrum_csv);
            std::string line;
            std::getline(sin_, line);
            std::vector<double> lam, ab;
            while (std::getline(sin_, line)) {
                if (line.empty()) continue;
                const auto comma = line.find(',');
                lam.push_back(std::stod(line.substr(0, comma)));
                ab.push_back(std::stod(line.substr(comma + 1)));
            }
            nlohmann::json windows = consts.value(
                "asf_windows_nm", nlohmann::json::array({{250.0, 330.0}}));
            nlohmann::json gaps = nlohmann::json::array();
            for (const auto& w : windows) {
                const BandGapResult r =
                    asf_band_gap(lam, ab, w[0].get<double>(), w[1].get<double>());
                gaps.push_back({{"window_nm", w},
                                {"e_g_eV", r.e_g_eV},
                                {"lambda_g_nm", r.lambda_g_nm}});
            }
            return nlohmann::json{{"gaps", gaps}};
        }, any_ok);
    } else {
        stages["band_gap"] = {{"status", "skipped"}};
    }

    nlohmann::json report;
    report["constants"] = {{"temperature_K", T},
                           {"area_cm2", area},
                           {"richardson_A_cm2K2", a_star},
                           {"epsilon_r", eps_r},
                           {"film_thickness_nm", thickness * 1e9},
                           {"wavelength_nm", wavelength * 1e9},
                           {"bias_V", bias},
                           {"ideality_window_V", {win_lo, win_hi}}};
    report["stages"] = stages;
    report["meta"] = meta_block();
    write_json(out / "report.json", report);

    if (!any_ok) {
        std::cerr << "every physics stage failed\n";
        return kExitCompute;
    }
    return kExitOk;
}

int cmd_wigner(const CommonOptions& opt, const WignerRequest& req) {
    try {
        FockState state;
        if (!req.model_file.empty()) {
            const nlohmann::json envelope = read_json_file(req.model_file);
            const QnnModel model = QnnModel::from_json(
                envelope.contains("model") ? envelope["model"] : envelope);
            if (req.sample.empty())
                throw SchemaError("--sample \"V,P\" is required with --model");
            const auto comma = req.sample.find(',');
            if (comma == std::string::npos)
                throw SchemaError("--sample must be \"V,P\"");
            IVSample s;
            s.voltage = std::stod(req.sample.substr(0, comma));
            s.intensity = std::stod(req.sample.substr(comma + 1));
            state = qnn_forward(model, qnn_encode(model, s)).state;
        } else {
            state = prepare_displaced_squeezed(Cplx(req.alpha_re, req.alpha_im),
                                               std::polar(req.z_r, req.z_theta), req.cutoff,
                                               1e-3);
        }

        std::vector<double> xs, ps;
        for (double v = req.grid_min; v <= req.grid_max + 1e-12; v += req.grid_step) {
            xs.push_back(v);
            ps.push_back(v);
        }
        const Eigen::MatrixXd W = wigner(state, xs, ps);

        const fs::path out(opt.out_dir);
        fs::create_directories(out);
        {
            std::ofstream csv(out / "wigner.csv");
            csv << "x,p,W\n";
            char buf[120];
            for (std::size_t i = 0; i < xs.size(); ++i)
                for (std::size_t j = 0; j < ps.size(); ++j) {
                    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.17g\n", xs[i], ps[j],
                                  W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
                    csv << buf;
                }
        }

        if (opt.format == "svg") {
            const double wmax = std::max(std::abs(W.maxCoeff()), std::abs(W.minCoeff()));
            std::ofstream svg(out / "wigner.svg");
            const int cell = 6;
            svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
                << xs.size() * cell << "\" height=\"" << ps.size() * cell << "\">\n";
            for (std::size_t i = 0; i < xs.size(); ++i) {
                for (std::size_t j = 0; j < ps.size(); ++j) {
                    const double w =
                        W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) / wmax;
                    const int r = w > 0 ? static_cast<int>(255 * w) : 0;
                    const int b = w < 0 ? static_cast<int>(-255 * w) : 0;
                    svg << "<rect x=\"" << i * cell << "\" y=\""
                        << (ps.size() - 1 - j) * cell << "\" width=\"" << cell
                        << "\" height=\"" << cell << "\" fill=\"rgb(" << r << ","
                        << (255 - std::max(r, b)) / 3 << "," << b << ")\"/>\n";
                }
            }
            svg << "</svg>\n";
        }

        double wmin = W.minCoeff();
        std::printf("wigner grid %zux%zu, min W = %.6g, max W = %.6g\n", xs.size(), ps.size(),
                    wmin, W.maxCoeff());
        return kExitOk;
    } catch (const TruncationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCompute;
    } catch (const std::exception& e) {
        return report_failure(e);
    }
}

} // namespace diodeq::cli
