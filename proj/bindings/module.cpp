#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "diodeq/dataset.hpp"
#include "diodeq/fock.hpp"
#include "diodeq/knn.hpp"
#include "diodeq/mlp.hpp"
#include "diodeq/physics.hpp"
#include "diodeq/pipeline.hpp"
#include "diodeq/qnn.hpp"
#include "diodeq/regression.hpp"

namespace py = pybind11;
using namespace diodeq;

namespace {

py::object json_to_py(const nlohmann::json& j) {
    switch (j.type()) {
        case nlohmann::json::value_t::null:
            return py::none();
        case nlohmann::json::value_t::boolean:
            return py::bool_(j.get<bool>());
        case nlohmann::json::value_t::number_integer:
            return py::int_(j.get<long long>());
        case nlohmann::json::value_t::number_unsigned:
            return py::int_(j.get<unsigned long long>());
        case nlohmann::json::value_t::number_float:
            return py::float_(j.get<double>());
        case nlohmann::json::value_t::string:
            return py::str(j.get<std::string>());
        case nlohmann::json::value_t::array: {
            py::list out;
            for (const auto& v : j) out.append(json_to_py(v));
            return out;
        }
        case nlohmann::json::value_t::object: {
            py::dict out;
            for (auto it = j.begin(); it != j.end(); ++it)
                out[py::str(it.key())] = json_to_py(it.value());
            return out;
        }
        default:
            return py::none();
    }
}

nlohmann::json py_to_json(const py::handle& obj) {
    if (obj.is_none()) return nullptr;
    if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
    if (py::isinstance<py::int_>(obj)) return obj.cast<long long>();
    if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
    if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
    if (py::isinstance<py::dict>(obj)) {
        nlohmann::json j = nlohmann::json::object();
        for (auto item : obj.cast<py::dict>())
            j[item.first.cast<std::string>()] = py_to_json(item.second);
        return j;
    }
    if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
        nlohmann::json j = nlohmann::json::array();
        for (auto item : obj.cast<py::sequence>()) j.push_back(py_to_json(item));
        return j;
    }
    throw py::type_error("unsupported config value");
}

IVDataset dataset_from_arrays(const Eigen::VectorXd& v, const Eigen::VectorXd& p,
                              const Eigen::VectorXd& i) {
    if (v.size() != p.size() || v.size() != i.size())
        throw DimensionError("voltage/intensity/current arrays must share a length");
    IVDataset ds;
    ds.provenance = "python";
    for (Eigen::Index k = 0; k < v.size(); ++k)
        ds.samples.push_back(IVSample{v(k), p(k), i(k)});
    return ds;
}

} // namespace

PYBIND11_MODULE(_diodeq, m) {
    m.doc() = "photodiode I-V regression engines, Fock-space simulator and "
              "diode physics extraction";

    py::register_exception<Error>(m, "DiodeqError");

    // ---- dataset -----------------------------------------------------
    py::class_<IVSample>(m, "IVSample")
        .def(py::init<>())
        .def(py::init([](double v, double p, double i) { return IVSample{v, p, i}; }),
             py::arg("voltage"), py::arg("intensity"), py::arg("current"))
        .def_readwrite("voltage", &IVSample::voltage)
        .def_readwrite("intensity", &IVSample::intensity)
        .def_readwrite("current", &IVSample::current);

    py::class_<IVDataset>(m, "IVDataset")
        .def(py::init<>())
        .def_readwrite("samples", &IVDataset::samples)
        .def_readwrite("provenance", &IVDataset::provenance)
        .def("__len__", &IVDataset::size)
        .def("features", &IVDataset::features)
        .def("targets", &IVDataset::targets);

    m.def("dataset_from_arrays", &dataset_from_arrays, py::arg("voltage"),
          py::arg("intensity"), py::arg("current"));
    m.def("load_csv", &load_csv, py::arg("path"));
    m.def("save_csv", &save_csv, py::arg("dataset"), py::arg("path"));
    m.def("summary_stats", [](const IVDataset& ds) {
        const SummaryStats st = summary_stats(ds);
        auto pack = [](const ColumnStats& c) {
            py::dict d;
            d["count"] = c.count;
            d["mean"] = c.mean;
            d["std"] = c.std_dev;
            d["min"] = c.min;
            d["25%"] = c.q25;
            d["50%"] = c.median;
            d["75%"] = c.q75;
            d["max"] = c.max;
            return d;
        };
        py::dict out;
        out["voltage"] = pack(st.voltage);
        out["intensity"] = pack(st.intensity);
        out["current"] = pack(st.current);
        return out;
    });

    py::enum_<ScalerKind>(m, "ScalerKind")
        .value("IQR_ROBUST", ScalerKind::IqrRobust)
        .value("STANDARD", ScalerKind::Standard)
        .value("MIN_MAX", ScalerKind::MinMax);

    py::class_<ScalerParams>(m, "ScalerParams")
        .def_readonly("kind", &ScalerParams::kind)
        .def_readonly("location", &ScalerParams::location)
        .def_readonly("scale", &ScalerParams::scale)
        .def("to_json", [](const ScalerParams& p) { return json_to_py(p.to_json()); });

    m.def("fit_scaler", &fit_scaler, py::arg("rows"), py::arg("kind"),
          py::arg("target_lo") = 0.0, py::arg("target_hi") = 1.0);
    m.def("apply_scaler", &apply_scaler);
    m.def("invert_scaler", &invert_scaler);

    m.def("split_train_test", [](std::size_t n, double frac, std::uint64_t seed) {
        const SplitIndices s = split_train_test(n, frac, seed);
        return py::make_tuple(s.train, s.test);
    });
    m.def("kfold_indices", &kfold_indices);

    py::class_<SyntheticDiodeParams>(m, "SyntheticDiodeParams")
        .def(py::init<>())
        .def_readwrite("ideality", &SyntheticDiodeParams::ideality)
        .def_readwrite("saturation_current", &SyntheticDiodeParams::saturation_current)
        .def_readwrite("series_resistance", &SyntheticDiodeParams::series_resistance)
        .def_readwrite("temperature", &SyntheticDiodeParams::temperature)
        .def_readwrite("photo_coeff", &SyntheticDiodeParams::photo_coeff)
        .def_readwrite("photo_exponent", &SyntheticDiodeParams::photo_exponent);
    m.def("synthesize_diode", &synthesize_diode);

    // ---- model core ----------------------------------------------------
    m.def("mse", &mse);
    m.def("r2_score", &r2_score);
    m.def("linear_least_squares", &linear_least_squares);

    // ---- knn -----------------------------------------------------------
    py::class_<KnnRegressor>(m, "KnnRegressor")
        .def(py::init([](std::size_t k, double p, const std::string& weighting,
                         const std::string& search) {
                 KnnConfig c;
                 c.k = k;
                 c.p = p;
                 c.weighting = weighting == "uniform" ? KnnConfig::Weighting::Uniform
                                                      : KnnConfig::Weighting::InverseDistance;
                 c.search = search == "kd-tree" ? KnnConfig::Search::KdTree
                                                : KnnConfig::Search::Brute;
                 return KnnRegressor(c);
             }),
             py::arg("k") = 4, py::arg("p") = 2.0,
             py::arg("weighting") = "inverse-distance", py::arg("search") = "brute")
        .def("fit", &KnnRegressor::fit)
        .def("predict", &KnnRegressor::predict)
        .def("to_json", [](const KnnRegressor& r) { return json_to_py(r.to_json()); });
    m.def("minkowski_distance", &minkowski_distance);

    // ---- mlp -----------------------------------------------------------
    py::class_<MlpRegressor>(m, "MlpRegressor")
        .def(py::init([](const std::vector<std::size_t>& sizes, double lr,
                         std::size_t batch, std::size_t epochs, std::uint64_t seed,
                         double init_std) {
                 MlpConfig c;
                 c.layer_sizes = sizes;
                 c.learning_rate = lr;
                 c.batch_size = batch;
                 c.epochs = epochs;
                 c.init_seed = seed;
                 c.init_std = init_std;
                 return MlpRegressor(c);
             }),
             py::arg("layer_sizes") = std::vector<std::size_t>{2, 16, 32, 32, 16, 1},
             py::arg("learning_rate") = 1e-3, py::arg("batch_size") = 32,
             py::arg("epochs") = 1000, py::arg("seed") = 42, py::arg("init_std") = 0.1)
        .def("fit", &MlpRegressor::fit)
        .def("train",
             [](MlpRegressor& self, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
                 const MlpHistory h = self.train(X, y);
                 return py::make_tuple(h.train_mse, h.test_mse);
             })
        .def("predict", &MlpRegressor::predict);

    // ---- pipeline --------------------------------------------------------
    py::class_<GbtRegressor>(m, "GbtRegressor")
        .def(py::init([](std::size_t rounds, double shrinkage, std::size_t max_depth,
                         std::size_t min_samples_leaf) {
                 GbtConfig c;
                 c.rounds = rounds;
                 c.shrinkage = shrinkage;
                 c.max_depth = max_depth;
                 c.min_samples_leaf = min_samples_leaf;
                 return GbtRegressor(c);
             }),
             py::arg("rounds") = 50, py::arg("shrinkage") = 0.1, py::arg("max_depth") = 3,
             py::arg("min_samples_leaf") = 1)
        .def("fit", &GbtRegressor::fit)
        .def("predict", &GbtRegressor::predict)
        .def("train_history", &GbtRegressor::train_history);

    m.def("fig5_pipeline",
          [](const Eigen::MatrixXd& Xtr, const Eigen::VectorXd& ytr,
             const Eigen::MatrixXd& Xte, const Eigen::VectorXd& yte) {
              return json_to_py(fig5_pipeline(Xtr, ytr, Xte, yte, GbtConfig{}, KnnConfig{})
                                    .to_json());
          });

    m.def("gp_search", [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const py::dict& config) {
        GpConfig cfg;
        const nlohmann::json j = py_to_json(config);
        cfg.population = j.value("population", cfg.population);
        cfg.generations = j.value("generations", cfg.generations);
        cfg.mutation_rate = j.value("mutation_rate", cfg.mutation_rate);
        cfg.crossover_rate = j.value("crossover_rate", cfg.crossover_rate);
        cfg.tournament = j.value("tournament", cfg.tournament);
        cfg.cv_folds = j.value("cv_folds", cfg.cv_folds);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.elitism = j.value("elitism", cfg.elitism);
        cfg.max_depth = j.value("max_depth", cfg.max_depth);
        if (j.contains("registry")) {
            cfg.registry.clear();
            for (const auto& k : j["registry"])
                cfg.registry.push_back(node_kind_from_string(k.get<std::string>()));
        }
        const GpResult res = gp_search(cfg, X, y);
        py::dict out;
        out["best"] = json_to_py(res.best.to_json());
        out["best_fitness"] = res.best_fitness;
        out["best_history"] = res.best_history;
        out["mean_history"] = res.mean_history;
        return out;
    });

    // ---- fock simulator ---------------------------------------------------
    py::class_<FockState>(m, "FockState")
        .def(py::init<>())
        .def_readwrite("amplitudes", &FockState::amplitudes)
        .def_readwrite("cutoff", &FockState::cutoff)
        .def("norm2", &FockState::norm2);

    py::enum_<Observable>(m, "Observable")
        .value("X", Observable::X)
        .value("P", Observable::P)
        .value("N", Observable::N)
        .value("IDENTITY", Observable::Identity);

    m.def("vacuum_state", &vacuum_state, py::arg("cutoff") = kDefaultCutoff);
    m.def("apply_displacement",
          [](const FockState& s, Cplx alpha, double tol) {
              return apply_displacement(s, alpha, tol);
          },
          py::arg("state"), py::arg("alpha"), py::arg("leak_tolerance") = kDefaultLeakTolerance);
    m.def("apply_squeezing",
          [](const FockState& s, Cplx z, double tol) { return apply_squeezing(s, z, tol); },
          py::arg("state"), py::arg("z"), py::arg("leak_tolerance") = kDefaultLeakTolerance);
    m.def("apply_rotation", &apply_rotation);
    m.def("apply_kerr", &apply_kerr);
    m.def("apply_cubic",
          [](const FockState& s, double gamma, double tol) {
              return apply_cubic(s, gamma, tol);
          },
          py::arg("state"), py::arg("gamma"), py::arg("leak_tolerance") = kDefaultLeakTolerance);
    m.def("prepare_displaced_squeezed", &prepare_displaced_squeezed, py::arg("alpha"),
          py::arg("z"), py::arg("cutoff") = kDefaultCutoff,
          py::arg("leak_tolerance") = kDefaultLeakTolerance);
    m.def("expectation", &expectation);
    m.def("wigner", &wigner, py::arg("state"), py::arg("xs"), py::arg("ps"));
    m.def("overlap_analytic", [](Cplx a1, Cplx z1, Cplx a2, Cplx z2) {
        return overlap_analytic(DisplacedSqueezedParams{a1, z1},
                                DisplacedSqueezedParams{a2, z2});
    });
    m.def("kernel_distance", [](Cplx a1, Cplx z1, Cplx a2, Cplx z2) {
        return kernel_distance(DisplacedSqueezedParams{a1, z1},
                               DisplacedSqueezedParams{a2, z2});
    });

    // ---- qnn ---------------------------------------------------------------
    py::class_<QnnModel>(m, "QnnModel")
        .def_readwrite("cutoff", &QnnModel::cutoff)
        .def_readwrite("trace_penalty", &QnnModel::trace_penalty)
        .def_readwrite("target_scale", &QnnModel::target_scale)
        .def_readwrite("absolute_encoding", &QnnModel::absolute_encoding)
        .def("flat_params", &QnnModel::flat_params)
        .def("set_flat_params", &QnnModel::set_flat_params)
        .def("to_json", [](const QnnModel& m_) { return json_to_py(m_.to_json()); });

    py::class_<EncodedInput>(m, "EncodedInput")
        .def_readonly("alpha_in", &EncodedInput::alpha_in)
        .def_readonly("r_in", &EncodedInput::r_in)
        .def_readonly("extrapolated", &EncodedInput::extrapolated);

    m.def("make_qnn_model", &make_qnn_model, py::arg("train_data"),
          py::arg("n_layers") = kQnnLayers, py::arg("cutoff") = kDefaultCutoff,
          py::arg("init_std") = 1e-3, py::arg("seed") = 42);
    m.def("qnn_encode", &qnn_encode);
    m.def("qnn_forward", [](const QnnModel& model, const EncodedInput& in) {
        const QnnForwardResult r = qnn_forward(model, in);
        return py::make_tuple(r.prediction, r.trace, r.state);
    });
    m.def("qnn_loss", &qnn_loss);
    m.def("qnn_gradient", &qnn_gradient, py::arg("model"), py::arg("inputs"),
          py::arg("scaled_targets"), py::arg("h") = 1e-3);
    m.def("qnn_train",
          [](QnnModel& model, const IVDataset& train, std::size_t epochs, std::size_t batch,
             double lr, std::uint64_t seed) {
              QnnTrainOptions opt;
              opt.epochs = epochs;
              opt.batch_size = batch;
              opt.learning_rate = lr;
              opt.seed = seed;
              const QnnHistory h = qnn_train(model, train, nullptr, opt);
              py::dict out;
              out["train_loss"] = h.train_loss;
              out["min_trace"] = h.min_trace;
              return out;
          },
          py::arg("model"), py::arg("train_data"), py::arg("epochs") = 100,
          py::arg("batch_size") = 32, py::arg("learning_rate") = 0.005, py::arg("seed") = 42);

    // ---- physics -------------------------------------------------------------
    m.def("thermionic_current", &thermionic_current, py::arg("voltage"), py::arg("ideality"),
          py::arg("saturation_current"), py::arg("series_resistance"),
          py::arg("temperature") = 300.0);
    m.def("ideality_factor", [](const std::vector<double>& V, const std::vector<double>& I,
                                double lo, double hi, double T) {
        const DiodeFitResult r = ideality_factor(V, I, lo, hi, T);
        py::dict d;
        d["n"] = r.ideality;
        d["I0"] = r.saturation_current;
        d["residual_rms"] = r.residual_rms;
        d["n_points"] = r.n_points;
        return d;
    }, py::arg("voltage"), py::arg("current"), py::arg("window_lo") = 0.05,
       py::arg("window_hi") = 0.18, py::arg("temperature") = 300.0);
    m.def("barrier_height", &barrier_height);
    m.def("norde_series_resistance", [](const std::vector<double>& V,
                                        const std::vector<double>& I, double n, double T,
                                        double A, double Astar) {
        const NordeResult r = norde_series_resistance(V, I, n, T, A, Astar);
        py::dict d;
        d["Rs"] = r.series_resistance;
        d["barrier_eV"] = r.barrier_height_eV;
        d["v_min"] = r.v_min;
        d["gamma"] = r.gamma;
        d["boundary_minimum"] = r.boundary_minimum;
        return d;
    }, py::arg("voltage"), py::arg("current"), py::arg("ideality"),
       py::arg("temperature") = 300.0, py::arg("area_cm2") = 0.01,
       py::arg("richardson") = 32.0);
    m.def("transport_regions", [](const std::vector<double>& V, const std::vector<double>& I) {
        const TwoSegmentResult r = transport_regions(V, I);
        py::dict d;
        d["slope_low"] = r.low.slope;
        d["slope_high"] = r.high.slope;
        d["label_low"] = r.low.label;
        d["label_high"] = r.high.label;
        d["break_x"] = r.break_x;
        d["degenerate"] = r.degenerate;
        return d;
    });
    m.def("beta_theory", &beta_theory, py::arg("eps_r"), py::arg("b"));
    m.def("field_emission_beta", [](const std::vector<double>& V, const std::vector<double>& I,
                                    double eps_r, double spacing, double T) {
        const ReverseBetaResult r = field_emission_beta(V, I, eps_r, spacing, T);
        py::dict d;
        d["beta_pf_theory"] = r.beta_pf_theory;
        d["beta_sc_theory"] = r.beta_sc_theory;
        d["beta_low"] = r.beta_low;
        d["beta_high"] = r.beta_high;
        d["label_low"] = r.label_low;
        d["label_high"] = r.label_high;
        return d;
    }, py::arg("voltage"), py::arg("current"), py::arg("eps_r") = 2.89,
       py::arg("spacing_m") = 150e-9, py::arg("temperature") = 300.0);
    m.def("figures_of_merit", [](double j_ph, double j_dark, double p, double lam, double area) {
        const FiguresOfMerit f = figures_of_merit(j_ph, j_dark, p, lam, area);
        py::dict d;
        d["responsivity"] = f.responsivity;
        d["detectivity"] = f.detectivity;
        d["eqe_percent"] = f.eqe_percent;
        d["noise_current"] = f.noise_current;
        d["nep"] = f.nep;
        d["detectivity_defined"] = f.detectivity_defined;
        return d;
    }, py::arg("j_ph_A_cm2"), py::arg("j_dark_A_cm2"), py::arg("power_W_cm2"),
       py::arg("wavelength_m"), py::arg("area_cm2"));
    m.def("transient_metrics", [](const std::vector<double>& t, const std::vector<double>& i) {
        const TransientMetrics r = transient_metrics(t, i);
        py::dict d;
        d["rise_time"] = r.rise_time;
        d["fall_time"] = r.fall_time;
        d["on_off_ratio"] = r.on_off_ratio;
        d["residual_off"] = r.residual_off;
        d["cycles"] = r.n_cycles;
        return d;
    });
    m.def("asf_band_gap", [](const std::vector<double>& lam, const std::vector<double>& ab,
                             double lo, double hi) {
        const BandGapResult r = asf_band_gap(lam, ab, lo, hi);
        py::dict d;
        d["e_g_eV"] = r.e_g_eV;
        d["lambda_g_nm"] = r.lambda_g_nm;
        return d;
    });

    m.attr("DEFAULT_CUTOFF") = kDefaultCutoff;
    m.attr("__version__") = "0.1.0";
}
