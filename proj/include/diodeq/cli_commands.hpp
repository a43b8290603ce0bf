#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace diodeq::cli {

// exit code contract: 0 success, 2 input/validation error, 3 computation error
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitCompute = 3;

struct CommonOptions {
    std::string input;            // dataset CSV
    std::string out_dir = ".";
    std::uint64_t seed = 42;
    std::string format = "json";  // json | csv | svg
};

// Per-column summary statistics; writes report.json.
int cmd_stats(const CommonOptions& opt);

// Trains one of {knn, mlp, fig5, gp, qnn} on the shared 85/15 split
// derived from the seed (identical partition for every model kind).
// Writes model.json, report.json, split_manifest.json and, for iterative
// engines, history.csv.
int cmd_train(const CommonOptions& opt, const std::string& model_kind,
              const nlohmann::json& config);

// Side-by-side error comparison of previously trained model files.
int cmd_compare(const CommonOptions& opt, const std::vector<std::string>& model_files);

struct PhysicsInputs {
    std::string dark_csv;
    std::vector<std::string> light_csvs;
    std::string constants_json;  // optional path
    std::string transient_csv;   // optional: time_s,current_A
    std::string spectrum_csv;    // optional: lambda_nm,absorbance
};

// Full extraction chain; per-stage failures are collected in the report
// and the command succeeds if any stage succeeded.
int cmd_physics(const CommonOptions& opt, const PhysicsInputs& in);

struct WignerRequest {
    double alpha_re = 0.0;
    double alpha_im = 0.0;
    double z_r = 0.0;
    double z_theta = 0.0;
    int cutoff = 18;
    double grid_min = -6.0;
    double grid_max = 6.0;
    double grid_step = 0.1;
    std::string model_file;  // optional QNN model
    std::string sample;      // "V,P" to push through the model circuit
};

// Emits the (x, p, W) grid as CSV, optionally an SVG heatmap.
int cmd_wigner(const CommonOptions& opt, const WignerRequest& req);

} // namespace diodeq::cli
