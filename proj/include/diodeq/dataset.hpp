#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "diodeq/errors.hpp"

namespace diodeq {

// One I-V-illumination measurement. Voltage in volts, intensity in
// mW/cm^2, current in amperes.
struct IVSample {
    double voltage = 0.0;
    double intensity = 0.0;
    double current = 0.0;
};

struct IVDataset {
    std::vector<IVSample> samples;
    std::string provenance;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    // Feature matrix (voltage, intensity) and target vector (current).
    Eigen::MatrixXd features() const;
    Eigen::VectorXd targets() const;
};

// CSV schema: header `voltage_V,intensity_mW_cm2,current_A`, '.' decimals.
IVDataset load_csv(const std::string& path);
void save_csv(const IVDataset& ds, const std::string& path);

struct ColumnStats {
    std::size_t count = 0;
    double mean = 0.0;
    double std_dev = 0.0;   // sample std; 0 by convention for a single value
    double min = 0.0;
    double q25 = 0.0;       // type-7 linear interpolation
    double median = 0.0;
    double q75 = 0.0;
    double max = 0.0;
};

struct SummaryStats {
    ColumnStats voltage;
    ColumnStats intensity;
    ColumnStats current;
};

SummaryStats summary_stats(const IVDataset& ds);
ColumnStats column_stats(const std::vector<double>& values);

// Type-7 quantile (linear interpolation between order statistics) of a
// sorted vector; q in [0,1].
double quantile_sorted(const std::vector<double>& sorted, double q);

enum class ScalerKind { IqrRobust, Standard, MinMax };

std::string to_string(ScalerKind kind);
ScalerKind scaler_kind_from_string(const std::string& s);

// Per-feature affine scaling.  Transform for iqr-robust / standard is
// (x - location) / scale; for min-max it is lo + (x - location) / scale
// with location = observed min and scale = (max - min) / (hi - lo).
struct ScalerParams {
    ScalerKind kind = ScalerKind::IqrRobust;
    std::vector<double> location;
    std::vector<double> scale;            // strictly positive
    double target_lo = 0.0;               // min-max only
    double target_hi = 1.0;
    std::vector<bool> degenerate;         // per-feature fallback flag

    std::size_t n_features() const { return location.size(); }

    nlohmann::json to_json() const;
    static ScalerParams from_json(const nlohmann::json& j);
};

ScalerParams fit_scaler(const Eigen::MatrixXd& rows, ScalerKind kind,
                        double target_lo = 0.0, double target_hi = 1.0);
Eigen::MatrixXd apply_scaler(const ScalerParams& p, const Eigen::MatrixXd& rows);
Eigen::MatrixXd invert_scaler(const ScalerParams& p, const Eigen::MatrixXd& rows);

struct SplitIndices {
    std::vector<std::size_t> train;  // ascending
    std::vector<std::size_t> test;   // ascending
};

// Deterministic seeded split; floor(n * test_fraction) test rows.
SplitIndices split_train_test(std::size_t n_samples, double test_fraction,
                              std::uint64_t seed);

IVDataset subset(const IVDataset& ds, const std::vector<std::size_t>& idx);

// k disjoint validation folds partitioning [0, n); sizes differ by at most 1.
std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n_samples,
                                                    std::size_t k,
                                                    std::uint64_t seed);

// Forward model used as the synthetic-data oracle: thermionic emission
// with series resistance plus an additive photocurrent term
// -photo_coeff * P^gamma (photocurrent adds to the reverse current).
struct SyntheticDiodeParams {
    double ideality = 2.0;        // n > 1
    double saturation_current = 1e-9;  // I0 [A]
    double series_resistance = 0.0;    // Rs [ohm]
    double temperature = 300.0;        // T [K]
    double photo_coeff = 0.0;          // A per (mW/cm^2)^gamma
    double photo_exponent = 1.4;       // gamma

    void validate() const;
};

IVDataset synthesize_diode(const SyntheticDiodeParams& params,
                           const std::vector<double>& voltages,
                           const std::vector<double>& intensities);

} // namespace diodeq
