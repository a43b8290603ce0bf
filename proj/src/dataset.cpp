#include "diodeq/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "diodeq/physics.hpp"
#include "diodeq/rng.hpp"

namespace diodeq {

namespace {

constexpr const char* kCsvHeader = "voltage_V,intensity_mW_cm2,current_A";

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& field, std::size_t row) {
    std::string trimmed = field;
    const auto b = trimmed.find_first_not_of(" \t");
    const auto e = trimmed.find_last_not_of(" \t");
    if (b == std::string::npos)
        throw ParseError("empty numeric cell", row);
    trimmed = trimmed.substr(b, e - b + 1);
    double value = 0.0;
    const char* first = trimmed.data();
    const char* last = first + trimmed.size();
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last)
        throw ParseError("non-numeric cell '" + field + "'", row);
    return value;
}

} // namespace

Eigen::MatrixXd IVDataset::features() const {
    Eigen::MatrixXd X(samples.size(), 2);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        X(static_cast<Eigen::Index>(i), 0) = samples[i].voltage;
        X(static_cast<Eigen::Index>(i), 1) = samples[i].intensity;
    }
    return X;
}

Eigen::VectorXd IVDataset::targets() const {
    Eigen::VectorXd y(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        y(static_cast<Eigen::Index>(i)) = samples[i].current;
    return y;
}

IVDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw SchemaError("cannot open CSV file: " + path);

    std::string line;
    if (!std::getline(in, line))
        throw SchemaError("missing header row in " + path);
    // strip BOM / CR
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
        line = line.substr(3);
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
        line.pop_back();
    if (line != kCsvHeader)
        throw SchemaError("expected header '" + std::string(kCsvHeader) + "', got '" + line + "'");

    IVDataset ds;
    ds.provenance = path;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row;
        const auto fields = split_fields(line);
        if (fields.size() != 3)
            throw SchemaError("row " + std::to_string(row) + " has " +
                              std::to_string(fields.size()) + " columns, expected 3");
        IVSample s;
        s.voltage = parse_double(fields[0], row);
        s.intensity = parse_double(fields[1], row);
        s.current = parse_double(fields[2], row);
        if (!std::isfinite(s.voltage) || !std::isfinite(s.intensity) || !std::isfinite(s.current))
            throw ValidationError("non-finite value at row " + std::to_string(row));
        if (s.intensity < 0.0)
            throw ValidationError("negative intensity at row " + std::to_string(row));
        ds.samples.push_back(s);
    }
    if (ds.samples.empty())
        throw EmptyDatasetError("CSV contains a header but no data rows: " + path);
    return ds;
}

void save_csv(const IVDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw SchemaError("cannot open for writing: " + path);
    out << kCsvHeader << "\n";
    char buf[128];
    for (const auto& s : ds.samples) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", s.voltage, s.intensity, s.current);
        out << buf;
    }
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty())
        throw EmptyDatasetError("quantile of empty vector");
    if (q < 0.0 || q > 1.0)
        throw DomainError("quantile fraction outside [0,1]");
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

ColumnStats column_stats(const std::vector<double>& values) {
    if (values.empty())
        throw EmptyDatasetError("summary statistics of an empty column");
    ColumnStats st;
    st.count = values.size();
    const double n = static_cast<double>(values.size());
    st.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - st.mean) * (v - st.mean);
        st.std_dev = std::sqrt(ss / (n - 1.0));
    }
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    st.min = sorted.front();
    st.max = sorted.back();
    st.q25 = quantile_sorted(sorted, 0.25);
    st.median = quantile_sorted(sorted, 0.50);
    st.q75 = quantile_sorted(sorted, 0.75);
    return st;
}

SummaryStats summary_stats(const IVDataset& ds) {
    if (ds.empty())
        throw EmptyDatasetError("summary statistics of an empty dataset");
    std::vector<double> v, p, i;
    v.reserve(ds.size());
    p.reserve(ds.size());
    i.reserve(ds.size());
    for (const auto& s : ds.samples) {
        v.push_back(s.voltage);
        p.push_back(s.intensity);
        i.push_back(s.current);
    }
    return SummaryStats{column_stats(v), column_stats(p), column_stats(i)};
}

std::string to_string(ScalerKind kind) {
    switch (kind) {
        case ScalerKind::IqrRobust: return "iqr-robust";
        case ScalerKind::Standard: return "standard";
        case ScalerKind::MinMax: return "min-max";
    }
    return "unknown";
}

ScalerKind scaler_kind_from_string(const std::string& s) {
    if (s == "iqr-robust") return ScalerKind::IqrRobust;
    if (s == "standard") return ScalerKind::Standard;
    if (s == "min-max") return ScalerKind::MinMax;
    throw SchemaError("unknown scaler kind: " + s);
}

nlohmann::json ScalerParams::to_json() const {
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["location"] = location;
    j["scale"] = scale;
    if (kind == ScalerKind::MinMax) {
        j["target_lo"] = target_lo;
        j["target_hi"] = target_hi;
    }
    j["degenerate"] = std::vector<int>(degenerate.begin(), degenerate.end());
    return j;
}

ScalerParams ScalerParams::from_json(const nlohmann::json& j) {
    ScalerParams p;
    p.kind = scaler_kind_from_string(j.at("kind").get<std::string>());
    p.location = j.at("location").get<std::vector<double>>();
    p.scale = j.at("scale").get<std::vector<double>>();
    p.target_lo = j.value("target_lo", 0.0);
    p.target_hi = j.value("target_hi", 1.0);
    const auto deg = j.value("degenerate", std::vector<int>(p.location.size(), 0));
    p.degenerate.assign(deg.begin(), deg.end());
    if (p.scale.size() != p.location.size())
        throw SchemaError("scaler location/scale length mismatch");
    for (double s : p.scale)
        if (!(s > 0.0))
            throw SchemaError("scaler scale must be strictly positive");
    return p;
}

ScalerParams fit_scaler(const Eigen::MatrixXd& rows, ScalerKind kind,
                        double target_lo, double target_hi) {
    if (rows.rows() == 0)
        throw EmptyDatasetError("fitting a scaler on no rows");
    if (kind == ScalerKind::MinMax && !(target_hi > target_lo))
        throw DomainError("min-max target bounds must satisfy hi > lo");

    ScalerParams p;
    p.kind = kind;
    p.target_lo = target_lo;
    p.target_hi = target_hi;
    const auto n_features = static_cast<std::size_t>(rows.cols());
    p.location.resize(n_features);
    p.scale.resize(n_features);
    p.degenerate.assign(n_features, false);

    for (std::size_t f = 0; f < n_features; ++f) {
        const auto col = rows.col(static_cast<Eigen::Index>(f));
        std::vector<double> vals(col.data(), col.data() + col.size());
        switch (kind) {
            case ScalerKind::IqrRobust: {
                std::vector<double> sorted = vals;
                std::sort(sorted.begin(), sorted.end());
                const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
                p.location[f] = quantile_sorted(sorted, 0.50);
                if (iqr > 0.0) {
                    p.scale[f] = iqr;
                } else {
                    p.scale[f] = 1.0;
                    p.degenerate[f] = true;
                }
                break;
            }
            case ScalerKind::Standard: {
                const ColumnStats st = column_stats(vals);
                if (!(st.std_dev > 0.0))
                    throw DegenerateError("constant feature " + std::to_string(f) +
                                          " under standard scaling");
                p.location[f] = st.mean;
                p.scale[f] = st.std_dev;
                break;
            }
            case ScalerKind::MinMax: {
                const auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
                p.location[f] = *mn;
                const double range = *mx - *mn;
                if (range > 0.0) {
                    p.scale[f] = range / (target_hi - target_lo);
                } else {
                    p.scale[f] = 1.0;
                    p.degenerate[f] = true;
                }
                break;
            }
        }
    }
    return p;
}

Eigen::MatrixXd apply_scaler(const ScalerParams& p, const Eigen::MatrixXd& rows) {
    if (static_cast<std::size_t>(rows.cols()) != p.n_features())
        throw DimensionError("scaler expects " + std::to_string(p.n_features()) +
                             " features, got " + std::to_string(rows.cols()));
    Eigen::MatrixXd out = rows;
    for (Eigen::Index f = 0; f < rows.cols(); ++f) {
        const auto fi = static_cast<std::size_t>(f);
        out.col(f) = (rows.col(f).array() - p.location[fi]) / p.scale[fi];
        if (p.kind == ScalerKind::MinMax)
            out.col(f).array() += p.target_lo;
    }
    return out;
}

Eigen::MatrixXd invert_scaler(const ScalerParams& p, const Eigen::MatrixXd& rows) {
    if (static_cast<std::size_t>(rows.cols()) != p.n_features())
        throw DimensionError("scaler expects " + std::to_string(p.n_features()) +
                             " features, got " + std::to_string(rows.cols()));
    Eigen::MatrixXd out = rows;
    for (Eigen::Index f = 0; f < rows.cols(); ++f) {
        const auto fi = static_cast<std::size_t>(f);
        Eigen::ArrayXd x = rows.col(f).array();
        if (p.kind == ScalerKind::MinMax)
            x -= p.target_lo;
        out.col(f) = x * p.scale[fi] + p.location[fi];
    }
    return out;
}

SplitIndices split_train_test(std::size_t n_samples, double test_fraction,
                              std::uint64_t seed) {
    if (n_samples == 0)
        throw EmptyDatasetError("splitting an empty dataset");
    if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
        throw DomainError("test fraction must lie strictly between 0 and 1");

    std::vector<std::size_t> idx(n_samples);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);

    const auto n_test = static_cast<std::size_t>(
        std::floor(static_cast<double>(n_samples) * test_fraction));
    SplitIndices out;
    out.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    std::sort(out.test.begin(), out.test.end());
    std::sort(out.train.begin(), out.train.end());
    return out;
}

IVDataset subset(const IVDataset& ds, const std::vector<std::size_t>& idx) {
    IVDataset out;
    out.provenance = ds.provenance;
    out.samples.reserve(idx.size());
    for (std::size_t i : idx)
        out.samples.push_back(ds.samples.at(i));
    return out;
}

std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n_samples,
                                                    std::size_t k,
                                                    std::uint64_t seed) {
    if (k < 2)
        throw DomainError("k-fold requires k >= 2");
    if (k > n_samples)
        throw DomainError("k-fold requires k <= n_samples");

    std::vector<std::size_t> idx(n_samples);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);

    std::vector<std::vector<std::size_t>> folds(k);
    const std::size_t base = n_samples / k;
    const std::size_t extra = n_samples % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t sz = base + (f < extra ? 1 : 0);
        folds[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                        idx.begin() + static_cast<std::ptrdiff_t>(pos + sz));
        std::sort(folds[f].begin(), folds[f].end());
        pos += sz;
    }
    return folds;
}

void SyntheticDiodeParams::validate() const {
    if (!(ideality > 1.0)) throw DomainError("ideality must exceed 1");
    if (!(saturation_current > 0.0)) throw DomainError("saturation current must be positive");
    if (series_resistance < 0.0) throw DomainError("series resistance must be non-negative");
    if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
    if (photo_coeff < 0.0) throw DomainError("photo coefficient must be non-negative");
    if (!(photo_exponent > 0.0)) throw DomainError("photo exponent must be positive");
}

IVDataset synthesize_diode(const SyntheticDiodeParams& params,
                           const std::vector<double>& voltages,
                           const std::vector<double>& intensities) {
    params.validate();
    IVDataset ds;
    ds.provenance = "synthetic";
    ds.samples.reserve(voltages.size() * intensities.size());
    for (double p : intensities) {
        const double photo =
            p > 0.0 ? params.photo_coeff * std::pow(p, params.photo_exponent) : 0.0;
        for (double v : voltages) {
            const double i_te = thermionic_current(v, params.ideality,
                                                   params.saturation_current,
                                                   params.series_resistance,
                                                   params.temperature);
            ds.samples.push_back(IVSample{v, p, i_te - photo});
        }
    }
    return ds;
}

} // namespace diodeq
