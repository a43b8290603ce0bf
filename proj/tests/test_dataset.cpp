#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "diodeq/dataset.hpp"
#include "diodeq/physics.hpp"
#include "diodeq/rng.hpp"

using namespace diodeq;

namespace {

std::string write_temp_csv(const std::string& body, const std::string& name) {
    const std::string path = std::string("/tmp/diodeq_test_") + name + ".csv";
    std::ofstream out(path);
    out << body;
    return path;
}

// independent order-statistics oracle: sort, then interpolate positions
double quantile_oracle(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double h = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace

TEST_CASE("load_csv reads every data row in order") {
    std::string body = "voltage_V,intensity_mW_cm2,current_A\n";
    for (int i = 0; i < 828; ++i)
        body += std::to_string(-3.5 + 0.008 * i) + ",20,1e-6\n";
    const auto path = write_temp_csv(body, "ok828");
    const IVDataset ds = load_csv(path);
    CHECK(ds.size() == 828);
    CHECK(ds.samples.front().voltage == doctest::Approx(-3.5));
    CHECK(ds.samples[1].voltage > ds.samples[0].voltage);
    std::remove(path.c_str());
}

TEST_CASE("load_csv rejects header-only files") {
    const auto path = write_temp_csv("voltage_V,intensity_mW_cm2,current_A\n", "empty");
    CHECK_THROWS_AS(load_csv(path), EmptyDatasetError);
    std::remove(path.c_str());
}

TEST_CASE("load_csv reports the row of a malformed cell") {
    const auto path =
        write_temp_csv("voltage_V,intensity_mW_cm2,current_A\nabc,20,1e-6\n", "badrow");
    try {
        load_csv(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.row() == 1);
    }
    std::remove(path.c_str());
}

TEST_CASE("load_csv rejects wrong schema") {
    const auto path = write_temp_csv("voltage,intensity,current\n1,2,3\n", "schema");
    CHECK_THROWS_AS(load_csv(path), SchemaError);
    std::remove(path.c_str());

    const auto path2 =
        write_temp_csv("voltage_V,intensity_mW_cm2,current_A\n1,2,3,4\n", "extracol");
    CHECK_THROWS_AS(load_csv(path2), SchemaError);
    std::remove(path2.c_str());
}

TEST_CASE("summary stats of a single sample use the zero-std convention") {
    IVDataset ds;
    ds.samples.push_back({1.0, 20.0, 1e-6});
    const SummaryStats st = summary_stats(ds);
    CHECK(st.voltage.mean == 1.0);
    CHECK(st.voltage.min == 1.0);
    CHECK(st.voltage.max == 1.0);
    CHECK(st.voltage.std_dev == 0.0);
    CHECK(st.current.median == 1e-6);
}

TEST_CASE("summary stats quartiles match the sort-and-interpolate oracle") {
    const std::vector<double> vals = {3.0, -1.0, 7.5, 0.25, 2.0};
    const ColumnStats st = column_stats(vals);
    CHECK(st.q25 == doctest::Approx(quantile_oracle(vals, 0.25)).epsilon(1e-14));
    CHECK(st.median == doctest::Approx(quantile_oracle(vals, 0.50)).epsilon(1e-14));
    CHECK(st.q75 == doctest::Approx(quantile_oracle(vals, 0.75)).epsilon(1e-14));

    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.below(1000);
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform(-50.0, 50.0);
        const ColumnStats s = column_stats(v);
        CHECK(s.q25 == doctest::Approx(quantile_oracle(v, 0.25)).epsilon(1e-12));
        CHECK(s.median == doctest::Approx(quantile_oracle(v, 0.50)).epsilon(1e-12));
        CHECK(s.q75 == doctest::Approx(quantile_oracle(v, 0.75)).epsilon(1e-12));
        // mean/std against a direct loop
        double mean = 0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(n);
        CHECK(s.mean == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("empty dataset stats raise") {
    CHECK_THROWS_AS(summary_stats(IVDataset{}), EmptyDatasetError);
}

TEST_CASE("iqr scaler uses median and interquartile range") {
    // quartiles of 1..9 are 3 and 7, median 5
    Eigen::MatrixXd col(9, 1);
    for (int i = 0; i < 9; ++i) col(i, 0) = i + 1.0;
    const ScalerParams p = fit_scaler(col, ScalerKind::IqrRobust);
    CHECK(p.location[0] == doctest::Approx(5.0));
    CHECK(p.scale[0] == doctest::Approx(4.0));
    CHECK_FALSE(p.degenerate[0]);
}

TEST_CASE("scaler round trip is identity within 1e-12 relative") {
    Rng rng(77);
    for (ScalerKind kind : {ScalerKind::IqrRobust, ScalerKind::Standard, ScalerKind::MinMax}) {
        Eigen::MatrixXd X(40, 3);
        for (Eigen::Index r = 0; r < X.rows(); ++r)
            for (Eigen::Index c = 0; c < X.cols(); ++c)
                X(r, c) = rng.uniform(-1e3, 1e3) * std::pow(10.0, static_cast<double>(-c));
        const ScalerParams p = kind == ScalerKind::MinMax
                                   ? fit_scaler(X, kind, -1.1, 1.0)
                                   : fit_scaler(X, kind);
        const Eigen::MatrixXd back = invert_scaler(p, apply_scaler(p, X));
        for (Eigen::Index r = 0; r < X.rows(); ++r)
            for (Eigen::Index c = 0; c < X.cols(); ++c)
                CHECK(back(r, c) == doctest::Approx(X(r, c)).epsilon(1e-12));
    }
}

TEST_CASE("min-max of [0,80] onto [0,0.8] maps 40 to 0.4") {
    Eigen::MatrixXd col(3, 1);
    col << 0.0, 40.0, 80.0;
    const ScalerParams p = fit_scaler(col, ScalerKind::MinMax, 0.0, 0.8);
    const Eigen::MatrixXd out = apply_scaler(p, col);
    CHECK(out(0, 0) == doctest::Approx(0.0));
    CHECK(out(1, 0) == doctest::Approx(0.4));
    CHECK(out(2, 0) == doctest::Approx(0.8));
}

TEST_CASE("constant feature: standard errors, iqr falls back with a flag") {
    Eigen::MatrixXd col = Eigen::MatrixXd::Constant(5, 1, 3.25);
    CHECK_THROWS_AS(fit_scaler(col, ScalerKind::Standard), DegenerateError);
    const ScalerParams p = fit_scaler(col, ScalerKind::IqrRobust);
    CHECK(p.scale[0] == 1.0);
    CHECK(p.degenerate[0]);
}

TEST_CASE("scaler JSON round trip keeps the kind tag") {
    Eigen::MatrixXd col(4, 2);
    col << 1, 10, 2, 20, 3, 30, 4, 40;
    const ScalerParams p = fit_scaler(col, ScalerKind::MinMax, -1.1, 1.0);
    const ScalerParams q = ScalerParams::from_json(p.to_json());
    CHECK(q.kind == ScalerKind::MinMax);
    CHECK(q.location == p.location);
    CHECK(q.scale == p.scale);
    CHECK(q.target_lo == p.target_lo);
}

TEST_CASE("train/test split: 828 at 0.15 gives 704 train + 124 test") {
    const SplitIndices s = split_train_test(828, 0.15, 7);
    CHECK(s.test.size() == 124);  // floor(828 * 0.15)
    CHECK(s.train.size() == 704);

    // disjoint exhaustive partition
    std::vector<char> seen(828, 0);
    for (auto i : s.train) seen[i] += 1;
    for (auto i : s.test) seen[i] += 1;
    CHECK(std::all_of(seen.begin(), seen.end(), [](char c) { return c == 1; }));

    const SplitIndices s2 = split_train_test(828, 0.15, 7);
    CHECK(s.train == s2.train);
    CHECK(s.test == s2.test);

    const SplitIndices s3 = split_train_test(828, 0.15, 8);
    CHECK(s.test != s3.test);
}

TEST_CASE("split rejects out-of-range fractions") {
    CHECK_THROWS_AS(split_train_test(10, 1.0, 0), DomainError);
    CHECK_THROWS_AS(split_train_test(10, 0.0, 0), DomainError);
}

TEST_CASE("kfold: 828 into 13 folds gives nine 64s and four 63s") {
    const auto folds = kfold_indices(828, 13, 3);
    REQUIRE(folds.size() == 13);
    std::size_t n64 = 0, n63 = 0, total = 0;
    std::vector<char> seen(828, 0);
    for (const auto& f : folds) {
        total += f.size();
        if (f.size() == 64) ++n64;
        if (f.size() == 63) ++n63;
        for (auto i : f) seen[i] += 1;
    }
    CHECK(total == 828);
    CHECK(n64 == 9);
    CHECK(n63 == 4);
    CHECK(std::all_of(seen.begin(), seen.end(), [](char c) { return c == 1; }));
}

TEST_CASE("kfold edge cases") {
    const auto folds = kfold_indices(4, 4, 0);
    for (const auto& f : folds) CHECK(f.size() == 1);
    CHECK_THROWS_AS(kfold_indices(3, 5, 0), DomainError);
}

TEST_CASE("synthesize_diode: zero bias gives zero current") {
    SyntheticDiodeParams p;
    p.ideality = 2.0;
    p.series_resistance = 1000.0;
    const IVDataset ds = synthesize_diode(p, {0.0}, {0.0});
    CHECK(ds.samples[0].current == 0.0);
}

TEST_CASE("synthesize_diode at Rs=0 matches the closed form") {
    SyntheticDiodeParams p;
    p.ideality = 2.0;
    p.saturation_current = 1e-9;
    p.series_resistance = 0.0;
    p.temperature = 300.0;
    const double v = 0.1;
    const IVDataset ds = synthesize_diode(p, {v}, {0.0});
    const double vt = constants::k_B * p.temperature / constants::q;
    const double expected =
        p.saturation_current * std::exp(v / (p.ideality * vt)) * (1.0 - std::exp(-v / vt));
    CHECK(ds.samples[0].current == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("synthesize_diode with no illumination equals the dark curve") {
    SyntheticDiodeParams p;
    p.ideality = 3.0;
    p.series_resistance = 500.0;
    p.photo_coeff = 2e-6;
    std::vector<double> vs;
    for (double v = -2.0; v <= 2.0; v += 0.25) vs.push_back(v);
    const IVDataset dark = synthesize_diode(p, vs, {0.0});
    SyntheticDiodeParams p_nophoto = p;
    p_nophoto.photo_coeff = 0.0;
    const IVDataset ref = synthesize_diode(p_nophoto, vs, {0.0});
    for (std::size_t i = 0; i < dark.size(); ++i)
        CHECK(dark.samples[i].current == ref.samples[i].current);
}

TEST_CASE("synthesize_diode illumination adds a reverse photocurrent") {
    SyntheticDiodeParams p;
    p.ideality = 3.0;
    p.series_resistance = 1000.0;
    p.photo_coeff = 2e-6;
    p.photo_exponent = 1.4;
    const IVDataset ds = synthesize_diode(p, {-1.0}, {0.0, 50.0});
    const double dark = ds.samples[0].current;
    const double lit = ds.samples[1].current;
    CHECK(lit == doctest::Approx(dark - 2e-6 * std::pow(50.0, 1.4)).epsilon(1e-12));
}
