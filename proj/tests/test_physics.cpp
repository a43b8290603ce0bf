#include <doctest.h>

#include <cmath>
#include <vector>

#include "diodeq/dataset.hpp"
#include "diodeq/physics.hpp"
#include "diodeq/rng.hpp"

using namespace diodeq;
using constants::k_B;
using constants::q;

namespace {

double eq13_direct(double u, double n, double i0, double T) {
    const double vt = k_B * T / q;
    return i0 * std::exp(u / (n * vt)) * (1.0 - std::exp(-u / vt));
}

// independent bisection oracle for the implicit solve
double bisection_oracle(double v, double n, double i0, double rs, double T) {
    double lo, hi;
    const double iv = eq13_direct(v, n, i0, T);
    if (v >= 0) {
        lo = 0.0;
        hi = std::min(iv, v / rs);
    } else {
        lo = std::max(iv, v / rs);
        hi = 0.0;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid - eq13_direct(v - mid * rs, n, i0, T) > 0.0)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1.0);
    return v;
}

} // namespace

TEST_CASE("thermionic current: zero bias, closed form at Rs=0, bisection at Rs>0") {
    CHECK(thermionic_current(0.0, 2.0, 1e-9, 1000.0, 300.0) == 0.0);

    const double direct = eq13_direct(0.37, 2.0, 1e-9, 300.0);
    CHECK(thermionic_current(0.37, 2.0, 1e-9, 0.0, 300.0) ==
          doctest::Approx(direct).epsilon(1e-14));

    const double got = thermionic_current(0.5, 2.0, 1e-9, 1000.0, 300.0);
    const double want = bisection_oracle(0.5, 2.0, 1e-9, 1000.0, 300.0);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("thermionic current is strictly increasing in voltage") {
    double prev = -1e18;
    for (double v = -2.0; v <= 2.0; v += 0.05) {
        const double i = thermionic_current(v, 3.0, 1e-9, 500.0, 300.0);
        CHECK(i > prev);
        prev = i;
    }
}

TEST_CASE("ideality factor recovers synthetic parameters") {
    SyntheticDiodeParams p;
    p.ideality = 3.0;
    p.saturation_current = 1e-9;
    p.series_resistance = 0.0;
    const IVDataset ds = synthesize_diode(p, linspace(0.05, 0.15, 21), {0.0});
    std::vector<double> V, I;
    for (const auto& s : ds.samples) {
        V.push_back(s.voltage);
        I.push_back(s.current);
    }
    const DiodeFitResult fit = ideality_factor(V, I, 0.05, 0.15, 300.0);
    CHECK(fit.ideality == doctest::Approx(3.0).epsilon(0.02));
    CHECK(fit.saturation_current == doctest::Approx(1e-9).epsilon(0.05));
}

TEST_CASE("ideality factor rejects bad windows") {
    std::vector<double> V = {0.1, 0.12, 0.14};
    std::vector<double> Ineg = {1e-6, -1e-6, 1e-6};
    CHECK_THROWS_AS(ideality_factor(V, Ineg, 0.05, 0.2, 300.0), DomainError);
    std::vector<double> I = {1e-6, 2e-6, 3e-6};
    CHECK_THROWS_AS(ideality_factor(V, I, 0.3, 0.5, 300.0), WindowError);
}

TEST_CASE("barrier height identities") {
    const double T = 300.0;
    const double vt = k_B * T / q;
    // pick I0 so that A A* T^2 / I0 = e
    const double A = 0.01, As = 32.0;
    const double i0 = A * As * T * T / std::exp(1.0);
    CHECK(barrier_height(i0, A, As, T) == doctest::Approx(vt).epsilon(1e-12));
    // doubling I0 lowers the barrier by vt ln 2
    const double b1 = barrier_height(1e-9, A, As, T);
    const double b2 = barrier_height(2e-9, A, As, T);
    CHECK(b1 - b2 == doctest::Approx(vt * std::log(2.0)).epsilon(1e-10));
    CHECK_THROWS_AS(barrier_height(-1e-9, A, As, T), DomainError);
}

TEST_CASE("norde extraction recovers a 1 kOhm series resistance") {
    SyntheticDiodeParams p;
    p.ideality = 2.0;
    p.saturation_current = 1e-9;
    p.series_resistance = 1000.0;
    const IVDataset ds = synthesize_diode(p, linspace(0.01, 3.4, 340), {0.0});
    std::vector<double> V, I;
    for (const auto& s : ds.samples) {
        V.push_back(s.voltage);
        I.push_back(s.current);
    }
    const DiodeFitResult fit = ideality_factor(V, I, 0.05, 0.18, 300.0);
    const NordeResult norde =
        norde_series_resistance(V, I, fit.ideality, 300.0, 0.01, 32.0);
    CHECK(norde.gamma == 3);
    CHECK(norde.series_resistance == doctest::Approx(1000.0).epsilon(0.10));
    CHECK_FALSE(norde.boundary_minimum);
    // barrier height from the minimum agrees with the log-formula barrier on the fitted I0
    const double phi_eq14 = barrier_height(fit.saturation_current, 0.01, 32.0, 300.0);
    CHECK(norde.barrier_height_eV == doctest::Approx(phi_eq14).epsilon(0.02));
}

TEST_CASE("norde on an Rs=0 curve reports a negligible resistance") {
    SyntheticDiodeParams p;
    p.ideality = 2.0;
    p.saturation_current = 1e-9;
    p.series_resistance = 0.0;
    const IVDataset ds = synthesize_diode(p, linspace(0.01, 1.0, 100), {0.0});
    std::vector<double> V, I;
    for (const auto& s : ds.samples) {
        V.push_back(s.voltage);
        I.push_back(s.current);
    }
    const NordeResult norde = norde_series_resistance(V, I, 2.0, 300.0, 0.01, 32.0);
    CHECK(norde.boundary_minimum);
    CHECK(norde.series_resistance < 1.0);
}

TEST_CASE("round trip: extraction recovers the generating parameters across a sweep") {
    Rng rng(404);
    for (int trial = 0; trial < 8; ++trial) {
        // keep n away from integer boundaries: gamma - n stays conditioned
        double n = rng.uniform(1.5, 5.0);
        if (std::abs(n - std::round(n)) < 0.1)
            n += n - std::round(n) >= 0.0 ? 0.1 : -0.1;
        const double rs = trial % 4 == 0 ? 0.0 : rng.uniform(100.0, 3000.0);

        SyntheticDiodeParams p;
        p.ideality = n;
        p.saturation_current = 1e-9;
        p.series_resistance = rs;
        const IVDataset ds = synthesize_diode(p, linspace(0.01, 3.4, 680), {0.0});
        std::vector<double> V, I;
        for (const auto& s : ds.samples) {
            V.push_back(s.voltage);
            I.push_back(s.current);
        }

        const DiodeFitResult fit = ideality_factor(V, I, 0.05, 0.18, 300.0);
        CHECK(std::abs(fit.ideality - n) / n < 0.02);
        CHECK(std::abs(fit.saturation_current - 1e-9) / 1e-9 < 0.10);

        const NordeResult norde =
            norde_series_resistance(V, I, fit.ideality, 300.0, 0.01, 32.0);
        if (rs == 0.0)
            CHECK(norde.series_resistance < 10.0);
        else
            CHECK(std::abs(norde.series_resistance - rs) <= 0.10 * rs);
    }
}

TEST_CASE("transport regions: pure power law collapses to one slope") {
    std::vector<double> V, I;
    for (double v = 0.1; v <= 2.0; v += 0.05) {
        V.push_back(v);
        I.push_back(v * v);
    }
    const TwoSegmentResult r = transport_regions(V, I);
    CHECK(r.degenerate);
    CHECK(r.low.slope == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(r.high.slope == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("transport regions: constructed knee is located within one sample") {
    // slope 1 below the knee at V = 1, slope 2.6 above
    std::vector<double> V, I;
    const double knee = 1.0;
    for (double v = 0.1; v <= 3.0; v += 0.04) {
        V.push_back(v);
        I.push_back(v <= knee ? v : std::pow(v, 2.6));
    }
    const TwoSegmentResult r = transport_regions(V, I);
    CHECK_FALSE(r.degenerate);
    CHECK(r.low.slope == doctest::Approx(1.0).epsilon(0.02));
    CHECK(r.high.slope == doctest::Approx(2.6).epsilon(0.02));
    CHECK(std::exp(r.break_x) == doctest::Approx(knee).epsilon(0.05));
    CHECK(r.low.label == "ohmic");
    CHECK(r.high.label == "SCLC");
}

TEST_CASE("field lowering coefficients match the reference constants") {
    // eps = 2.89: beta_PF ~ 4.46e-5, beta_Sc ~ 2.23e-5 eV m^0.5 V^-0.5
    const double pf = beta_theory(2.89, 1.0);
    const double sc = beta_theory(2.89, 4.0);
    CHECK(std::abs(pf - 4.46e-5) / 4.46e-5 < 0.01);
    CHECK(std::abs(sc - 2.23e-5) / 2.23e-5 < 0.01);
    CHECK(pf == doctest::Approx(2.0 * sc).epsilon(1e-12));  // sqrt(4) = 2
}

TEST_CASE("reverse-branch beta recovered from a synthetic Poole-Frenkel curve") {
    const double T = 300.0;
    const double vt = k_B * T / q;
    const double beta_true = beta_theory(2.89, 1.0);
    const double d = 150e-9;
    std::vector<double> V, I;
    for (double vr = 0.1; vr <= 3.5; vr += 0.05) {
        const double E = vr / d;
        V.push_back(-vr);
        I.push_back(-1e-9 * std::exp(beta_true * std::sqrt(E) / vt));
    }
    const ReverseBetaResult r = field_emission_beta(V, I, 2.89, d, T);
    CHECK(std::abs(r.beta_low - beta_true) / beta_true < 0.02);
    CHECK(std::abs(r.beta_high - beta_true) / beta_true < 0.02);
    CHECK(r.label_low == "poole-frenkel");
    CHECK(r.label_high == "poole-frenkel");
}

TEST_CASE("figures of merit: formulas and internal consistency") {
    // R = 19 mA/W at 194 nm -> EQE within 5% of the reference 11.85 %
    const double p = 1.0;  // W/cm^2 so that J_ph = R numerically
    const FiguresOfMerit m = figures_of_merit(0.019, 5e-4, p, 194e-9, 0.01);
    CHECK(m.responsivity == doctest::Approx(0.019));
    CHECK(std::abs(m.eqe_percent - 11.85) / 11.85 < 0.05);
    CHECK(m.eqe_percent == doctest::Approx(12.14).epsilon(0.01));

    // J_ph numerically equal to P gives R = 1 A/W
    const FiguresOfMerit unit = figures_of_merit(0.5, 1e-6, 0.5, 365e-9, 0.01);
    CHECK(unit.responsivity == doctest::Approx(1.0));

    // D* from the direct formula
    const double dstar = m.responsivity / std::sqrt(2.0 * q * m.j_dark);
    CHECK(m.detectivity == doctest::Approx(dstar).epsilon(1e-12));

    // I_N = NEP * R and D* = sqrt(A) R / I_N to 1e-12 relative
    CHECK(m.noise_current == doctest::Approx(m.nep * m.responsivity).epsilon(1e-12));
    CHECK(m.detectivity ==
          doctest::Approx(std::sqrt(m.area_cm2) * m.responsivity / m.noise_current)
              .epsilon(1e-12));

    const FiguresOfMerit dark0 = figures_of_merit(0.019, 0.0, 1.0, 194e-9, 0.01);
    CHECK_FALSE(dark0.detectivity_defined);
    CHECK_THROWS_AS(figures_of_merit(0.019, 5e-4, 0.0, 194e-9, 0.01), DomainError);
}

TEST_CASE("transient metrics: exponential step obeys the 10-90 rule") {
    const double tau = 0.188;
    const double period = 8.0;  // long plateaus so the levels settle fully
    const double dt = 0.002;
    std::vector<double> t, i;
    for (double x = 0.0; x < 2.0 * period; x += dt) {
        const double phase = std::fmod(x, period);
        const double on = phase < 0.5 * period;
        const double level =
            on ? 1.0 - std::exp(-phase / tau)
               : (1.0 - std::exp(-0.5 * period / tau)) * std::exp(-(phase - 0.5 * period) / tau);
        t.push_back(x);
        i.push_back(0.2 + level);  // nonzero OFF plateau
    }
    const TransientMetrics m = transient_metrics(t, i);
    CHECK(std::abs(m.rise_time - tau * std::log(9.0)) <= dt);
    CHECK(std::abs(m.fall_time - tau * std::log(9.0)) <= dt);
    CHECK(m.on_off_ratio > 1.0);
    CHECK(m.residual_off == doctest::Approx(0.2).epsilon(0.05));

    // scaling the trace leaves times and ratio unchanged
    std::vector<double> i2 = i;
    for (auto& v : i2) v *= 7.5;
    const TransientMetrics m2 = transient_metrics(t, i2);
    CHECK(m2.rise_time == doctest::Approx(m.rise_time).epsilon(1e-12));
    CHECK(m2.fall_time == doctest::Approx(m.fall_time).epsilon(1e-12));
    CHECK(m2.on_off_ratio == doctest::Approx(m.on_off_ratio).epsilon(1e-12));
}

TEST_CASE("transient metrics: instantaneous edges are bounded by the sampling step") {
    const double dt = 0.01;
    std::vector<double> t, i;
    for (double x = 0.0; x < 4.0; x += dt) {
        t.push_back(x);
        i.push_back(std::fmod(x, 2.0) < 1.0 ? 0.1 : 1.0);
    }
    const TransientMetrics m = transient_metrics(t, i);
    CHECK(m.rise_time <= dt);
    CHECK(m.fall_time <= dt);
}

TEST_CASE("transient metrics: flat trace raises") {
    std::vector<double> t = {0, 1, 2, 3}, i = {1, 1, 1, 1};
    CHECK_THROWS_AS(transient_metrics(t, i), WindowError);
}

TEST_CASE("ASF band gap recovered from a constructed spectrum") {
    // (Abs/lambda)^(1/2) linear in 1/lambda with intercept 1/lambda_g
    const double lambda_g = 330.0;
    std::vector<double> lam, abs_;
    for (double l = 200.0; l <= 320.0; l += 2.0) {
        const double y = 2.0 * (1.0 / l - 1.0 / lambda_g);
        lam.push_back(l);
        abs_.push_back(l * y * y);
    }
    const BandGapResult r = asf_band_gap(lam, abs_, 200.0, 320.0);
    CHECK(std::abs(r.lambda_g_nm - lambda_g) / lambda_g < 0.005);
    CHECK(r.e_g_eV == doctest::Approx(constants::hc_eV_nm / lambda_g).epsilon(0.005));

    // flat spectrum has no band edge in the window
    std::vector<double> flat(lam.size());
    for (std::size_t i = 0; i < lam.size(); ++i) flat[i] = lam[i] * 1e-4;  // Abs/lam const
    CHECK_THROWS_AS(asf_band_gap(lam, flat, 200.0, 320.0), Error);
}
