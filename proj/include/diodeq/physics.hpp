#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "diodeq/errors.hpp"

namespace diodeq {

namespace constants {
// CODATA 2018 exact values.
inline constexpr double q = 1.602176634e-19;        // C
inline constexpr double k_B = 1.380649e-23;         // J/K
inline constexpr double h = 6.62607015e-34;         // J s
inline constexpr double c = 2.99792458e8;           // m/s
inline constexpr double eps0 = 8.8541878128e-12;    // F/m
inline constexpr double hc_eV_nm = 1239.8419843320026;  // h*c/q in eV nm
} // namespace constants

// Thermionic emission current with series resistance:
//   I = I0 exp(q(V - I Rs)/(n kB T)) [1 - exp(-q(V - I Rs)/(kB T))]
// Solved implicitly (damped Newton inside a monotone bracket) when Rs > 0;
// direct evaluation when Rs = 0.
double thermionic_current(double voltage, double ideality, double saturation_current,
                          double series_resistance, double temperature);

struct DiodeFitResult {
    double ideality = 0.0;            // n
    double saturation_current = 0.0;  // I0 [A]
    double barrier_height_eV = 0.0;   // filled in by the caller when A, A* known
    double series_resistance = 0.0;   // Rs [ohm]
    double window_lo = 0.0;           // fit window [V]
    double window_hi = 0.0;
    double residual_rms = 0.0;        // rms residual of the log-linear fit
    std::size_t n_points = 0;
};

// Ideality factor and saturation current from the forward low-voltage
// region.  Fits ln(I / (1 - exp(-qV/kBT))) against V, which linearises the
// full thermionic law rather than only its exponential prefactor; the
// slope gives n = q/(kB T slope) and the intercept gives I0.
DiodeFitResult ideality_factor(const std::vector<double>& voltage,
                               const std::vector<double>& current,
                               double window_lo, double window_hi,
                               double temperature);

// Zero-bias barrier height (eV): (kB T / q) ln(A A* T^2 / I0).
double barrier_height(double saturation_current, double area_cm2,
                      double richardson_A_cm2K2, double temperature);

struct NordeResult {
    double series_resistance = 0.0;  // Rs [ohm]
    double barrier_height_eV = 0.0;
    double v_min = 0.0;              // voltage of the Norde-function minimum
    double f_min = 0.0;
    double i_min = 0.0;              // current at the minimum
    int gamma = 0;                   // smallest integer > n
    bool boundary_minimum = false;   // minimum sat at the last sample (Rs ~ 0)
};

// Norde-function series-resistance extraction generalised to arbitrary
// ideality: F(V) = V/gamma - (kB T/q) ln(I/(A A* T^2)), minimum located on
// the sampled grid, Rs = kB T (gamma - n)/(q I_min).
NordeResult norde_series_resistance(const std::vector<double>& voltage,
                                    const std::vector<double>& current,
                                    double ideality, double temperature,
                                    double area_cm2, double richardson_A_cm2K2);

struct SegmentFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t first = 0;  // inclusive index range in the sorted data
    std::size_t last = 0;
    std::string label;
};

struct TwoSegmentResult {
    SegmentFit low;   // low-x segment
    SegmentFit high;  // high-x segment
    double break_x = 0.0;
    bool degenerate = false;  // single power law; both segments agree
};

// Exhaustive-breakpoint two-segment linear least squares (>= 3 points per
// segment).
TwoSegmentResult two_segment_fit(const std::vector<double>& x,
                                 const std::vector<double>& y);

// Forward-bias ln I vs ln V transport regions with Ohmic/SCLC labels.
TwoSegmentResult transport_regions(const std::vector<double>& voltage,
                                   const std::vector<double>& current);

// Field-lowering coefficient sqrt(q^3/(b pi eps eps0)) in eV (m/V)^(1/2);
// b = 1 for Poole-Frenkel, 4 for Schottky.
double beta_theory(double eps_r, double b);

struct ReverseBetaResult {
    double beta_pf_theory = 0.0;  // eV (m/V)^(1/2)
    double beta_sc_theory = 0.0;
    TwoSegmentResult fit;          // ln|I_R| vs sqrt(E)
    double beta_low = 0.0;         // experimental, low-field region
    double beta_high = 0.0;        // experimental, high-field region
    std::string label_low;         // "poole-frenkel" or "schottky"
    std::string label_high;
};

// Reverse-branch conduction analysis: E = |V|/spacing, beta_exp = slope of
// ln|I_R| vs sqrt(E) times kB T / q, regions classified by the nearer
// theoretical beta.
ReverseBetaResult field_emission_beta(const std::vector<double>& voltage,
                                      const std::vector<double>& current,
                                      double eps_r, double spacing_m,
                                      double temperature);

struct FiguresOfMerit {
    double responsivity = 0.0;      // R [A/W]
    double detectivity = 0.0;       // D* [cm Hz^0.5 / W] (Jones)
    double eqe_percent = 0.0;       // external quantum efficiency [%]
    double noise_current = 0.0;     // I_N [A]
    double nep = 0.0;               // noise equivalent power [W]
    double j_ph = 0.0;              // photocurrent density [A/cm^2]
    double j_dark = 0.0;            // dark current density [A/cm^2]
    double power_w_cm2 = 0.0;
    double wavelength_m = 0.0;
    double area_cm2 = 0.0;
    bool detectivity_defined = true;  // false when J_dark == 0
};

FiguresOfMerit figures_of_merit(double j_ph_A_cm2, double j_dark_A_cm2,
                                double power_w_cm2, double wavelength_m,
                                double area_cm2);

struct TransientMetrics {
    double rise_time = 0.0;        // mean 10->90 % time over cycles
    double fall_time = 0.0;        // mean 90->10 % time
    double on_off_ratio = 0.0;     // mean of per-cycle plateau ratios
    double residual_off = 0.0;     // mean OFF-plateau current
    std::size_t n_cycles = 0;
};

// Rise/fall/ratio extraction from a square-wave photoresponse trace.
TransientMetrics transient_metrics(const std::vector<double>& time,
                                   const std::vector<double>& current);

struct BandGapResult {
    double e_g_eV = 0.0;
    double lambda_g_nm = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t n_points = 0;
};

// Absorption-spectrum-fitting band gap: linear fit of (Abs/lambda)^(1/2)
// against 1/lambda inside [window_lo_nm, window_hi_nm]; the x-intercept is
// 1/lambda_g and E_g = hc/lambda_g.
BandGapResult asf_band_gap(const std::vector<double>& lambda_nm,
                           const std::vector<double>& absorbance,
                           double window_lo_nm, double window_hi_nm);

} // namespace diodeq
