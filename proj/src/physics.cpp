#include "diodeq/physics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace diodeq {

namespace {

using constants::k_B;
using constants::q;

// I(u) for junction voltage u, written as a difference of two exponentials
// so the reverse branch does not evaluate 0 * inf.
double junction_current(double u, double ideality, double i0, double vt) {
    const double a = u / (ideality * vt);
    const double b = a - u / vt;
    return i0 * (std::exp(a) - std::exp(b));
}

double junction_conductance(double u, double ideality, double i0, double vt) {
    const double a = u / (ideality * vt);
    const double b = a - u / vt;
    return i0 / (ideality * vt) * (std::exp(a) + (ideality - 1.0) * std::exp(b));
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual_rms = 0.0;
};

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y,
                   std::size_t first, std::size_t last) {
    const double n = static_cast<double>(last - first + 1);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = first; i <= last; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    if (std::abs(det) < 1e-300)
        throw DegenerateError("degenerate linear fit (constant abscissa)");
    LinearFit f;
    f.slope = (n * sxy - sx * sy) / det;
    f.intercept = (sy - f.slope * sx) / n;
    double ss = 0;
    for (std::size_t i = first; i <= last; ++i) {
        const double r = y[i] - (f.slope * x[i] + f.intercept);
        ss += r * r;
    }
    f.residual_rms = std::sqrt(ss / n);
    return f;
}

double segment_sse(const std::vector<double>& x, const std::vector<double>& y,
                   std::size_t first, std::size_t last) {
    const LinearFit f = fit_line(x, y, first, last);
    const double n = static_cast<double>(last - first + 1);
    return f.residual_rms * f.residual_rms * n;
}

} // namespace

double thermionic_current(double voltage, double ideality, double saturation_current,
                          double series_resistance, double temperature) {
    if (!(ideality >= 1.0)) throw DomainError("ideality must be >= 1");
    if (!(saturation_current > 0.0)) throw DomainError("saturation current must be positive");
    if (series_resistance < 0.0) throw DomainError("series resistance must be non-negative");
    if (!(temperature > 0.0)) throw DomainError("temperature must be positive");

    const double vt = k_B * temperature / q;
    if (voltage == 0.0) return 0.0;
    if (series_resistance == 0.0)
        return junction_current(voltage, ideality, saturation_current, vt);

    // At the solution the junction drop u = V - I Rs lies between 0 and V,
    // so I is bracketed by 0, I(V) and V/Rs.
    const double iv = junction_current(voltage, ideality, saturation_current, vt);
    double lo, hi;
    if (voltage > 0.0) {
        lo = 0.0;
        hi = std::min(iv, voltage / series_resistance);
    } else {
        lo = std::max(iv, voltage / series_resistance);
        hi = 0.0;
    }

    auto residual = [&](double i) {
        return i - junction_current(voltage - i * series_resistance, ideality,
                                    saturation_current, vt);
    };

    double i = 0.5 * (lo + hi);
    const double tol_scale = std::max(std::abs(hi), std::max(std::abs(lo), saturation_current));
    for (int iter = 0; iter < 100; ++iter) {
        const double g = residual(i);
        if (std::abs(g) <= 1e-15 * std::max(std::abs(i), saturation_current))
            return i;
        if (g > 0.0) hi = i; else lo = i;
        const double u = voltage - i * series_resistance;
        const double gp = 1.0 + series_resistance *
                                    junction_conductance(u, ideality, saturation_current, vt);
        double next = i - g / gp;
        if (!(next > lo) || !(next < hi))
            next = 0.5 * (lo + hi);
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * tol_scale)
            return 0.5 * (lo + hi);
        i = next;
    }
    throw ConvergenceError("thermionic current solve did not converge at V = " +
                               std::to_string(voltage),
                           voltage);
}

DiodeFitResult ideality_factor(const std::vector<double>& voltage,
                               const std::vector<double>& current,
                               double window_lo, double window_hi,
                               double temperature) {
    if (voltage.size() != current.size())
        throw DimensionError("voltage/current length mismatch");
    if (!(window_hi > window_lo))
        throw DomainError("ideality window must satisfy hi > lo");
    const double vt = k_B * temperature / q;

    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < voltage.size(); ++i) {
        const double v = voltage[i];
        const double c = current[i];
        if (v < window_lo || v > window_hi || v <= 0.0) continue;
        if (!(c > 0.0))
            throw DomainError("non-positive current inside the ideality window at V = " +
                              std::to_string(v));
        xs.push_back(v);
        ys.push_back(std::log(c / (1.0 - std::exp(-v / vt))));
    }
    if (xs.size() < 3)
        throw WindowError("ideality window holds fewer than 3 usable samples");

    const LinearFit f = fit_line(xs, ys, 0, xs.size() - 1);
    if (!(f.slope > 0.0))
        throw DegenerateError("non-positive forward-bias slope");
    DiodeFitResult r;
    r.ideality = 1.0 / (vt * f.slope);
    r.saturation_current = std::exp(f.intercept);
    r.window_lo = window_lo;
    r.window_hi = window_hi;
    r.residual_rms = f.residual_rms;
    r.n_points = xs.size();
    return r;
}

double barrier_height(double saturation_current, double area_cm2,
                      double richardson_A_cm2K2, double temperature) {
    if (!(saturation_current > 0.0) || !(area_cm2 > 0.0) ||
        !(richardson_A_cm2K2 > 0.0) || !(temperature > 0.0))
        throw DomainError("barrier height needs positive I0, A, A*, T");
    const double vt = k_B * temperature / q;
    return vt * std::log(area_cm2 * richardson_A_cm2K2 * temperature * temperature /
                         saturation_current);
}

NordeResult norde_series_resistance(const std::vector<double>& voltage,
                                    const std::vector<double>& current,
                                    double ideality, double temperature,
                                    double area_cm2, double richardson_A_cm2K2) {
    if (voltage.size() != current.size())
        throw DimensionError("voltage/current length mismatch");
    if (!(ideality >= 1.0))
        throw DomainError("ideality must be >= 1");
    const double vt = k_B * temperature / q;
    const int gamma = static_cast<int>(std::floor(ideality)) + 1;

    std::vector<double> v, f;
    const double aat2 = area_cm2 * richardson_A_cm2K2 * temperature * temperature;
    std::vector<double> i_kept;
    for (std::size_t i = 0; i < voltage.size(); ++i) {
        if (!(voltage[i] > 0.0) || !(current[i] > 0.0)) continue;
        v.push_back(voltage[i]);
        i_kept.push_back(current[i]);
        f.push_back(voltage[i] / gamma - vt * std::log(current[i] / aat2));
    }
    if (v.size() < 3)
        throw WindowError("Norde extraction needs >= 3 forward samples with I > 0");

    // sort by voltage
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

    std::size_t arg = 0;
    for (std::size_t k = 1; k < order.size(); ++k)
        if (f[order[k]] < f[order[arg]]) arg = k;
    if (arg == 0)
        throw WindowError("Norde function has no interior minimum in the supplied window");

    NordeResult r;
    r.gamma = gamma;
    r.boundary_minimum = (arg == order.size() - 1);
    const std::size_t idx = order[arg];
    r.v_min = v[idx];
    r.f_min = f[idx];
    r.i_min = i_kept[idx];
    r.series_resistance = vt * (gamma - ideality) / r.i_min;
    // From F(V) = phi + V(1/gamma - 1/n) + I Rs / n and the minimum
    // condition q Rs I_min = (gamma - n) kB T:
    r.barrier_height_eV =
        r.f_min + r.v_min * (1.0 / ideality - 1.0 / gamma) - vt * (gamma - ideality) / ideality;
    return r;
}

TwoSegmentResult two_segment_fit(const std::vector<double>& x,
                                 const std::vector<double>& y) {
    if (x.size() != y.size())
        throw DimensionError("x/y length mismatch");
    const std::size_t n = x.size();
    if (n < 6)
        throw WindowError("two-segment fit needs >= 3 points per segment");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = x[order[i]];
        ys[i] = y[order[i]];
    }

    double best = std::numeric_limits<double>::infinity();
    std::size_t best_split = 0;  // last index of the low segment
    for (std::size_t split = 2; split + 3 <= n; ++split) {
        const double sse = segment_sse(xs, ys, 0, split) + segment_sse(xs, ys, split + 1, n - 1);
        if (sse < best) {
            best = sse;
            best_split = split;
        }
    }

    TwoSegmentResult r;
    const LinearFit lo = fit_line(xs, ys, 0, best_split);
    const LinearFit hi = fit_line(xs, ys, best_split + 1, n - 1);
    r.low = SegmentFit{lo.slope, lo.intercept, 0, best_split, ""};
    r.high = SegmentFit{hi.slope, hi.intercept, best_split + 1, n - 1, ""};
    r.break_x = 0.5 * (xs[best_split] + xs[best_split + 1]);

    const double single = segment_sse(xs, ys, 0, n - 1);
    const double y_scale = std::max(std::abs(ys.front()), std::abs(ys.back())) + 1e-30;
    if (std::abs(lo.slope - hi.slope) < 1e-6 ||
        single - best <= 1e-12 * y_scale * y_scale * static_cast<double>(n)) {
        r.degenerate = true;
    }
    return r;
}

namespace {

std::string slope_label(double slope) {
    if (slope > 2.0) return "SCLC";
    if (std::abs(slope - 1.0) <= 0.5) return "ohmic";
    return "intermediate";
}

} // namespace

TwoSegmentResult transport_regions(const std::vector<double>& voltage,
                                   const std::vector<double>& current) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < voltage.size(); ++i) {
        if (voltage[i] > 0.0 && current[i] > 0.0) {
            lx.push_back(std::log(voltage[i]));
            ly.push_back(std::log(current[i]));
        }
    }
    TwoSegmentResult r = two_segment_fit(lx, ly);
    r.low.label = slope_label(r.low.slope);
    r.high.label = slope_label(r.high.slope);
    return r;
}

double beta_theory(double eps_r, double b) {
    if (!(eps_r > 0.0) || !(b > 0.0))
        throw DomainError("beta_theory needs positive eps and b");
    const double beta_J =
        std::sqrt(q * q * q / (b * std::numbers::pi * eps_r * constants::eps0));
    return beta_J / q;  // J (m/V)^0.5 -> eV (m/V)^0.5
}

ReverseBetaResult field_emission_beta(const std::vector<double>& voltage,
                                      const std::vector<double>& current,
                                      double eps_r, double spacing_m,
                                      double temperature) {
    if (!(spacing_m > 0.0))
        throw DomainError("electrode spacing must be positive");
    const double vt = k_B * temperature / q;

    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < voltage.size(); ++i) {
        if (voltage[i] < 0.0 && current[i] != 0.0) {
            const double field = -voltage[i] / spacing_m;
            xs.push_back(std::sqrt(field));
            ys.push_back(std::log(std::abs(current[i])));
        }
    }

    ReverseBetaResult r;
    r.beta_pf_theory = beta_theory(eps_r, 1.0);
    r.beta_sc_theory = beta_theory(eps_r, 4.0);
    r.fit = two_segment_fit(xs, ys);
    r.beta_low = r.fit.low.slope * vt;
    r.beta_high = r.fit.high.slope * vt;
    auto classify = [&](double beta) {
        return std::abs(beta - r.beta_pf_theory) <= std::abs(beta - r.beta_sc_theory)
                   ? std::string("poole-frenkel")
                   : std::string("schottky");
    };
    r.label_low = classify(r.beta_low);
    r.label_high = classify(r.beta_high);
    r.fit.low.label = r.label_low;
    r.fit.high.label = r.label_high;
    return r;
}

FiguresOfMerit figures_of_merit(double j_ph_A_cm2, double j_dark_A_cm2,
                                double power_w_cm2, double wavelength_m,
                                double area_cm2) {
    if (!(power_w_cm2 > 0.0))
        throw DomainError("incident power must be positive");
    if (j_dark_A_cm2 < 0.0)
        throw DomainError("dark current density must be non-negative");
    if (!(wavelength_m > 0.0) || !(area_cm2 > 0.0))
        throw DomainError("wavelength and area must be positive");

    FiguresOfMerit m;
    m.j_ph = j_ph_A_cm2;
    m.j_dark = j_dark_A_cm2;
    m.power_w_cm2 = power_w_cm2;
    m.wavelength_m = wavelength_m;
    m.area_cm2 = area_cm2;
    m.responsivity = j_ph_A_cm2 / power_w_cm2;
    m.eqe_percent = constants::h * constants::c / (wavelength_m * q) * m.responsivity * 100.0;
    if (j_dark_A_cm2 > 0.0) {
        m.detectivity = m.responsivity / std::sqrt(2.0 * q * j_dark_A_cm2);
        m.noise_current = m.responsivity * std::sqrt(area_cm2) / m.detectivity;
        m.nep = m.noise_current / m.responsivity;
    } else {
        m.detectivity_defined = false;
        m.detectivity = 0.0;
        m.noise_current = 0.0;
        m.nep = 0.0;
    }
    return m;
}

TransientMetrics transient_metrics(const std::vector<double>& time,
                                   const std::vector<double>& current) {
    if (time.size() != current.size())
        throw DimensionError("time/current length mismatch");
    if (time.size() < 4)
        throw WindowError("transient trace too short");

    const double lo = *std::min_element(current.begin(), current.end());
    const double hi = *std::max_element(current.begin(), current.end());
    if (!(hi > lo))
        throw WindowError("flat transient trace, no cycles found");
    const double mid = 0.5 * (lo + hi);

    // mid-level crossing indices (sample after the crossing)
    std::vector<std::size_t> rises, falls;
    for (std::size_t k = 0; k + 1 < current.size(); ++k) {
        if (current[k] < mid && current[k + 1] >= mid) rises.push_back(k + 1);
        if (current[k] >= mid && current[k + 1] < mid) falls.push_back(k + 1);
    }
    if (rises.empty() || falls.empty())
        throw WindowError("no ON/OFF cycles found in transient trace");

    auto plateau_mean = [&](std::size_t first, std::size_t last) {
        // middle half of the segment, robust to the transition tails
        const std::size_t len = last - first;
        const std::size_t a = first + len / 4;
        const std::size_t b = last - len / 4;
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t k = a; k <= b && k < current.size(); ++k, ++n) s += current[k];
        return s / static_cast<double>(std::max<std::size_t>(n, 1));
    };

    // interpolated crossing time of `level` scanning from index k0 in direction dir
    auto cross_time = [&](std::size_t k0, int dir, double level) -> double {
        std::size_t k = k0;
        while (true) {
            const std::size_t kn = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(k) + dir);
            if (kn >= current.size()) return time[k];
            const double c0 = current[k], c1 = current[kn];
            if ((c0 - level) * (c1 - level) <= 0.0 && c0 != c1) {
                const double f = (level - c0) / (c1 - c0);
                return time[k] + f * (time[kn] - time[k]);
            }
            k = kn;
            if (k == 0 || k == current.size() - 1) return time[k];
        }
    };

    auto prev_in = [](const std::vector<std::size_t>& v, std::size_t k) {
        auto it = std::lower_bound(v.begin(), v.end(), k);
        return it == v.begin() ? std::optional<std::size_t>{}
                               : std::optional<std::size_t>{*std::prev(it)};
    };
    auto next_in = [](const std::vector<std::size_t>& v, std::size_t k) {
        auto it = std::upper_bound(v.begin(), v.end(), k);
        return it == v.end() ? std::optional<std::size_t>{} : std::optional<std::size_t>{*it};
    };

    double rise_sum = 0.0, fall_sum = 0.0, ratio_sum = 0.0, off_sum = 0.0;
    std::size_t n_rise = 0, n_fall = 0, n_cycles = 0;

    // rise timing needs a complete OFF plateau before and ON plateau after
    for (std::size_t r : rises) {
        const auto pf = prev_in(falls, r);
        const auto nf = next_in(falls, r);
        if (!pf || !nf) continue;
        const double off_level = plateau_mean(*pf, r - 1);
        const double on_level = plateau_mean(r, *nf - 1);
        const double span = on_level - off_level;
        if (!(span > 0.0)) continue;
        const double t10 = cross_time(r, -1, off_level + 0.1 * span);
        const double t90 = cross_time(r - 1, +1, off_level + 0.9 * span);
        if (t90 > t10) {
            rise_sum += t90 - t10;
            ++n_rise;
        }
    }

    // fall timing and per-cycle ON/OFF ratio: ON plateau before the fall,
    // OFF plateau bounded by the next rise
    for (std::size_t f : falls) {
        const auto pr = prev_in(rises, f);
        const auto nr = next_in(rises, f);
        if (!pr || !nr) continue;
        const double on_level = plateau_mean(*pr, f - 1);
        const double off_level = plateau_mean(f, *nr - 1);
        const double span = on_level - off_level;
        if (!(span > 0.0)) continue;
        const double tf90 = cross_time(f, -1, off_level + 0.9 * span);
        const double tf10 = cross_time(f - 1, +1, off_level + 0.1 * span);
        if (tf10 > tf90) {
            fall_sum += tf10 - tf90;
            ++n_fall;
        }
        if (off_level != 0.0) ratio_sum += on_level / off_level;
        off_sum += off_level;
        ++n_cycles;
    }

    if (n_rise == 0 && n_fall == 0)
        throw WindowError("no complete ON/OFF cycles found in transient trace");

    TransientMetrics m;
    m.n_cycles = std::max(n_cycles, std::max(n_rise, n_fall));
    m.rise_time = n_rise ? rise_sum / static_cast<double>(n_rise) : 0.0;
    m.fall_time = n_fall ? fall_sum / static_cast<double>(n_fall) : 0.0;
    m.on_off_ratio = n_cycles ? ratio_sum / static_cast<double>(n_cycles) : 0.0;
    m.residual_off = n_cycles ? off_sum / static_cast<double>(n_cycles) : 0.0;
    return m;
}

BandGapResult asf_band_gap(const std::vector<double>& lambda_nm,
                           const std::vector<double>& absorbance,
                           double window_lo_nm, double window_hi_nm) {
    if (lambda_nm.size() != absorbance.size())
        throw DimensionError("lambda/absorbance length mismatch");
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < lambda_nm.size(); ++i) {
        if (lambda_nm[i] < window_lo_nm || lambda_nm[i] > window_hi_nm) continue;
        if (!(absorbance[i] > 0.0) || !(lambda_nm[i] > 0.0)) continue;
        xs.push_back(1.0 / lambda_nm[i]);
        ys.push_back(std::sqrt(absorbance[i] / lambda_nm[i]));
    }
    if (xs.size() < 3)
        throw WindowError("ASF window holds fewer than 3 usable points");
    const LinearFit f = fit_line(xs, ys, 0, xs.size() - 1);
    if (f.slope == 0.0)
        throw DegenerateError("zero-slope ASF fit, no band edge in window");
    const double x0 = -f.intercept / f.slope;  // 1/lambda_g
    if (!(x0 > 0.0))
        throw DomainError("ASF extrapolation yields a non-positive 1/lambda intercept");
    BandGapResult r;
    r.lambda_g_nm = 1.0 / x0;
    r.e_g_eV = constants::hc_eV_nm / r.lambda_g_nm;
    r.slope = f.slope;
    r.intercept = f.intercept;
    r.n_points = xs.size();
    return r;
}

} // namespace diodeq
