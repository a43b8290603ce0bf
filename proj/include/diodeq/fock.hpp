#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "diodeq/errors.hpp"

namespace diodeq {

using Cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

// Single-qumode state over photon numbers 0..cutoff-1, hbar = 2 convention
// (x = a + a^dag, p = i(a^dag - a), vacuum quadrature variance 1).
struct FockState {
    CVector amplitudes;
    int cutoff = 0;

    double norm2() const { return amplitudes.squaredNorm(); }

    nlohmann::json to_json() const;
    static FockState from_json(const nlohmann::json& j);
};

inline constexpr int kDefaultCutoff = 18;
inline constexpr double kDefaultLeakTolerance = 1e-6;

struct LadderOperators {
    CMatrix a;      // annihilation: a|n> = sqrt(n)|n-1>
    CMatrix a_dag;  // creation, truncated at cutoff-1
    CMatrix n;      // number operator
    CMatrix x;      // a + a^dag
    CMatrix p;      // i(a^dag - a)
};

LadderOperators ladder_matrices(int cutoff);

// Matrix exponential by scaling-and-squaring with a Taylor series,
// truncated below 1e-12 of the running sum.
CMatrix expm(const CMatrix& A);

FockState vacuum_state(int cutoff = kDefaultCutoff);

// Gate matrices as compressions of the infinite-dimensional unitaries:
// the generator is exponentiated at a padded internal cutoff and the
// top-left cutoff x cutoff block is kept, so states lose exactly the mass
// that truncation pushes above the cutoff.
CMatrix displacement_matrix(int cutoff, Cplx alpha);
CMatrix squeezing_matrix(int cutoff, Cplx z);   // z = r e^{i theta}
CMatrix rotation_matrix(int cutoff, double phi);
CMatrix kerr_matrix(int cutoff, double kappa);
CMatrix cubic_matrix(int cutoff, double gamma);

// Gate application; throws TruncationError when the relative norm leak of
// this application exceeds leak_tolerance. leak_out (optional) receives
// 1 - |state'|^2.
FockState apply_displacement(const FockState& state, Cplx alpha,
                             double leak_tolerance = kDefaultLeakTolerance,
                             double* leak_out = nullptr);
FockState apply_squeezing(const FockState& state, Cplx z,
                          double leak_tolerance = kDefaultLeakTolerance,
                          double* leak_out = nullptr);
FockState apply_rotation(const FockState& state, double phi);
FockState apply_kerr(const FockState& state, double kappa);
FockState apply_cubic(const FockState& state, double gamma,
                      double leak_tolerance = kDefaultLeakTolerance,
                      double* leak_out = nullptr);

// D(alpha) S(z) |0>.
FockState prepare_displaced_squeezed(Cplx alpha, Cplx z, int cutoff = kDefaultCutoff,
                                     double leak_tolerance = kDefaultLeakTolerance);

// Explicit renormalization; returns the leak that was removed.
double renormalize(FockState& state);

enum class Observable { X, P, N, Identity };

// <psi|O|psi>; no renormalization (Identity returns the state's norm^2).
double expectation(const FockState& state, Observable obs);

// Displaced-parity Wigner function on the grid {xs} x {ps}; row i column j
// holds W(xs[i], ps[j]). Normalized so the phase-space integral is 1 for a
// normalized state.
Eigen::MatrixXd wigner(const FockState& state, const std::vector<double>& xs,
                       const std::vector<double>& ps);

struct DisplacedSqueezedParams {
    Cplx alpha{0.0, 0.0};
    Cplx z{0.0, 0.0};  // r e^{i theta}, r >= 0
};

// Closed-form overlap <a|b> of two displaced squeezed states. The
// squeezing arguments map to the bounded convention z -> e^{i theta}
// tanh(r) internally (validated against the truncated inner product).
Cplx overlap_analytic(const DisplacedSqueezedParams& a, const DisplacedSqueezedParams& b);

// sqrt(2 (1 - |<a|b>|^2)).
double kernel_distance(const DisplacedSqueezedParams& a, const DisplacedSqueezedParams& b);

} // namespace diodeq
