#include "diodeq/fock.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace diodeq {

namespace {

void require_cutoff(int cutoff) {
    if (cutoff < 2)
        throw DomainError("Fock cutoff must be at least 2");
}

CMatrix annihilation(int dim) {
    CMatrix a = CMatrix::Zero(dim, dim);
    for (int n = 1; n < dim; ++n)
        a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
}

// Padded internal cutoff for compressing a gate generated with parameters
// of displacement magnitude `amp` and squeeze magnitude `sq`. Generous:
// gates here are small matrices.
int padded_dim(int cutoff, double amp, double sq) {
    const double extra = 2.0 * amp * amp + 8.0 * amp + 14.0 * sq;
    return cutoff + 32 + static_cast<int>(std::ceil(extra));
}

// Spectral basis of a Hermitian generator H: exp(i t H) = V e^{i t lam} V^H.
struct SpectralBasis {
    CMatrix V;
    Eigen::VectorXd lam;

    CMatrix evolve(double t) const {
        const CVector phase =
            (Cplx(0.0, 1.0) * t * lam.cast<Cplx>().array()).exp().matrix();
        return V * phase.asDiagonal() * V.adjoint();
    }

    // top-left `rows` x `cols` block of evolve(t), cheaper than the full product
    CMatrix evolve_block(double t, int rows, int cols) const {
        const CVector phase =
            (Cplx(0.0, 1.0) * t * lam.cast<Cplx>().array()).exp().matrix();
        return V.topRows(rows) * phase.asDiagonal() * V.adjoint().leftCols(cols);
    }
};

SpectralBasis diagonalize_hermitian(const CMatrix& H) {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(H);
    if (solver.info() != Eigen::Success)
        throw Error("Hermitian eigendecomposition failed");
    return SpectralBasis{solver.eigenvectors(), solver.eigenvalues()};
}

// Cached displacement-direction and squeeze-direction bases per dimension.
// A = a^dag - a generates D(d) = exp(d A); B = (a^2 - a^dag^2)/2 generates
// S(r) = exp(r B). Both are anti-Hermitian, so iH with H Hermitian.
struct DirectionBases {
    SpectralBasis disp;   // H = -i (a^dag - a)
    SpectralBasis sqz;    // H = -i (a^2 - a^dag^2)/2
};

const DirectionBases& direction_bases(int dim) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<DirectionBases>> cache;
    std::scoped_lock lock(mu);
    auto it = cache.find(dim);
    if (it == cache.end()) {
        const CMatrix a = annihilation(dim);
        const CMatrix ad = a.adjoint();
        const Cplx mi(0.0, -1.0);
        auto bases = std::make_unique<DirectionBases>();
        bases->disp = diagonalize_hermitian(mi * (ad - a));
        bases->sqz = diagonalize_hermitian(mi * 0.5 * (a * a - ad * ad));
        it = cache.emplace(dim, std::move(bases)).first;
    }
    return *it->second;
}

CVector rotation_phases(int dim, double phi) {
    CVector d(dim);
    for (int n = 0; n < dim; ++n)
        d(n) = std::exp(Cplx(0.0, phi * n));
    return d;
}

FockState apply_matrix(const FockState& state, const CMatrix& gate, const char* name,
                       double leak_tolerance, double* leak_out) {
    if (gate.cols() != state.amplitudes.size())
        throw DimensionError("gate/state cutoff mismatch");
    FockState out;
    out.cutoff = state.cutoff;
    out.amplitudes = gate * state.amplitudes;
    const double before = state.norm2();
    const double after = out.norm2();
    if (leak_out) *leak_out = 1.0 - after;
    if (before > 0.0) {
        const double rel_leak = (before - after) / before;
        if (rel_leak > leak_tolerance)
            throw TruncationError(std::string(name) + " exceeded the leak tolerance", rel_leak);
    }
    return out;
}

} // namespace

nlohmann::json FockState::to_json() const {
    nlohmann::json j;
    j["cutoff"] = cutoff;
    nlohmann::json amps = nlohmann::json::array();
    for (Eigen::Index i = 0; i < amplitudes.size(); ++i)
        amps.push_back({amplitudes(i).real(), amplitudes(i).imag()});
    j["amplitudes"] = amps;
    return j;
}

FockState FockState::from_json(const nlohmann::json& j) {
    FockState s;
    s.cutoff = j.at("cutoff").get<int>();
    const auto& amps = j.at("amplitudes");
    if (static_cast<int>(amps.size()) != s.cutoff)
        throw SchemaError("state amplitude count does not match the cutoff tag");
    s.amplitudes.resize(s.cutoff);
    for (int i = 0; i < s.cutoff; ++i)
        s.amplitudes(i) = Cplx(amps[i][0].get<double>(), amps[i][1].get<double>());
    return s;
}

LadderOperators ladder_matrices(int cutoff) {
    require_cutoff(cutoff);
    LadderOperators ops;
    ops.a = annihilation(cutoff);
    ops.a_dag = ops.a.adjoint();
    ops.n = ops.a_dag * ops.a;
    ops.x = ops.a + ops.a_dag;
    ops.p = Cplx(0.0, 1.0) * (ops.a_dag - ops.a);
    return ops;
}

CMatrix expm(const CMatrix& A) {
    if (A.rows() != A.cols())
        throw DimensionError("expm of a non-square matrix");
    const double norm = A.cwiseAbs().rowwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5)
        squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const CMatrix X = A / std::pow(2.0, squarings);

    CMatrix result = CMatrix::Identity(A.rows(), A.cols());
    CMatrix term = result;
    for (int k = 1; k <= 64; ++k) {
        term = (term * X) / static_cast<double>(k);
        result += term;
        const double t = term.cwiseAbs().rowwise().sum().maxCoeff();
        const double r = result.cwiseAbs().rowwise().sum().maxCoeff();
        if (t <= 1e-16 * r) break;
    }
    for (int s = 0; s < squarings; ++s)
        result = result * result;
    return result;
}

FockState vacuum_state(int cutoff) {
    require_cutoff(cutoff);
    FockState s;
    s.cutoff = cutoff;
    s.amplitudes = CVector::Zero(cutoff);
    s.amplitudes(0) = 1.0;
    return s;
}

CMatrix displacement_matrix(int cutoff, Cplx alpha) {
    require_cutoff(cutoff);
    const double amp = std::abs(alpha);
    if (amp == 0.0) return CMatrix::Identity(cutoff, cutoff);
    const int dim = padded_dim(cutoff, amp, 0.0);
    const CMatrix a = annihilation(dim);
    const CMatrix gen = alpha * a.adjoint() - std::conj(alpha) * a;
    return expm(gen).topLeftCorner(cutoff, cutoff);
}

CMatrix squeezing_matrix(int cutoff, Cplx z) {
    require_cutoff(cutoff);
    const double r = std::abs(z);
    if (r == 0.0) return CMatrix::Identity(cutoff, cutoff);
    const int dim = padded_dim(cutoff, 0.0, r);
    const CMatrix a = annihilation(dim);
    const CMatrix ad = a.adjoint();
    const CMatrix gen = 0.5 * (std::conj(z) * a * a - z * ad * ad);
    return expm(gen).topLeftCorner(cutoff, cutoff);
}

CMatrix rotation_matrix(int cutoff, double phi) {
    require_cutoff(cutoff);
    return rotation_phases(cutoff, phi).asDiagonal();
}

CMatrix kerr_matrix(int cutoff, double kappa) {
    require_cutoff(cutoff);
    CVector d(cutoff);
    for (int n = 0; n < cutoff; ++n)
        d(n) = std::exp(Cplx(0.0, kappa * static_cast<double>(n) * n));
    return d.asDiagonal();
}

CMatrix cubic_matrix(int cutoff, double gamma) {
    require_cutoff(cutoff);
    if (gamma == 0.0) return CMatrix::Identity(cutoff, cutoff);
    const int dim = padded_dim(cutoff, std::abs(gamma), std::abs(gamma)) + 16;
    const CMatrix a = annihilation(dim);
    const CMatrix x = a + a.adjoint();
    const CMatrix gen = Cplx(0.0, gamma / 6.0) * x * x * x;
    return expm(gen).topLeftCorner(cutoff, cutoff);
}

FockState apply_displacement(const FockState& state, Cplx alpha, double leak_tolerance,
                             double* leak_out) {
    return apply_matrix(state, displacement_matrix(state.cutoff, alpha), "displacement",
                        leak_tolerance, leak_out);
}

FockState apply_squeezing(const FockState& state, Cplx z, double leak_tolerance,
                          double* leak_out) {
    return apply_matrix(state, squeezing_matrix(state.cutoff, z), "squeezing",
                        leak_tolerance, leak_out);
}

FockState apply_rotation(const FockState& state, double phi) {
    FockState out = state;
    const CVector ph = rotation_phases(state.cutoff, phi);
    out.amplitudes = ph.cwiseProduct(state.amplitudes);
    return out;
}

FockState apply_kerr(const FockState& state, double kappa) {
    FockState out = state;
    for (int n = 0; n < state.cutoff; ++n)
        out.amplitudes(n) *= std::exp(Cplx(0.0, kappa * static_cast<double>(n) * n));
    return out;
}

FockState apply_cubic(const FockState& state, double gamma, double leak_tolerance,
                      double* leak_out) {
    return apply_matrix(state, cubic_matrix(state.cutoff, gamma), "cubic phase",
                        leak_tolerance, leak_out);
}

FockState prepare_displaced_squeezed(Cplx alpha, Cplx z, int cutoff, double leak_tolerance) {
    FockState s = vacuum_state(cutoff);
    s = apply_squeezing(s, z, leak_tolerance);
    s = apply_displacement(s, alpha, leak_tolerance);
    return s;
}

double renormalize(FockState& state) {
    const double n2 = state.norm2();
    if (!(n2 > 0.0))
        throw DegenerateError("renormalizing a zero state");
    state.amplitudes /= std::sqrt(n2);
    return 1.0 - n2;
}

double expectation(const FockState& state, Observable obs) {
    const auto& psi = state.amplitudes;
    switch (obs) {
        case Observable::Identity:
            return state.norm2();
        case Observable::N: {
            double acc = 0.0;
            for (int n = 0; n < state.cutoff; ++n)
                acc += n * std::norm(psi(n));
            return acc;
        }
        case Observable::X: {
            // <x> = 2 Re sum_n conj(c_n) sqrt(n+1) c_{n+1}
            Cplx acc = 0.0;
            for (int n = 0; n + 1 < state.cutoff; ++n)
                acc += std::conj(psi(n)) * std::sqrt(n + 1.0) * psi(n + 1);
            return 2.0 * acc.real();
        }
        case Observable::P: {
            Cplx acc = 0.0;
            for (int n = 0; n + 1 < state.cutoff; ++n)
                acc += std::conj(psi(n)) * std::sqrt(n + 1.0) * psi(n + 1);
            return 2.0 * acc.imag();
        }
    }
    throw DomainError("unknown observable");
}

Eigen::MatrixXd wigner(const FockState& state, const std::vector<double>& xs,
                       const std::vector<double>& ps) {
    for (double v : xs)
        if (!std::isfinite(v)) throw DomainError("non-finite Wigner grid point");
    for (double v : ps)
        if (!std::isfinite(v)) throw DomainError("non-finite Wigner grid point");

    double r_max = 0.0;
    for (double x : xs)
        for (double p : ps)
            r_max = std::max(r_max, 0.5 * std::hypot(x, p));

    const int dim = state.cutoff + 16 +
                    static_cast<int>(std::ceil(r_max * r_max + 5.0 * r_max));
    const SpectralBasis& basis = direction_bases(dim).disp;

    CVector psi = CVector::Zero(dim);
    psi.head(state.cutoff) = state.amplitudes;

    Eigen::VectorXd parity(dim);
    for (int n = 0; n < dim; ++n)
        parity(n) = (n % 2 == 0) ? 1.0 : -1.0;

    Eigen::MatrixXd W(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(ps.size()));
    const double norm_const = 1.0 / (2.0 * std::numbers::pi);

    CVector rotated(dim), evolved(dim);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = 0; j < ps.size(); ++j) {
            const Cplx beta = 0.5 * Cplx(xs[i], ps[j]);
            const double r = std::abs(beta);
            if (r == 0.0) {
                evolved = psi;
            } else {
                // D(-beta) = R(phi) exp(r (a^dag - a)) R(-phi), phi = arg(-beta);
                // the leading R(phi) cannot change |amplitudes|, so skip it.
                const double phi = std::arg(-beta);
                for (int n = 0; n < dim; ++n)
                    rotated(n) = std::exp(Cplx(0.0, -phi * n)) * psi(n);
                const CVector phase =
                    (Cplx(0.0, 1.0) * r * basis.lam.cast<Cplx>().array()).exp().matrix();
                evolved = basis.V * phase.cwiseProduct(basis.V.adjoint() * rotated);
            }
            double acc = 0.0;
            for (int n = 0; n < dim; ++n)
                acc += parity(n) * std::norm(evolved(n));
            W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = norm_const * acc;
        }
    }
    return W;
}

Cplx overlap_analytic(const DisplacedSqueezedParams& a, const DisplacedSqueezedParams& b) {
    // bounded squeeze convention
    auto map_z = [](Cplx z) {
        const double r = std::abs(z);
        if (r == 0.0) return Cplx(0.0, 0.0);
        return std::tanh(r) * (z / r);
    };
    const Cplx z1 = map_z(a.z);
    const Cplx z2 = map_z(b.z);
    if (std::abs(z1) >= 1.0 || std::abs(z2) >= 1.0)
        throw DomainError("squeeze argument outside the |z| < 1 overlap convention");

    const Cplx a1 = a.alpha, a2 = b.alpha;
    const Cplx one(1.0, 0.0);
    const Cplx denom = one - z2 * std::conj(z1);
    const Cplx pref = std::pow(((one - std::norm(z2)) * (one - std::norm(z1))) / (denom * denom),
                               0.25);
    const Cplx c = -one / (2.0 * denom);
    const Cplx t1 = (a2 + z2 * std::conj(a2)) * (std::conj(a2) + std::conj(z1) * a2);
    const Cplx t2 = -2.0 * (a2 + z2 * std::conj(a2)) * (std::conj(a1) + std::conj(z1) * a1);
    const Cplx t3 = (a1 + z2 * std::conj(a1)) * (std::conj(a1) + std::conj(z1) * a1);
    return pref * std::exp(c * (t1 + t2 + t3));
}

double kernel_distance(const DisplacedSqueezedParams& a, const DisplacedSqueezedParams& b) {
    const double o2 = std::norm(overlap_analytic(a, b));
    return std::sqrt(std::max(0.0, 2.0 * (1.0 - o2)));
}

} // namespace diodeq
