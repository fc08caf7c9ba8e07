#pragma once

// Continuous-variable ancilla that records work: Gaussian motional packets,
// state-dependent momentum kicks, ballistic free fall, and the smeared
// momentum-outcome density including the coherence cross terms.
//
// SI units throughout (m, s, kg, kg m/s). System energies stay dimensionless
// (units of E); the coupling lambda converts them to momentum.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <vector>

#include "qwm/errors.hpp"
#include "qwm/quantum_core.hpp"
#include "qwm/work_distribution.hpp"

namespace qwm {

namespace constants {
inline constexpr double hbar = 1.054571817e-34;       // J s
inline constexpr double bohr_magneton = 9.2740100783e-24; // J/T
inline constexpr double rb87_mass = 1.443160648e-25;  // kg
inline constexpr double standard_gravity = 9.81;      // m/s^2
} // namespace constants

/// Minimum-uncertainty Gaussian motional state.
///
/// `sigma` is the parameter of the momentum window f(p) = sigma/(hbar sqrt(pi))
/// exp(-sigma^2 (p - p0)^2 / hbar^2); the initial position standard deviation is
/// sigma/sqrt(2). `elapsed` counts free-evolution time, which sets the spreading.
struct GaussianWavepacket {
    double position = 0.0;
    double momentum = 0.0;
    double sigma = 1e-6;
    double mass = constants::rb87_mass;
    double elapsed = 0.0;
    Complex weight{1.0, 0.0};

    void validate() const {
        if (!(sigma > 0.0)) throw std::invalid_argument("packet width must be positive");
        if (!(mass > 0.0)) throw std::invalid_argument("packet mass must be positive");
    }

    double momentum_spread() const { return constants::hbar / (sigma * std::numbers::sqrt2); }

    double position_spread() const {
        const double r = constants::hbar * elapsed / (mass * sigma * sigma);
        return sigma / std::numbers::sqrt2 * std::sqrt(1.0 + r * r);
    }

    /// Window function |<p|phi>|^2.
    double momentum_density(double p) const {
        const double x = sigma * (p - momentum) / constants::hbar;
        return sigma / (constants::hbar * std::sqrt(std::numbers::pi)) * std::exp(-x * x);
    }
};

inline GaussianWavepacket momentum_kick(GaussianWavepacket packet, double kick) {
    packet.momentum += kick;
    return packet;
}

/// Ballistic evolution under gravity; +z points along g.
inline GaussianWavepacket free_fall(GaussianWavepacket packet, double t, double g = constants::standard_gravity) {
    if (t < 0.0) throw std::invalid_argument("free-fall time must be non-negative");
    packet.position += packet.momentum * t / packet.mass + 0.5 * g * t * t;
    packet.momentum += packet.mass * g * t;
    packet.elapsed += t;
    return packet;
}

struct FlagState {
    int n = 0;
    int m = 0;
    double work = 0.0;
    double weight = 0.0; // P(w_nm)
    GaussianWavepacket packet;
};

struct FlagStateSet {
    std::vector<FlagState> flags;
    double lambda = 0.0; // momentum per unit energy
    GaussianWavepacket initial;

    const FlagState* find(int n, int m) const {
        for (const auto& f : flags)
            if (f.n == n && f.m == m) return &f;
        return nullptr;
    }
};

/// One displaced packet per work outcome, momentum shifted by lambda * w_nm.
inline FlagStateSet flag_states(const WorkDistribution& dist, const GaussianWavepacket& initial, double lambda) {
    initial.validate();
    FlagStateSet set;
    set.lambda = lambda;
    set.initial = initial;
    for (const auto& e : dist.entries())
        set.flags.push_back({e.n, e.m, e.work, e.probability, momentum_kick(initial, lambda * e.work)});
    return set;
}

/// Momentum-outcome density sampled on a uniform grid.
struct SmearedOutcome {
    std::vector<double> grid;
    std::vector<double> density;   // full density (diagonal + cross terms when requested)
    std::vector<double> diagonal;  // sum_nm P(w_nm) f(p - lambda w_nm)
    std::vector<double> cross;     // density - diagonal
    double integral = 0.0;         // Simpson integral of `density`
    std::optional<double> bound;   // analytic sup bound on |cross|, when coherences were included

    double step() const { return grid.size() > 1 ? grid[1] - grid[0] : 0.0; }

    /// Trapezoid integral of `values` over [lo, hi], interpolating partial cells.
    double integrate(const std::vector<double>& values, double lo, double hi) const {
        if (grid.size() < 2 || hi <= lo) return 0.0;
        const double h = step();
        double sum = 0.0;
        for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
            const double a = std::max(grid[i], lo);
            const double b = std::min(grid[i + 1], hi);
            if (b <= a) continue;
            auto at = [&](double x) { return values[i] + (values[i + 1] - values[i]) * (x - grid[i]) / h; };
            sum += 0.5 * (at(a) + at(b)) * (b - a);
        }
        return sum;
    }
    double mass(double lo, double hi) const { return integrate(density, lo, hi); }
};

struct SmearOptions {
    std::size_t min_points = 2049;
    double padding_widths = 8.0;
    double resolution_tolerance = 1e-3;
};

namespace detail {

inline double simpson(const std::vector<double>& y, double h) {
    const std::size_t n = y.size();
    if (n < 3) return 0.0;
    double s = y.front() + y.back();
    for (std::size_t i = 1; i + 1 < n; ++i) s += (i % 2 ? 4.0 : 2.0) * y[i];
    return s * h / 3.0;
}

/// sum over n != n' and m of |Tr(Pi~_m U Pi_n rho Pi_n' U^dagger)| times the overlap factor.
template <class Factor>
double off_diagonal_sum(const QuantumState& state, const HamiltonianPair& pair, const DrivingUnitary& driving,
                        Factor&& factor) {
    const auto& ini = pair.initial();
    const auto& fin = pair.final_side();
    double total = 0.0;
    for (int n = 0; n < ini.level_count(); ++n)
        for (int np = 0; np < ini.level_count(); ++np) {
            if (n == np) continue;
            for (int m = 0; m < fin.level_count(); ++m) {
                const Complex t = branch_trace(fin.level(m).projector, driving.matrix(), ini.level(n).projector,
                                               state.matrix(), ini.level(np).projector);
                total += std::abs(t) * factor(ini.level(n).energy - ini.level(np).energy);
            }
        }
    return total;
}

} // namespace detail

/// Right-hand side of the coherence error bound:
/// sum_{n != n', m} |Tr(...)| sigma/(hbar sqrt(pi)) exp(-sigma^2 lambda^2 (E_n - E_n')^2 / (4 hbar^2)).
inline double coherence_error_bound(const QuantumState& state, const HamiltonianPair& pair,
                                    const DrivingUnitary& driving, double lambda, double sigma) {
    detail::require_same_dim(state, pair, driving);
    const double prefactor = sigma / (constants::hbar * std::sqrt(std::numbers::pi));
    return detail::off_diagonal_sum(state, pair, driving, [&](double gap) {
        const double x = sigma * lambda * gap / (2.0 * constants::hbar);
        return prefactor * std::exp(-x * x);
    });
}

/// Outcome density of the final momentum measurement on the ancilla.
///
/// The diagonal part convolves P(w) with the window function. Cross terms
/// (n != n') use the closed-form product of two displaced Gaussian amplitudes.
inline SmearedOutcome smeared_density(const FlagStateSet& flags, bool include_coherences, const QuantumState& state,
                                      const HamiltonianPair& pair, const DrivingUnitary& driving,
                                      const SmearOptions& opt = {}) {
    detail::require_same_dim(state, pair, driving);
    if (flags.flags.empty()) throw std::invalid_argument("empty flag-state set");
    const GaussianWavepacket& base = flags.initial;
    base.validate();
    const double spread = base.momentum_spread();
    double lo = flags.flags.front().packet.momentum, hi = lo;
    for (const auto& f : flags.flags) {
        lo = std::min(lo, f.packet.momentum);
        hi = std::max(hi, f.packet.momentum);
    }
    lo -= opt.padding_widths * spread;
    hi += opt.padding_widths * spread;
    std::size_t points = std::max<std::size_t>(opt.min_points, 3);
    if (points % 2 == 0) ++points;

    SmearedOutcome out;
    const double h = (hi - lo) / static_cast<double>(points - 1);
    out.grid.resize(points);
    out.diagonal.assign(points, 0.0);
    out.cross.assign(points, 0.0);
    for (std::size_t i = 0; i < points; ++i) out.grid[i] = lo + h * static_cast<double>(i);

    for (const auto& f : flags.flags) {
        if (f.weight == 0.0) continue;
        for (std::size_t i = 0; i < points; ++i) out.diagonal[i] += f.weight * f.packet.momentum_density(out.grid[i]);
    }

    if (include_coherences) {
        const auto& ini = pair.initial();
        const auto& fin = pair.final_side();
        const double amp = base.sigma / (constants::hbar * std::sqrt(std::numbers::pi));
        const double k = base.sigma * base.sigma / (2.0 * constants::hbar * constants::hbar);
        for (int n = 0; n < ini.level_count(); ++n)
            for (int np = 0; np < ini.level_count(); ++np) {
                if (n == np) continue;
                for (int m = 0; m < fin.level_count(); ++m) {
                    const FlagState* a = flags.find(n, m);
                    const FlagState* b = flags.find(np, m);
                    if (!a || !b) throw std::invalid_argument("flag set is missing an (n, m) outcome");
                    const Complex t = detail::branch_trace(fin.level(m).projector, driving.matrix(),
                                                           ini.level(n).projector, state.matrix(),
                                                           ini.level(np).projector);
                    const double ca = a->packet.momentum;
                    const double cb = b->packet.momentum;
                    const Complex phase = std::polar(1.0, (ca - cb) * base.position / constants::hbar);
                    const double coeff = (t * phase).real();
                    for (std::size_t i = 0; i < points; ++i) {
                        const double p = out.grid[i];
                        out.cross[i] += coeff * amp * std::exp(-k * ((p - ca) * (p - ca) + (p - cb) * (p - cb)));
                    }
                }
            }
        out.bound = coherence_error_bound(state, pair, driving, flags.lambda, base.sigma);
    }

    out.density.resize(points);
    for (std::size_t i = 0; i < points; ++i) out.density[i] = out.diagonal[i] + out.cross[i];
    out.integral = detail::simpson(out.density, h);
    if (std::abs(out.integral - 1.0) > opt.resolution_tolerance)
        throw NumericalError("smeared density grid too coarse: integral = " + csv::num(out.integral));
    return out;
}

/// Extra displacement acquired by the second gate because the atoms fall
/// between the gates: lambda t / m_a per unit of final energy. The accompanying
/// energy-dependent phase does not change outcome probabilities.
struct InterPulseCorrection {
    double coefficient = 0.0;              // position per unit energy
    std::vector<double> level_displacement; // coefficient * E~_m for each final level
    bool phase_probability_irrelevant = true;
};

inline InterPulseCorrection inter_pulse_fall_correction(const Spectrum& final_side, double lambda,
                                                         double t_between, double mass) {
    if (t_between < 0.0) throw std::invalid_argument("inter-pulse time must be non-negative");
    if (!(mass > 0.0)) throw std::invalid_argument("mass must be positive");
    InterPulseCorrection c;
    c.coefficient = lambda * t_between / mass;
    for (const auto& l : final_side.levels()) c.level_displacement.push_back(c.coefficient * l.energy);
    return c;
}

} // namespace qwm
