#pragma once

// Finite-dimensional quantum mechanics for the work meter: density matrices,
// Hamiltonian spectra with cached eigenprojectors, driving unitaries and
// Gibbs weights. Energies are dimensionless multiples of a reference scale E,
// inverse temperatures are carried as the product beta*E.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace qwm {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr double kHermitianTolerance = 1e-12;
inline constexpr double kTraceTolerance = 1e-12;
inline constexpr double kPositivityTolerance = 1e-10;
inline constexpr double kUnitaryTolerance = 1e-12;
inline constexpr double kDegeneracyTolerance = 1e-9;

/// Largest elementwise modulus.
inline double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double hermiticity_error(const Matrix& m) {
    return max_abs(m - m.adjoint());
}

inline double unitarity_error(const Matrix& u) {
    return max_abs(u.adjoint() * u - Matrix::Identity(u.rows(), u.cols()));
}

/// Smallest eigenvalue of the Hermitian part of `m`.
inline double min_eigenvalue(const Matrix& m) {
    const Matrix h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

/// Density matrix of the system. Immutable once validated.
class QuantumState {
public:
    explicit QuantumState(Matrix rho) : rho_(std::move(rho)) {
        if (rho_.rows() == 0 || rho_.rows() != rho_.cols())
            throw std::invalid_argument("density matrix must be square and non-empty");
        if (hermiticity_error(rho_) > kHermitianTolerance)
            throw std::invalid_argument("density matrix is not Hermitian");
        if (std::abs(rho_.trace() - Complex(1.0)) > kTraceTolerance)
            throw std::invalid_argument("density matrix trace differs from 1");
        if (min_eigenvalue(rho_) < -kPositivityTolerance)
            throw std::invalid_argument("density matrix is not positive semi-definite");
    }

    static QuantumState pure(const Vector& psi) {
        const double norm = psi.norm();
        if (norm == 0.0) throw std::invalid_argument("zero state vector");
        const Vector v = psi / norm;
        Matrix rho = v * v.adjoint();
        rho = 0.5 * (rho + rho.adjoint());
        return QuantumState(std::move(rho));
    }

    int dim() const { return static_cast<int>(rho_.rows()); }
    const Matrix& matrix() const { return rho_; }
    double population(int i) const { return rho_(i, i).real(); }
    Complex coherence(int i, int j) const { return rho_(i, j); }

private:
    Matrix rho_;
};

/// One energy level of a Hamiltonian: eigenvalue, eigenprojector, degeneracy.
struct EnergyLevel {
    double energy = 0.0;
    Matrix projector;
    int degeneracy = 0;
    Matrix eigenvectors; // orthonormal columns spanning the level
};

/// Eigendecomposition of a Hermitian observable, levels sorted ascending.
///
/// Eigenvalues closer than kDegeneracyTolerance times max(spectral range, max |E|, 1) are
/// merged into a single level whose energy is their mean.
class Spectrum {
public:
    static Spectrum from_hamiltonian(const Matrix& h) {
        if (h.rows() == 0 || h.rows() != h.cols())
            throw std::invalid_argument("Hamiltonian must be square and non-empty");
        if (hermiticity_error(h) > kHermitianTolerance * std::max(1.0, max_abs(h)))
            throw std::invalid_argument("Hamiltonian is not Hermitian");
        Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (h + h.adjoint()));
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("eigendecomposition failed");
        const Eigen::VectorXd& values = solver.eigenvalues();
        return Spectrum(std::vector<double>(values.data(), values.data() + values.size()),
                        solver.eigenvectors());
    }

    /// Spectrum from eigenvalues and a unitary whose columns are the eigenvectors.
    static Spectrum from_eigensystem(std::vector<double> energies, const Matrix& basis) {
        if (basis.rows() != basis.cols() || static_cast<Eigen::Index>(energies.size()) != basis.cols())
            throw std::invalid_argument("eigensystem dimensions disagree");
        if (unitarity_error(basis) > kUnitaryTolerance)
            throw std::invalid_argument("eigenvector basis is not unitary");
        std::vector<int> order(energies.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return energies[a] < energies[b]; });
        std::vector<double> sorted(energies.size());
        Matrix sorted_basis(basis.rows(), basis.cols());
        for (std::size_t i = 0; i < order.size(); ++i) {
            sorted[i] = energies[order[i]];
            sorted_basis.col(static_cast<Eigen::Index>(i)) = basis.col(order[i]);
        }
        return Spectrum(std::move(sorted), sorted_basis);
    }

    /// Diagonal Hamiltonian in the computational basis.
    static Spectrum diagonal(const std::vector<double>& energies) {
        const auto d = static_cast<Eigen::Index>(energies.size());
        return from_eigensystem(energies, Matrix::Identity(d, d));
    }

    int dim() const { return dim_; }
    int level_count() const { return static_cast<int>(levels_.size()); }
    const std::vector<EnergyLevel>& levels() const { return levels_; }
    const EnergyLevel& level(int n) const { return levels_.at(static_cast<std::size_t>(n)); }
    bool non_degenerate() const { return level_count() == dim_; }

    /// Largest |E_n|, floored at 1; the scale for energy comparisons.
    double energy_scale() const {
        double s = 1.0;
        for (const auto& l : levels_) s = std::max(s, std::abs(l.energy));
        return s;
    }

    Matrix hamiltonian() const {
        Matrix h = Matrix::Zero(dim_, dim_);
        for (const auto& l : levels_) h += l.energy * l.projector;
        return h;
    }

    /// Same eigenvectors, every energy shifted by `offset`.
    Spectrum shifted(double offset) const {
        Spectrum s = *this;
        for (auto& l : s.levels_) l.energy += offset;
        return s;
    }

private:
    Spectrum(std::vector<double> sorted_values, const Matrix& vectors)
        : dim_(static_cast<int>(sorted_values.size())) {
        const double range = sorted_values.back() - sorted_values.front();
        const double tol = kDegeneracyTolerance * std::max({range, std::abs(sorted_values.front()), std::abs(sorted_values.back()), 1.0});
        std::size_t start = 0;
        while (start < sorted_values.size()) {
            std::size_t end = start + 1;
            while (end < sorted_values.size() && sorted_values[end] - sorted_values[start] <= tol) ++end;
            EnergyLevel level;
            const auto count = static_cast<Eigen::Index>(end - start);
            level.eigenvectors = vectors.middleCols(static_cast<Eigen::Index>(start), count);
            level.projector = level.eigenvectors * level.eigenvectors.adjoint();
            level.degeneracy = static_cast<int>(count);
            double sum = 0.0;
            for (std::size_t i = start; i < end; ++i) sum += sorted_values[i];
            level.energy = sum / static_cast<double>(count);
            levels_.push_back(std::move(level));
            start = end;
        }
    }

    int dim_ = 0;
    std::vector<EnergyLevel> levels_;
};

/// Initial Hamiltonian H and final Hamiltonian H~ acting on the same space.
class HamiltonianPair {
public:
    HamiltonianPair(Spectrum initial, Spectrum final_side)
        : initial_(std::move(initial)), final_(std::move(final_side)) {
        if (initial_.dim() != final_.dim())
            throw std::invalid_argument("initial and final Hamiltonians differ in dimension");
    }

    static HamiltonianPair from_matrices(const Matrix& h, const Matrix& h_final) {
        return {Spectrum::from_hamiltonian(h), Spectrum::from_hamiltonian(h_final)};
    }

    /// H = E*sigma and H~ = ratio*E*sigma with sigma = |1><1| + 2|2><2|, E = 1.
    static HamiltonianPair two_level(double energy_ratio) {
        return {Spectrum::diagonal({1.0, 2.0}), Spectrum::diagonal({energy_ratio, 2.0 * energy_ratio})};
    }

    int dim() const { return initial_.dim(); }
    const Spectrum& initial() const { return initial_; }
    const Spectrum& final_side() const { return final_; }

    double energy_scale() const { return std::max(initial_.energy_scale(), final_.energy_scale()); }

private:
    Spectrum initial_;
    Spectrum final_;
};

/// Unitary evolution applied to the system between the two energy records.
class DrivingUnitary {
public:
    DrivingUnitary(Matrix u, std::string label) : u_(std::move(u)), label_(std::move(label)) {
        if (u_.rows() == 0 || u_.rows() != u_.cols())
            throw std::invalid_argument("driving must be a square matrix");
        if (unitarity_error(u_) > kUnitaryTolerance)
            throw std::invalid_argument("driving matrix is not unitary");
    }

    static DrivingUnitary identity(int dim) { return {Matrix::Identity(dim, dim), "identity"}; }

    int dim() const { return static_cast<int>(u_.rows()); }
    const Matrix& matrix() const { return u_; }
    const std::string& label() const { return label_; }

private:
    Matrix u_;
    std::string label_;
};

struct GibbsWeights {
    std::vector<double> populations; // per level, p_n = g_n exp(-beta E_n) / Z
    double partition = 0.0;          // Z
    double log_partition = 0.0;      // ln Z, finite even when Z underflows
};

inline void require_finite_beta(double beta) {
    if (!std::isfinite(beta)) throw std::domain_error("beta must be finite");
}

inline GibbsWeights gibbs_populations(const Spectrum& spectrum, double beta) {
    require_finite_beta(beta);
    if (beta < 0.0) throw std::domain_error("beta must be non-negative");
    // Shift by the ground energy so the largest Boltzmann factor is g_0.
    const double ground = spectrum.levels().front().energy;
    GibbsWeights w;
    double shifted_sum = 0.0;
    for (const auto& l : spectrum.levels()) {
        const double f = l.degeneracy * std::exp(-beta * (l.energy - ground));
        w.populations.push_back(f);
        shifted_sum += f;
    }
    for (auto& p : w.populations) p /= shifted_sum;
    w.log_partition = std::log(shifted_sum) - beta * ground;
    w.partition = std::exp(w.log_partition);
    return w;
}

/// State whose energy-basis populations are the Gibbs weights of `spectrum`.
///
/// Without a phase the state is the mixed Gibbs state sum_n p_n Pi_n / g_n.
/// With a phase (two non-degenerate levels only) it is the pure superposition
/// sqrt(p_1)|1> + e^{i phase} sqrt(p_2)|2>.
inline QuantumState pseudo_thermal_state(double beta, const Spectrum& spectrum,
                                         std::optional<double> coherence_phase = std::nullopt) {
    const GibbsWeights w = gibbs_populations(spectrum, beta);
    if (!coherence_phase) {
        Matrix rho = Matrix::Zero(spectrum.dim(), spectrum.dim());
        for (int n = 0; n < spectrum.level_count(); ++n)
            rho += (w.populations[n] / spectrum.level(n).degeneracy) * spectrum.level(n).projector;
        rho = 0.5 * (rho + rho.adjoint());
        return QuantumState(std::move(rho));
    }
    if (spectrum.dim() != 2 || !spectrum.non_degenerate())
        throw std::invalid_argument("coherent pseudo-thermal state requires two non-degenerate levels");
    const Vector psi = std::sqrt(w.populations[0]) * spectrum.level(0).eigenvectors.col(0) +
                       std::polar(std::sqrt(w.populations[1]), *coherence_phase) *
                           spectrum.level(1).eigenvectors.col(0);
    return QuantumState::pure(psi);
}

/// Resonant Rabi rotation exp(-i area/2 (cos(phase) sx + sin(phase) sy)).
inline DrivingUnitary rf_unitary(double pulse_area, double axis_phase = 0.0) {
    const double c = std::cos(pulse_area / 2.0);
    const double s = std::sin(pulse_area / 2.0);
    const Complex i(0.0, 1.0);
    Matrix u(2, 2);
    u(0, 0) = c;
    u(1, 1) = c;
    u(0, 1) = -i * s * std::exp(-i * axis_phase);
    u(1, 0) = -i * s * std::exp(i * axis_phase);
    return {u, "rf area=" + std::to_string(pulse_area)};
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases of
/// R's diagonal folded back into Q.
inline DrivingUnitary random_unitary(int dim, std::uint64_t seed) {
    if (dim <= 0) throw std::invalid_argument("dimension must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix z(dim, dim);
    for (int c = 0; c < dim; ++c)
        for (int r = 0; r < dim; ++r) z(r, c) = Complex(normal(rng), normal(rng)) / std::numbers::sqrt2;
    Eigen::HouseholderQR<Matrix> qr(z);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int k = 0; k < dim; ++k) {
        const Complex d = r(k, k);
        const double a = std::abs(d);
        q.col(k) *= (a == 0.0 ? Complex(1.0) : d / a);
    }
    return {q, "haar seed=" + std::to_string(seed)};
}

} // namespace qwm
