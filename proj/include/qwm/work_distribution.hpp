#pragma once

// Two-point-measurement work statistics, their POVM form, Jarzynski
// functionals and the geometry of the set of work distributions reachable by
// varying the driving at fixed temperature and Hamiltonian pair.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qwm/csv.hpp"
#include "qwm/errors.hpp"
#include "qwm/quantum_core.hpp"

namespace qwm {

inline constexpr double kNormalizationTolerance = 1e-12;
inline constexpr double kWorkMergeTolerance = 1e-9;

struct WorkEntry {
    int n = 0;         // initial level index
    int m = 0;         // final level index
    double work = 0.0; // E~_m - E_n
    double probability = 0.0;
    bool undefined_conditional = false; // p_n = 0, so p_{m|n} was set to 0
};

/// Discrete work distribution, entries ordered by (n, m).
class WorkDistribution {
public:
    WorkDistribution() = default;

    explicit WorkDistribution(std::vector<WorkEntry> entries, std::optional<double> beta = std::nullopt,
                              double normalization_tolerance = kNormalizationTolerance)
        : entries_(std::move(entries)), beta_(beta) {
        double total = 0.0;
        for (const auto& e : entries_) {
            if (!(e.probability >= 0.0 && e.probability <= 1.0))
                throw std::invalid_argument("work probability outside [0, 1]");
            total += e.probability;
        }
        if (entries_.empty() || std::abs(total - 1.0) > normalization_tolerance)
            throw std::invalid_argument("work distribution is not normalized (sum = " + std::to_string(total) + ")");
    }

    /// Builds a distribution from non-negative weights (counts, optical densities) by normalizing them.
    static WorkDistribution empirical(std::vector<WorkEntry> entries, std::optional<double> beta = std::nullopt) {
        double total = 0.0;
        for (const auto& e : entries) {
            if (!(e.probability >= 0.0)) throw std::invalid_argument("negative empirical weight");
            total += e.probability;
        }
        if (!(total > 0.0)) throw std::invalid_argument("empirical weights sum to zero");
        for (auto& e : entries) e.probability /= total;
        return WorkDistribution(std::move(entries), beta, 1e-9);
    }

    const std::vector<WorkEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::optional<double> beta() const { return beta_; }
    WorkDistribution with_beta(double beta) const {
        WorkDistribution d = *this;
        d.beta_ = beta;
        return d;
    }

    double total_probability() const {
        double t = 0.0;
        for (const auto& e : entries_) t += e.probability;
        return t;
    }

    std::vector<double> probabilities() const {
        std::vector<double> p;
        for (const auto& e : entries_) p.push_back(e.probability);
        return p;
    }

    /// Independent coordinates: the (n, m)-ordered probabilities with the last one dropped.
    Eigen::VectorXd reduced_coordinates() const {
        Eigen::VectorXd x(static_cast<Eigen::Index>(entries_.size()) - 1);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = entries_[static_cast<std::size_t>(i)].probability;
        return x;
    }

    /// Entries whose work values agree within `abs_tolerance` are combined; the
    /// surviving entry keeps the first (n, m) label and the summed probability.
    WorkDistribution merge_coincident_work(double abs_tolerance) const {
        std::vector<WorkEntry> merged;
        for (const auto& e : entries_) {
            auto it = std::find_if(merged.begin(), merged.end(),
                                   [&](const WorkEntry& k) { return std::abs(k.work - e.work) < abs_tolerance; });
            if (it == merged.end()) {
                merged.push_back(e);
            } else {
                it->probability += e.probability;
                it->undefined_conditional = it->undefined_conditional && e.undefined_conditional;
            }
        }
        std::stable_sort(merged.begin(), merged.end(),
                         [](const WorkEntry& a, const WorkEntry& b) { return a.work < b.work; });
        return WorkDistribution(std::move(merged), beta_, 1e-9);
    }

private:
    std::vector<WorkEntry> entries_;
    std::optional<double> beta_;
};

/// Conditional probabilities q(m, n) = p_{m|n}.
struct TransitionMatrix {
    Eigen::MatrixXd q;
    std::vector<bool> undefined_column; // p_n = 0

    double max_column_sum_error() const {
        double err = 0.0;
        for (Eigen::Index n = 0; n < q.cols(); ++n)
            if (!undefined_column[static_cast<std::size_t>(n)]) err = std::max(err, std::abs(q.col(n).sum() - 1.0));
        return err;
    }
    double max_row_sum_error() const {
        double err = 0.0;
        for (Eigen::Index m = 0; m < q.rows(); ++m) err = std::max(err, std::abs(q.row(m).sum() - 1.0));
        return err;
    }
};

namespace detail {

inline void require_same_dim(const QuantumState& state, const HamiltonianPair& pair, const DrivingUnitary& u) {
    if (state.dim() != pair.dim() || u.dim() != pair.dim())
        throw std::invalid_argument("state, Hamiltonians and driving differ in dimension");
}

inline double clamp_probability(double v) {
    if (v < 0.0 && v > -1e-12) return 0.0;
    if (v > 1.0 && v < 1.0 + 1e-12) return 1.0;
    return v;
}

/// Tr(Pi~_m U Pi_n rho Pi_n' U^dagger).
inline Complex branch_trace(const Matrix& final_projector, const Matrix& u, const Matrix& pn, const Matrix& rho,
                            const Matrix& pn_prime) {
    return (final_projector * u * pn * rho * pn_prime * u.adjoint()).trace();
}

} // namespace detail

inline TransitionMatrix transition_matrix(const QuantumState& state, const HamiltonianPair& pair,
                                          const DrivingUnitary& driving) {
    detail::require_same_dim(state, pair, driving);
    const auto& ini = pair.initial();
    const auto& fin = pair.final_side();
    TransitionMatrix t;
    t.q = Eigen::MatrixXd::Zero(fin.level_count(), ini.level_count());
    t.undefined_column.assign(static_cast<std::size_t>(ini.level_count()), false);
    const Matrix& rho = state.matrix();
    const Matrix& u = driving.matrix();
    for (int n = 0; n < ini.level_count(); ++n) {
        const Matrix& pn = ini.level(n).projector;
        const double p = detail::clamp_probability((rho * pn).trace().real());
        if (p <= 0.0) {
            t.undefined_column[static_cast<std::size_t>(n)] = true;
            continue;
        }
        for (int m = 0; m < fin.level_count(); ++m)
            t.q(m, n) = detail::branch_trace(fin.level(m).projector, u, pn, rho, pn).real() / p;
    }
    return t;
}

/// Exact TPM work distribution P(w_nm) = p_n p_{m|n}.
inline WorkDistribution tpm_distribution(const QuantumState& state, const HamiltonianPair& pair,
                                         const DrivingUnitary& driving) {
    detail::require_same_dim(state, pair, driving);
    const auto& ini = pair.initial();
    const auto& fin = pair.final_side();
    const Matrix& rho = state.matrix();
    const Matrix& u = driving.matrix();
    std::vector<WorkEntry> entries;
    for (int n = 0; n < ini.level_count(); ++n) {
        const Matrix& pn = ini.level(n).projector;
        const double p = detail::clamp_probability((rho * pn).trace().real());
        for (int m = 0; m < fin.level_count(); ++m) {
            WorkEntry e{n, m, fin.level(m).energy - ini.level(n).energy, 0.0, p <= 0.0};
            if (p > 0.0)
                e.probability = detail::clamp_probability(
                    detail::branch_trace(fin.level(m).projector, u, pn, rho, pn).real());
            entries.push_back(e);
        }
    }
    return WorkDistribution(std::move(entries));
}

/// POVM elements A_nm = Pi_n U^dagger Pi~_m U Pi_n, stored n-major.
struct PovmElementSet {
    int initial_levels = 0;
    int final_levels = 0;
    std::vector<Matrix> elements;

    const Matrix& element(int n, int m) const {
        return elements.at(static_cast<std::size_t>(n * final_levels + m));
    }

    double completeness_error() const {
        Matrix sum = Matrix::Zero(elements.front().rows(), elements.front().cols());
        for (const auto& a : elements) sum += a;
        return max_abs(sum - Matrix::Identity(sum.rows(), sum.cols()));
    }

    double min_eigenvalue() const {
        double lo = std::numeric_limits<double>::infinity();
        for (const auto& a : elements) lo = std::min(lo, qwm::min_eigenvalue(a));
        return lo;
    }

    /// Tr(rho A_nm) in the same (n, m) order as tpm_distribution.
    std::vector<double> outcome_probabilities(const QuantumState& state) const {
        std::vector<double> p;
        for (const auto& a : elements) p.push_back((state.matrix() * a).trace().real());
        return p;
    }
};

inline PovmElementSet povm_elements(const HamiltonianPair& pair, const DrivingUnitary& driving) {
    if (driving.dim() != pair.dim()) throw std::invalid_argument("driving and Hamiltonians differ in dimension");
    const auto& ini = pair.initial();
    const auto& fin = pair.final_side();
    const Matrix& u = driving.matrix();
    PovmElementSet set;
    set.initial_levels = ini.level_count();
    set.final_levels = fin.level_count();
    for (int n = 0; n < ini.level_count(); ++n) {
        const Matrix& pn = ini.level(n).projector;
        for (int m = 0; m < fin.level_count(); ++m) {
            Matrix a = pn * u.adjoint() * fin.level(m).projector * u * pn;
            set.elements.push_back(0.5 * (a + a.adjoint()));
        }
    }
    return set;
}

struct JarzynskiAverage {
    double average = 0.0; // <exp(-beta w)>
    double g = 0.0;       // -ln <exp(-beta w)>
};

inline JarzynskiAverage jarzynski_average(const WorkDistribution& dist, double beta) {
    require_finite_beta(beta);
    JarzynskiAverage r;
    for (const auto& e : dist.entries()) r.average += std::exp(-beta * e.work) * e.probability;
    if (!(r.average > 0.0)) throw NumericalError("non-positive exponential work average");
    r.g = -std::log(r.average);
    return r;
}

/// beta*DeltaF = ln(Z / Z~).
inline double delta_f_from_partition(const HamiltonianPair& pair, double beta) {
    require_finite_beta(beta);
    return gibbs_populations(pair.initial(), beta).log_partition -
           gibbs_populations(pair.final_side(), beta).log_partition;
}

struct FreeEnergyEstimate {
    std::vector<double> per_point_g; // NaN where excluded
    std::vector<std::size_t> excluded;
    std::size_t used = 0;
    double mean = 0.0; // estimate of beta*DeltaF
    double sem = 0.0;  // standard error of the mean; 0 for a single point
};

/// beta*DeltaF from (possibly noisy) measured distributions: mean and SEM of G across points.
inline FreeEnergyEstimate delta_f_from_samples(const std::vector<WorkDistribution>& dists, double beta) {
    require_finite_beta(beta);
    FreeEnergyEstimate est;
    std::vector<double> good;
    for (std::size_t i = 0; i < dists.size(); ++i) {
        double avg = 0.0;
        for (const auto& e : dists[i].entries()) avg += std::exp(-beta * e.work) * e.probability;
        if (avg > 0.0 && std::isfinite(avg)) {
            est.per_point_g.push_back(-std::log(avg));
            good.push_back(est.per_point_g.back());
        } else {
            est.per_point_g.push_back(std::numeric_limits<double>::quiet_NaN());
            est.excluded.push_back(i);
        }
    }
    if (good.empty()) throw InsufficientDataError("no usable work distributions for the free-energy estimate");
    est.used = good.size();
    double sum = 0.0;
    for (double g : good) sum += g;
    est.mean = sum / static_cast<double>(good.size());
    if (good.size() > 1) {
        double ss = 0.0;
        for (double g : good) ss += (g - est.mean) * (g - est.mean);
        est.sem = std::sqrt(ss / static_cast<double>(good.size() - 1) / static_cast<double>(good.size()));
    }
    return est;
}

struct ManifoldFitOptions {
    double singular_value_rel_threshold = 1e-8;
    double singular_value_abs_floor = 1e-12;
    double residual_tolerance = 1e-10;
    std::optional<int> forced_dimension; // skip rank detection (useful for noisy data)
    std::optional<double> beta;          // enables the Jarzynski-constraint check
};

/// Affine subspace fitted through probability vectors by principal components.
struct ManifoldFit {
    int dimension = 0;
    int ambient_dimension = 0;      // number of independent probabilities
    Eigen::MatrixXd basis;          // ambient x dimension, orthonormal columns
    Eigen::VectorXd offset;         // centroid of the data
    std::vector<double> singular_values;
    double max_residual = 0.0;      // largest distance of a point to the subspace
    bool converged = true;
    std::string message;

    // Filled when options.beta is given.
    std::optional<double> constraint_residual; // max |a . b_k| over basis vectors, a the Jarzynski normal
    std::optional<double> point_constraint_spread; // max |<e^{-beta w}>_i - <e^{-beta w}>_centroid|
    std::optional<double> estimated_beta_delta_f;   // -ln of the Jarzynski functional at the centroid
};

inline ManifoldFit manifold_fit(const std::vector<WorkDistribution>& dists, const ManifoldFitOptions& opt = {}) {
    if (dists.empty()) throw InsufficientDataError("manifold fit needs at least one distribution");
    const auto& ref = dists.front().entries();
    int max_n = 0, max_m = 0;
    for (const auto& e : ref) {
        max_n = std::max(max_n, e.n);
        max_m = std::max(max_m, e.m);
    }
    const std::size_t required = static_cast<std::size_t>(max_n) * static_cast<std::size_t>(max_m) + 2;
    if (dists.size() < required)
        throw InsufficientDataError("manifold fit needs at least " + std::to_string(required) + " distributions, got " +
                                    std::to_string(dists.size()));
    for (const auto& d : dists) {
        if (d.size() != ref.size()) throw std::invalid_argument("distributions have different supports");
        for (std::size_t k = 0; k < ref.size(); ++k)
            if (d.entries()[k].n != ref[k].n || d.entries()[k].m != ref[k].m)
                throw std::invalid_argument("distributions have different (n, m) ordering");
    }

    const auto points = static_cast<Eigen::Index>(dists.size());
    const auto ambient = static_cast<Eigen::Index>(ref.size()) - 1;
    Eigen::MatrixXd x(points, ambient);
    for (Eigen::Index i = 0; i < points; ++i) x.row(i) = dists[static_cast<std::size_t>(i)].reduced_coordinates();

    ManifoldFit fit;
    fit.ambient_dimension = static_cast<int>(ambient);
    fit.offset = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - fit.offset.transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeFullV);
    const Eigen::VectorXd& s = svd.singularValues();
    for (Eigen::Index k = 0; k < s.size(); ++k) fit.singular_values.push_back(s(k));

    if (opt.forced_dimension) {
        fit.dimension = std::clamp(*opt.forced_dimension, 0, static_cast<int>(s.size()));
    } else {
        const double largest = s.size() ? s(0) : 0.0;
        const double threshold = std::max(opt.singular_value_rel_threshold * largest, opt.singular_value_abs_floor);
        for (Eigen::Index k = 0; k < s.size(); ++k)
            if (s(k) > threshold) ++fit.dimension;
    }
    fit.basis = svd.matrixV().leftCols(fit.dimension);

    for (Eigen::Index i = 0; i < points; ++i) {
        const Eigen::VectorXd d = centered.row(i).transpose();
        const Eigen::VectorXd r = d - fit.basis * (fit.basis.transpose() * d);
        fit.max_residual = std::max(fit.max_residual, r.norm());
    }
    if (fit.max_residual > opt.residual_tolerance) {
        fit.converged = false;
        fit.message = "max residual " + csv::num(fit.max_residual) + " exceeds tolerance " +
                      csv::num(opt.residual_tolerance);
    }

    if (opt.beta) {
        // <e^{-beta w}> = a . x + c_last in reduced coordinates.
        const double c_last = std::exp(-*opt.beta * ref.back().work);
        Eigen::VectorXd a(ambient);
        for (Eigen::Index k = 0; k < ambient; ++k)
            a(k) = std::exp(-*opt.beta * ref[static_cast<std::size_t>(k)].work) - c_last;
        double worst = 0.0;
        for (Eigen::Index k = 0; k < fit.dimension; ++k) worst = std::max(worst, std::abs(a.dot(fit.basis.col(k))));
        fit.constraint_residual = worst;
        const double at_centroid = a.dot(fit.offset) + c_last;
        double spread = 0.0;
        for (Eigen::Index i = 0; i < points; ++i)
            spread = std::max(spread, std::abs(a.dot(x.row(i).transpose()) + c_last - at_centroid));
        fit.point_constraint_spread = spread;
        if (at_centroid > 0.0) fit.estimated_beta_delta_f = -std::log(at_centroid);
    }
    return fit;
}

/// One row per (n, m): label, n, m, w, P, plus G and beta*DeltaF when known.
inline void write_distribution_csv(std::ostream& os, const std::string& label, const WorkDistribution& dist,
                                   std::optional<double> g = std::nullopt,
                                   std::optional<double> beta_delta_f = std::nullopt, bool header = true) {
    if (header) csv::write_row(os, {"driving", "n", "m", "w", "probability", "G", "beta_dF"});
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& e : dist.entries())
        csv::write_row(os, {label, std::to_string(e.n + 1), std::to_string(e.m + 1), csv::num(e.work),
                            csv::num(e.probability), csv::num(g.value_or(nan)), csv::num(beta_delta_f.value_or(nan))});
}

} // namespace qwm
