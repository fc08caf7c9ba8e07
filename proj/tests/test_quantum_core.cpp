#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qwm/quantum_core.hpp"

using namespace qwm;

namespace {

Matrix pauli_x() {
    Matrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

} // namespace

TEST(QuantumState, RejectsInvalidMatrices) {
    Matrix not_hermitian(2, 2);
    not_hermitian << 0.5, 0.1, 0.2, 0.5;
    EXPECT_THROW(QuantumState{not_hermitian}, std::invalid_argument);

    Matrix bad_trace = Matrix::Identity(2, 2);
    EXPECT_THROW(QuantumState{bad_trace}, std::invalid_argument);

    Matrix negative(2, 2);
    negative << 1.2, 0, 0, -0.2;
    EXPECT_THROW(QuantumState{negative}, std::invalid_argument);

    EXPECT_NO_THROW(QuantumState{Matrix::Identity(3, 3) / 3.0});
}

TEST(Spectrum, MergesDegenerateEigenvalues) {
    const Spectrum s = Spectrum::diagonal({0.0, 1.0, 1.0 + 1e-12, 3.0});
    ASSERT_EQ(s.level_count(), 3);
    EXPECT_EQ(s.level(1).degeneracy, 2);
    EXPECT_FALSE(s.non_degenerate());
    Matrix sum = Matrix::Zero(4, 4);
    for (const auto& l : s.levels()) {
        EXPECT_LT(max_abs(l.projector * l.projector - l.projector), 1e-12);
        sum += l.projector;
    }
    EXPECT_LT(max_abs(sum - Matrix::Identity(4, 4)), 1e-12);
    EXPECT_LT(max_abs(s.level(0).projector * s.level(2).projector), 1e-12);
}

TEST(Spectrum, FromHamiltonianSortsAscending) {
    const Spectrum s = Spectrum::from_hamiltonian(pauli_x());
    ASSERT_EQ(s.level_count(), 2);
    EXPECT_NEAR(s.level(0).energy, -1.0, 1e-14);
    EXPECT_NEAR(s.level(1).energy, 1.0, 1e-14);
    EXPECT_LT(max_abs(s.hamiltonian() - pauli_x()), 1e-12);
}

TEST(GibbsPopulations, InfiniteTemperatureIsUniform) {
    const auto w = gibbs_populations(Spectrum::diagonal({1.0, 2.0}), 0.0);
    EXPECT_DOUBLE_EQ(w.populations[0], 0.5);
    EXPECT_DOUBLE_EQ(w.populations[1], 0.5);
    EXPECT_NEAR(w.partition, 2.0, 1e-15);
}

TEST(GibbsPopulations, PartitionFunctionMatchesTwoTermSum) {
    // Frozen from the two-term oracle: exp(-0.58) + exp(-1.16).
    const auto w = gibbs_populations(Spectrum::diagonal({1.0, 2.0}), 0.58);
    EXPECT_NEAR(w.partition, 0.8733845474480073, 1e-14);
    EXPECT_NEAR(w.partition, oracle::two_term_partition(0.58, 1.0), 1e-14);
    EXPECT_NEAR(w.populations[0] + w.populations[1], 1.0, 1e-12);
}

TEST(GibbsPopulations, GroundStateLimit) {
    const auto w = gibbs_populations(Spectrum::diagonal({1.0, 2.0}), 200.0);
    EXPECT_NEAR(w.populations[0], 1.0, 1e-15);
    EXPECT_LT(w.populations[1], 1e-80);
    EXPECT_GT(w.partition, 0.0);
}

TEST(GibbsPopulations, DegeneracyWeightsLevels) {
    const auto w = gibbs_populations(Spectrum::diagonal({0.0, 1.0, 1.0}), 0.0);
    ASSERT_EQ(w.populations.size(), 2u);
    EXPECT_NEAR(w.populations[0], 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(w.populations[1], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(w.partition, 3.0, 1e-14);
}

TEST(GibbsPopulations, NonFiniteBetaIsDomainError) {
    const Spectrum s = Spectrum::diagonal({1.0, 2.0});
    EXPECT_THROW(gibbs_populations(s, std::nan("")), std::domain_error);
    EXPECT_THROW(gibbs_populations(s, INFINITY), std::domain_error);
}

TEST(GibbsPopulations, ConstantShiftInvariance) {
    const Spectrum s = Spectrum::diagonal({-0.3, 0.4, 2.0});
    for (double beta : {0.1, 0.9, 3.0})
        for (double c : {-5.0, 0.7, 11.0}) {
            const auto a = gibbs_populations(s, beta);
            const auto b = gibbs_populations(s.shifted(c), beta);
            for (std::size_t n = 0; n < a.populations.size(); ++n)
                EXPECT_NEAR(a.populations[n], b.populations[n], 1e-12);
            EXPECT_NEAR(b.log_partition, a.log_partition - beta * c, 1e-12);
        }
}

TEST(PseudoThermalState, DiagonalVariants) {
    const Spectrum s = Spectrum::diagonal({1.0, 2.0});
    const auto inf_temp = pseudo_thermal_state(0.0, s);
    EXPECT_LT(max_abs(inf_temp.matrix() - Matrix::Identity(2, 2) / 2.0), 1e-15);

    const auto ln2 = pseudo_thermal_state(std::log(2.0), s);
    EXPECT_NEAR(ln2.population(0), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(ln2.population(1), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(ln2.coherence(0, 1), Complex(0.0));
}

TEST(PseudoThermalState, CoherentVariantIsPureWithGibbsPopulations) {
    const Spectrum s = Spectrum::diagonal({1.0, 2.0});
    const auto rho = pseudo_thermal_state(0.58, s, 0.0);
    EXPECT_NEAR(rho.population(0), 0.6410674063348171, 1e-12);
    EXPECT_NEAR(rho.population(1), 1.0 - 0.6410674063348171, 1e-12);
    EXPECT_NEAR((rho.matrix() * rho.matrix()).trace().real(), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(rho.coherence(0, 1)), std::sqrt(rho.population(0) * rho.population(1)), 1e-12);
}

TEST(PseudoThermalState, CoherenceDoesNotChangeDiagonal) {
    const Spectrum s = Spectrum::diagonal({1.0, 2.0});
    for (double beta : {0.0, 0.58, 1.11, 1.75, 5.0})
        for (double phase : {0.0, 0.4, 2.0, -3.0}) {
            const auto a = pseudo_thermal_state(beta, s);
            const auto b = pseudo_thermal_state(beta, s, phase);
            EXPECT_NEAR(a.population(0), b.population(0), 1e-12);
            EXPECT_NEAR(a.population(1), b.population(1), 1e-12);
        }
}

TEST(PseudoThermalState, CoherentVariantNeedsTwoLevels) {
    EXPECT_THROW(pseudo_thermal_state(1.0, Spectrum::diagonal({0.0, 1.0, 2.0}), 0.0), std::invalid_argument);
}

TEST(RfUnitary, SpecialAreas) {
    EXPECT_LT(max_abs(rf_unitary(0.0).matrix() - Matrix::Identity(2, 2)), 1e-15);

    const Matrix pi_pulse = rf_unitary(std::numbers::pi).matrix();
    EXPECT_LT(max_abs(pi_pulse - Complex(0, -1) * pauli_x()), 1e-15);

    Vector excited(2);
    excited << 0, 1;
    const Vector out = rf_unitary(std::numbers::pi / 2.0, 0.7).matrix() * excited;
    EXPECT_NEAR(std::norm(out(0)), 0.5, 1e-15);
    EXPECT_NEAR(std::norm(out(1)), 0.5, 1e-15);
}

TEST(RfUnitary, AlwaysUnitary) {
    for (int k = 0; k < 50; ++k) {
        const auto u = rf_unitary(0.37 * k, -1.3 + 0.11 * k);
        EXPECT_LT(unitarity_error(u.matrix()), 1e-12);
    }
}

TEST(RandomUnitary, UnitaryAndDeterministic) {
    for (int dim : {1, 2, 3, 4, 7})
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const auto u = random_unitary(dim, seed);
            ASSERT_LT(unitarity_error(u.matrix()), 1e-12);
        }
    EXPECT_EQ(random_unitary(4, 99).matrix(), random_unitary(4, 99).matrix());
    EXPECT_NE(random_unitary(4, 99).matrix(), random_unitary(4, 100).matrix());
}

TEST(RandomUnitary, HaarSecondMoment) {
    // E|U_11|^2 = 1/D and E|U_11|^4 = 2/(D(D+1)) for Haar unitaries.
    for (int dim : {2, 3, 4}) {
        const int samples = 20000;
        double m2 = 0.0, m4 = 0.0;
        for (int s = 0; s < samples; ++s) {
            const double a = std::norm(random_unitary(dim, 1000000 + static_cast<std::uint64_t>(s)).matrix()(0, 0));
            m2 += a;
            m4 += a * a;
        }
        m2 /= samples;
        m4 /= samples;
        const double var = 2.0 / (dim * (dim + 1.0)) - 1.0 / (dim * dim);
        EXPECT_NEAR(m2, 1.0 / dim, 5.0 * std::sqrt(var / samples)) << "dim " << dim;
        EXPECT_NEAR(m4, 2.0 / (dim * (dim + 1.0)), 0.02) << "dim " << dim;
    }
}

TEST(DrivingUnitary, RejectsNonUnitary) {
    Matrix m = Matrix::Identity(2, 2);
    m(0, 0) = 1.01;
    EXPECT_THROW(DrivingUnitary(m, "bad"), std::invalid_argument);
}
