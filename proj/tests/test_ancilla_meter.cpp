#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "qwm/ancilla_meter.hpp"

using namespace qwm;

namespace {

const HamiltonianPair kChipPair = HamiltonianPair::two_level(0.56);
constexpr double kLambda = 1.762e-27; // kg m/s per unit energy
constexpr double kSigma = 2e-6;

GaussianWavepacket packet(double sigma = kSigma) {
    GaussianWavepacket p;
    p.sigma = sigma;
    return p;
}

} // namespace

TEST(MomentumKick, GroupProperty) {
    const auto p0 = packet();
    const auto zero = momentum_kick(p0, 0.0);
    EXPECT_EQ(zero.momentum, p0.momentum);
    EXPECT_EQ(zero.position, p0.position);

    const auto back = momentum_kick(momentum_kick(p0, kLambda), -kLambda);
    EXPECT_NEAR(back.momentum, p0.momentum, 1e-40);
    EXPECT_EQ(back.sigma, p0.sigma);

    // m_F = 2 picks up twice the elementary kick.
    EXPECT_DOUBLE_EQ(momentum_kick(p0, 2.0 * kLambda).momentum, 2.0 * kLambda);
}

TEST(FreeFall, IdentityAndGravity) {
    const auto p0 = packet();
    const auto same = free_fall(p0, 0.0);
    EXPECT_EQ(same.position, p0.position);
    EXPECT_NEAR(same.position_spread(), kSigma / std::numbers::sqrt2, 1e-20);

    const double t = 18.2e-3, g = constants::standard_gravity;
    const auto fallen = free_fall(p0, t, g);
    EXPECT_NEAR(fallen.position, 0.5 * g * t * t, 1e-15);
    EXPECT_NEAR(fallen.momentum, p0.mass * g * t, 1e-40);
    EXPECT_THROW(free_fall(p0, -1.0), std::invalid_argument);
}

TEST(FreeFall, WidthSpreading) {
    const double t = 20e-3;
    const auto fallen = free_fall(packet(), t);
    const double r = constants::hbar * t / (constants::rb87_mass * kSigma * kSigma);
    EXPECT_NEAR(fallen.position_spread(), kSigma / std::numbers::sqrt2 * std::sqrt(1.0 + r * r), 1e-20);
    EXPECT_GT(fallen.position_spread(), kSigma / std::numbers::sqrt2);
}

TEST(FreeFall, KickedPacketFollowsWorkTrajectory) {
    const double t = 20e-3, g = constants::standard_gravity;
    for (double w : {-1.44, -0.88, -0.44, 0.0, 0.12}) {
        const auto fallen = free_fall(momentum_kick(packet(), -kLambda * w), t, g);
        const double expected = -w * kLambda * t / constants::rb87_mass + 0.5 * g * t * t;
        EXPECT_NEAR(fallen.position, expected, 1e-12 * std::abs(expected));
    }
}

TEST(FlagStates, CentersFollowWorkValues) {
    const auto rho = pseudo_thermal_state(0.58, kChipPair.initial());
    const auto dist = tpm_distribution(rho, kChipPair, rf_unitary(std::numbers::pi / 2));
    const auto set = flag_states(dist, packet(), kLambda);
    ASSERT_EQ(set.flags.size(), 4u);
    const double expected[2][2] = {{-0.44, 0.12}, {-1.44, -0.88}};
    double total = 0.0;
    for (const auto& f : set.flags) {
        EXPECT_NEAR(f.packet.momentum, kLambda * expected[f.n][f.m], 1e-12 * kLambda);
        EXPECT_EQ(f.packet.sigma, kSigma);
        total += f.weight;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);

    const auto zero = flag_states(WorkDistribution({{0, 0, 0.0, 1.0}}), packet(), kLambda);
    EXPECT_EQ(zero.flags[0].packet.momentum, 0.0);
}

TEST(SmearedDensity, BumpMassesMatchWorkProbabilities) {
    const auto rho = pseudo_thermal_state(0.58, kChipPair.initial());
    for (double area : {0.3, std::numbers::pi / 2, 2.5}) {
        const auto u = rf_unitary(area);
        const auto dist = tpm_distribution(rho, kChipPair, u);
        const auto set = flag_states(dist, packet(), kLambda);
        const auto out = smeared_density(set, false, rho, kChipPair, u);
        const double dp = set.initial.momentum_spread();
        ASSERT_GT(0.44 * kLambda, 12.0 * dp);
        EXPECT_NEAR(out.integral, 1.0, 1e-6);
        for (const auto& f : set.flags) {
            const double c = f.packet.momentum;
            EXPECT_NEAR(out.mass(c - 6.0 * dp, c + 6.0 * dp), f.weight, 1e-6);
        }
        for (double v : out.density) EXPECT_GE(v, 0.0);
    }
}

TEST(SmearedDensity, SingleOutcomeIsOneGaussian) {
    const HamiltonianPair pair(Spectrum::diagonal({0.0}), Spectrum::diagonal({0.7}));
    const QuantumState rho(Matrix::Identity(1, 1));
    const auto dist = tpm_distribution(rho, pair, DrivingUnitary::identity(1));
    const auto set = flag_states(dist, packet(), kLambda);
    const auto out = smeared_density(set, true, rho, pair, DrivingUnitary::identity(1));
    std::size_t peak = 0;
    for (std::size_t i = 0; i < out.grid.size(); ++i) {
        if (out.density[i] > out.density[peak]) peak = i;
        EXPECT_NEAR(out.density[i], set.initial.momentum_density(out.grid[i] - 0.7 * kLambda), 1e-9 * out.density[peak] + 1e-300);
    }
    EXPECT_NEAR(out.grid[peak], 0.7 * kLambda, out.step());
    EXPECT_NEAR(out.integral, 1.0, 1e-9);
}

TEST(SmearedDensity, CoherenceTermsStayBelowBound) {
    const auto u = rf_unitary(std::numbers::pi / 2);
    const auto rho = pseudo_thermal_state(0.58, kChipPair.initial(), 0.0);
    // From well separated down to heavily overlapping flag states.
    for (double scale : {1.0, 0.05, 0.02, 0.01, 0.003}) {
        const double lambda = kLambda * scale;
        const auto set = flag_states(tpm_distribution(rho, kChipPair, u), packet(), lambda);
        const auto out = smeared_density(set, true, rho, kChipPair, u);
        ASSERT_TRUE(out.bound.has_value());
        double sup = 0.0;
        for (double c : out.cross) sup = std::max(sup, std::abs(c));
        EXPECT_LE(sup, *out.bound * (1.0 + 1e-12)) << "scale " << scale;
        EXPECT_NEAR(out.integral, 1.0, 1e-6);
        for (double v : out.density) EXPECT_GE(v, -1e-9 * set.initial.momentum_density(0.0));
    }
}

TEST(CoherenceBound, Examples) {
    const auto u = rf_unitary(1.1);
    EXPECT_EQ(coherence_error_bound(pseudo_thermal_state(0.58, kChipPair.initial()), kChipPair, u, kLambda, kSigma), 0.0);

    const auto rho = pseudo_thermal_state(0.58, kChipPair.initial(), 0.4);
    const double worst = coherence_error_bound(rho, kChipPair, u, 0.0, kSigma);
    double traces = 0.0;
    for (int n = 0; n < 2; ++n)
        for (int m = 0; m < 2; ++m) {
            const Matrix& pm = kChipPair.final_side().level(m).projector;
            const Matrix& pn = kChipPair.initial().level(n).projector;
            const Matrix& pn2 = kChipPair.initial().level(1 - n).projector;
            traces += std::abs((pm * u.matrix() * pn * rho.matrix() * pn2 * u.matrix().adjoint()).trace());
        }
    EXPECT_NEAR(worst, traces * kSigma / (constants::hbar * std::sqrt(std::numbers::pi)), 1e-12 * worst);

    // Doubling lambda multiplies the single-gap bound by exp(-3 sigma^2 lambda^2 dE^2 / (4 hbar^2)).
    const double lambda = 0.01 * kLambda;
    const double ratio = coherence_error_bound(rho, kChipPair, u, 2.0 * lambda, kSigma) /
                         coherence_error_bound(rho, kChipPair, u, lambda, kSigma);
    const double x = kSigma * lambda / constants::hbar;
    EXPECT_NEAR(ratio, std::exp(-3.0 * x * x / 4.0), 1e-12);
}

TEST(CoherenceBound, StrictlyDecreasingInLambda) {
    const auto rho = pseudo_thermal_state(1.11, kChipPair.initial(), 1.0);
    const auto u = rf_unitary(0.8);
    double previous = coherence_error_bound(rho, kChipPair, u, 0.0, kSigma);
    for (int k = 1; k <= 40; ++k) {
        const double b = coherence_error_bound(rho, kChipPair, u, 0.002 * k * kLambda, kSigma);
        EXPECT_LT(b, previous);
        previous = b;
    }
}

TEST(SmearedDensity, CoarseGridIsAResolutionError) {
    const auto rho = pseudo_thermal_state(0.58, kChipPair.initial());
    const auto u = rf_unitary(1.0);
    const auto set = flag_states(tpm_distribution(rho, kChipPair, u), packet(), kLambda);
    SmearOptions opt;
    opt.min_points = 9;
    EXPECT_THROW(smeared_density(set, false, rho, kChipPair, u, opt), NumericalError);
}

TEST(InterPulseCorrection, LinearInTime) {
    const auto& fin = kChipPair.final_side();
    EXPECT_EQ(inter_pulse_fall_correction(fin, kLambda, 0.0, constants::rb87_mass).coefficient, 0.0);
    const auto one = inter_pulse_fall_correction(fin, kLambda, 3.1e-3, constants::rb87_mass);
    const auto two = inter_pulse_fall_correction(fin, kLambda, 6.2e-3, constants::rb87_mass);
    EXPECT_DOUBLE_EQ(two.coefficient, 2.0 * one.coefficient);
    EXPECT_DOUBLE_EQ(one.coefficient, kLambda * 3.1e-3 / constants::rb87_mass);
    ASSERT_EQ(one.level_displacement.size(), 2u);
    EXPECT_DOUBLE_EQ(one.level_displacement[1], one.coefficient * 1.12);
    EXPECT_TRUE(one.phase_probability_irrelevant);
    EXPECT_THROW(inter_pulse_fall_correction(fin, kLambda, -1.0, constants::rb87_mass), std::invalid_argument);
}
