#pragma once

// Least-squares fit of a sum of Gaussian profiles A exp(-(z - c)^2 / (2 s^2))
// by Levenberg-Marquardt. Coordinates are rescaled internally so that the
// normal equations stay well conditioned for SI lengths.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace qwm {

struct GaussianComponent {
    double amplitude = 0.0;
    double center = 0.0;
    double width = 0.0; // standard deviation
};

struct GaussianFitResult {
    std::vector<GaussianComponent> components;
    double residual_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

inline GaussianFitResult fit_gaussians(const std::vector<double>& x, const std::vector<double>& y,
                                       std::vector<GaussianComponent> initial, int max_iterations = 200) {
    GaussianFitResult result;
    const std::size_t k = initial.size();
    if (k == 0 || x.size() != y.size() || x.size() < 3 * k) {
        result.components = std::move(initial);
        return result;
    }
    double len = 0.0, amp = 0.0;
    for (const auto& g : initial) {
        len = std::max(len, g.width);
        amp = std::max(amp, std::abs(g.amplitude));
    }
    if (!(len > 0.0)) len = 1.0;
    if (!(amp > 0.0)) amp = 1.0;
    const double origin = initial.front().center;

    const auto n = static_cast<Eigen::Index>(x.size());
    const auto np = static_cast<Eigen::Index>(3 * k);
    Eigen::VectorXd xs(n), ys(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        xs(i) = (x[static_cast<std::size_t>(i)] - origin) / len;
        ys(i) = y[static_cast<std::size_t>(i)] / amp;
    }
    Eigen::VectorXd theta(np);
    for (std::size_t j = 0; j < k; ++j) {
        theta(3 * j) = initial[j].amplitude / amp;
        theta(3 * j + 1) = (initial[j].center - origin) / len;
        theta(3 * j + 2) = initial[j].width / len;
    }

    auto residuals = [&](const Eigen::VectorXd& t, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r = -ys;
        if (jac) jac->setZero(n, np);
        for (std::size_t j = 0; j < k; ++j) {
            const double a = t(3 * j), c = t(3 * j + 1), s = t(3 * j + 2);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double d = (xs(i) - c) / s;
                const double e = std::exp(-0.5 * d * d);
                r(i) += a * e;
                if (jac) {
                    (*jac)(i, 3 * j) = e;
                    (*jac)(i, 3 * j + 1) = a * e * d / s;
                    (*jac)(i, 3 * j + 2) = a * e * d * d / s;
                }
            }
        }
    };

    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    residuals(theta, r, &jac);
    double cost = r.squaredNorm();
    double mu = 1e-3;
    int it = 0;
    for (; it < max_iterations; ++it) {
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * r;
        bool improved = false;
        for (int tries = 0; tries < 30; ++tries) {
            Eigen::MatrixXd a = jtj;
            a.diagonal().array() += mu * (jtj.diagonal().array() + 1e-12);
            const Eigen::VectorXd step = a.ldlt().solve(-grad);
            Eigen::VectorXd trial = theta + step;
            bool valid = true;
            for (std::size_t j = 0; j < k; ++j)
                if (!(trial(3 * j + 2) > 0.0)) valid = false;
            Eigen::VectorXd rt;
            if (valid) {
                residuals(trial, rt, nullptr);
                const double trial_cost = rt.squaredNorm();
                if (std::isfinite(trial_cost) && trial_cost <= cost) {
                    const double rel = (cost - trial_cost) / std::max(cost, 1e-300);
                    theta = trial;
                    cost = trial_cost;
                    mu = std::max(mu / 3.0, 1e-12);
                    improved = true;
                    if (rel < 1e-14 || step.norm() < 1e-12 * (theta.norm() + 1e-12)) {
                        result.converged = true;
                    }
                    break;
                }
            }
            mu *= 4.0;
        }
        if (!improved) {
            // No descent direction left: at a minimum to working precision.
            result.converged = true;
            break;
        }
        residuals(theta, r, &jac);
        if (result.converged) break;
    }

    result.iterations = it;
    result.residual_norm = std::sqrt(cost) * amp;
    result.components.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        result.components[j].amplitude = theta(3 * j) * amp;
        result.components[j].center = theta(3 * j + 1) * len + origin;
        result.components[j].width = std::abs(theta(3 * j + 2)) * len;
    }
    return result;
}

} // namespace qwm
