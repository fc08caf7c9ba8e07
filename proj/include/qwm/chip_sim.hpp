#pragma once

// Monte Carlo emulation of the atom-chip work meter: branch sampling with the
// exact TPM probabilities, ballistic flag-state trajectories, time-of-flight
// imaging, and the inverse problem (cloud detection, Gaussian fits, atom
// counting, trajectory inversion to work values).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qwm/ancilla_meter.hpp"
#include "qwm/chip_config.hpp"
#include "qwm/csv.hpp"
#include "qwm/gaussian_fit.hpp"
#include "qwm/quantum_core.hpp"
#include "qwm/rng.hpp"
#include "qwm/work_distribution.hpp"

namespace qwm {

/// The quantum side of a run: two-level Hamiltonians, initial state, RF driving.
struct PreparedSystem {
    HamiltonianPair pair;
    QuantumState state;
    DrivingUnitary driving;
    WorkDistribution distribution;
};

inline PreparedSystem prepare_system(const ExperimentConfig& c) {
    HamiltonianPair pair = HamiltonianPair::two_level(c.energy_ratio);
    QuantumState state = pseudo_thermal_state(c.beta_E, pair.initial(),
                                              c.coherent_initial_state ? std::optional<double>(0.0) : std::nullopt);
    DrivingUnitary driving = rf_unitary(c.rf_pulse_area, c.rf_axis_phase);
    WorkDistribution dist = tpm_distribution(state, pair, driving).with_beta(c.beta_E);
    return {std::move(pair), std::move(state), std::move(driving), std::move(dist)};
}

/// Forward model for one (n, m) branch at imaging time.
struct CloudModel {
    int n = 0;
    int m = 0;
    double work = 0.0;        // units of E
    double probability = 0.0; // exact P(w_nm)
    double center = 0.0;      // m
    double packet_spread = 0.0;
    double image_width = 0.0; // packet spread combined with the optical blur
};

struct ShotPerturbation {
    double kick_scale = 1.0;
    double kick_tilde_scale = 1.0;
    double z0_shift = 0.0;
};

/// Flag-state trajectories: release at z0 with zero momentum, fall, kick
/// delta_p * E_n, fall, kick delta_p_tilde * E~_m / ratio, fall to the image.
inline std::vector<CloudModel> cloud_schedule(const ExperimentConfig& c, const HamiltonianPair& pair,
                                              const WorkDistribution& dist, const ShotPerturbation& shot = {}) {
    const double kick = c.kick() * shot.kick_scale;
    const double kick_tilde = c.kick_tilde() * shot.kick_tilde_scale;
    GaussianWavepacket start{c.z0 + shot.z0_shift, 0.0, c.sigma, c.mass};
    start.validate();
    const GaussianWavepacket at_first = free_fall(start, c.first_kick_time(), c.gravity);
    std::vector<CloudModel> clouds;
    for (const auto& e : dist.entries()) {
        const double level = pair.initial().level(e.n).energy;
        const double level_tilde = pair.final_side().level(e.m).energy / c.energy_ratio;
        GaussianWavepacket p = momentum_kick(at_first, kick * level);
        p = free_fall(p, c.time_between_kicks(), c.gravity);
        p = momentum_kick(p, kick_tilde * level_tilde);
        p = free_fall(p, c.time_after_second_kick(), c.gravity);
        const double spread = p.position_spread();
        clouds.push_back({e.n, e.m, e.work, e.probability, p.position, spread,
                          std::hypot(spread, c.imaging.optical_blur)});
    }
    return clouds;
}

/// Binned 1-D optical-density profile along z.
struct CloudImage {
    std::vector<double> edges;  // bins + 1 edges, m
    std::vector<double> values; // detected signal per bin (atoms)
    double total_signal = 0.0;
    bool overlap_warning = false;
    std::uint64_t atoms_outside = 0;
    std::vector<CloudModel> clouds; // forward-model truth; empty for images read from disk

    std::size_t bins() const { return values.size(); }
    double bin_center(std::size_t j) const { return 0.5 * (edges[j] + edges[j + 1]); }
    std::vector<double> bin_centers() const {
        std::vector<double> c(values.size());
        for (std::size_t j = 0; j < c.size(); ++j) c[j] = bin_center(j);
        return c;
    }
};

inline constexpr std::uint64_t kShotStream = 0xfffffffffffff001ULL;
inline constexpr std::uint64_t kDetectionStream = 0xfffffffffffff002ULL;
inline constexpr double kSeparabilityWidths = 6.0;

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

template <class Body>
void parallel_chunks(std::uint64_t count, Body&& body) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::uint64_t chunks = std::min<std::uint64_t>(hw, std::max<std::uint64_t>(1, count / 4096));
    if (chunks <= 1) {
        body(0, 0, count);
        return;
    }
    std::vector<std::thread> pool;
    for (std::uint64_t k = 0; k < chunks; ++k) {
        const std::uint64_t lo = count * k / chunks;
        const std::uint64_t hi = count * (k + 1) / chunks;
        pool.emplace_back([&body, k, lo, hi] { body(static_cast<std::size_t>(k), lo, hi); });
    }
    for (auto& t : pool) t.join();
}

} // namespace detail

/// Simulates one experimental shot. Deterministic in `config.seed` and
/// independent of the number of threads.
inline CloudImage simulate_run(const ExperimentConfig& c) {
    c.validate();
    const PreparedSystem sys = prepare_system(c);

    ShotPerturbation shot;
    const std::uint64_t shot_key = rng::derive(c.seed, kShotStream);
    {
        const auto [a, b] = rng::normal_pair(shot_key, 0);
        const auto [z, unused] = rng::normal_pair(shot_key, 1);
        (void)unused;
        shot.kick_scale = 1.0 + c.kick_jitter * a;
        shot.kick_tilde_scale = 1.0 + c.kick_jitter * b;
        shot.z0_shift = c.z0_jitter * z;
    }
    const std::vector<CloudModel> nominal = cloud_schedule(c, sys.pair, sys.distribution);
    CloudImage img;
    img.clouds = cloud_schedule(c, sys.pair, sys.distribution, shot);

    double lo = std::numeric_limits<double>::infinity(), hi = -lo, width = 0.0;
    for (const auto& cl : nominal) {
        lo = std::min(lo, cl.center);
        hi = std::max(hi, cl.center);
        width = std::max(width, cl.image_width);
    }
    const double margin = 10.0 * width + 20e-6;
    const double px = c.imaging.pixel_size;
    const double start = std::floor((lo - margin) / px) * px;
    const auto bins = static_cast<std::size_t>(std::ceil((hi + margin - start) / px));
    img.edges.resize(bins + 1);
    for (std::size_t j = 0; j <= bins; ++j) img.edges[j] = start + px * static_cast<double>(j);
    img.values.assign(bins, 0.0);

    std::vector<double> sorted_centers;
    for (const auto& cl : nominal)
        if (cl.probability > 0.0) sorted_centers.push_back(cl.center);
    std::sort(sorted_centers.begin(), sorted_centers.end());
    for (std::size_t k = 1; k < sorted_centers.size(); ++k)
        if (sorted_centers[k] - sorted_centers[k - 1] < kSeparabilityWidths * width) img.overlap_warning = true;

    const auto n_atoms = c.atom_count;
    if (c.exact_fractions) {
        for (const auto& cl : img.clouds) {
            if (cl.probability == 0.0) continue;
            const double s = cl.image_width;
            for (std::size_t j = 0; j < bins; ++j)
                img.values[j] += static_cast<double>(n_atoms) * cl.probability *
                                 (detail::normal_cdf((img.edges[j + 1] - cl.center) / s) -
                                  detail::normal_cdf((img.edges[j] - cl.center) / s));
        }
    } else {
        std::vector<double> cumulative;
        double acc = 0.0;
        for (const auto& cl : img.clouds) cumulative.push_back(acc += cl.probability);
        const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
        std::vector<std::vector<std::uint64_t>> partial(hw, std::vector<std::uint64_t>(bins, 0));
        std::vector<std::uint64_t> outside(hw, 0);
        const double blur = c.imaging.optical_blur;
        detail::parallel_chunks(n_atoms, [&](std::size_t chunk, std::uint64_t first, std::uint64_t last) {
            auto& counts = partial[chunk];
            for (std::uint64_t i = first; i < last; ++i) {
                const std::uint64_t key = rng::derive(c.seed, i);
                const double u = rng::uniform(key, 0) * acc;
                std::size_t b = 0;
                while (b + 1 < cumulative.size() && u > cumulative[b]) ++b;
                const CloudModel& cl = img.clouds[b];
                const auto [g1, g2] = rng::normal_pair(key, 1);
                const double z = cl.center + cl.packet_spread * g1 + blur * g2;
                const double pos = (z - start) / px;
                if (pos < 0.0 || pos >= static_cast<double>(bins)) {
                    ++outside[chunk];
                    continue;
                }
                ++counts[static_cast<std::size_t>(pos)];
            }
        });
        for (std::size_t k = 0; k < partial.size(); ++k) {
            img.atoms_outside += outside[k];
            for (std::size_t j = 0; j < bins; ++j) img.values[j] += static_cast<double>(partial[k][j]);
        }
        if (c.imaging.detection_noise) {
            const std::uint64_t key = rng::derive(c.seed, kDetectionStream);
            for (std::size_t j = 0; j < bins; ++j)
                img.values[j] = static_cast<double>(rng::poisson(key, j, img.values[j]));
        }
    }
    img.total_signal = std::accumulate(img.values.begin(), img.values.end(), 0.0);
    return img;
}

inline void write_image_csv(std::ostream& os, const CloudImage& img) {
    csv::write_row(os, {"z", "optical_density"});
    for (std::size_t j = 0; j < img.bins(); ++j) csv::write_row(os, {csv::num(img.bin_center(j)), csv::num(img.values[j])});
}

/// Reads a (bin center, optical density) CSV written by write_image_csv. Bins must be uniform.
inline CloudImage read_image_csv(std::istream& in) {
    std::string line;
    std::vector<double> z, v;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cells = csv::split(line);
        if (header) {
            header = false;
            if (cells.size() >= 1 && !cells[0].empty() && (std::isalpha(static_cast<unsigned char>(cells[0][0]))))
                continue;
        }
        if (cells.size() < 2) throw ConfigError("image CSV row needs two columns: '" + line + "'");
        try {
            z.push_back(std::stod(cells[0]));
            v.push_back(std::stod(cells[1]));
        } catch (const std::exception&) {
            throw ConfigError("malformed image CSV row: '" + line + "'");
        }
    }
    if (z.size() < 2) throw ConfigError("image CSV needs at least two bins");
    const double h = (z.back() - z.front()) / static_cast<double>(z.size() - 1);
    if (!(h > 0.0)) throw ConfigError("image bins must be increasing");
    CloudImage img;
    img.values = v;
    img.edges.resize(z.size() + 1);
    img.edges[0] = z.front() - 0.5 * h;
    for (std::size_t j = 1; j < z.size(); ++j) img.edges[j] = 0.5 * (z[j - 1] + z[j]);
    img.edges.back() = z.back() + 0.5 * h;
    for (double x : v)
        if (x < 0.0) throw ConfigError("negative optical density in image");
    img.total_signal = std::accumulate(v.begin(), v.end(), 0.0);
    return img;
}

struct AnalysisOptions {
    double window_widths = 4.0;          // counting window, in fitted widths
    double min_separation_widths = 3.0;  // between accepted peaks, in expected widths
    double min_cloud_signal = 10.0;      // atoms
    double min_cloud_fraction = 1e-4;    // of the total signal
    double match_fraction = 0.5;         // of the smallest predicted spacing
};

struct CloudFit {
    int n = -1;
    int m = -1;
    double center = 0.0;
    double width = 0.0;
    double amplitude = 0.0;
    double signal = 0.0;   // windowed optical density
    double fraction = 0.0; // normalized over matched clouds
    double momentum_shift = 0.0; // along +z, kg m/s
    double work = 0.0;           // inferred, units of E
    double expected_work = 0.0;
    bool fit_converged = false;
};

struct RunResult {
    std::vector<CloudFit> clouds; // detected and matched, ordered by position
    WorkDistribution distribution; // all (n, m) outcomes; missing clouds carry probability 0
    std::vector<std::pair<int, int>> missing;
    std::vector<std::string> diagnostics;
    bool overlap_warning = false;
    std::optional<double> recovered_kick;
    std::optional<double> recovered_kick_tilde;
    std::optional<double> recovered_energy_ratio;

    bool partial() const { return !missing.empty(); }
};

namespace detail {

inline std::vector<double> gaussian_smooth(const std::vector<double>& y, double sigma_bins) {
    if (sigma_bins < 0.5) return y;
    const int half = static_cast<int>(std::ceil(4.0 * sigma_bins));
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    double norm = 0.0;
    for (int k = -half; k <= half; ++k) norm += kernel[static_cast<std::size_t>(k + half)] = std::exp(-0.5 * k * k / (sigma_bins * sigma_bins));
    for (auto& k : kernel) k /= norm;
    std::vector<double> out(y.size(), 0.0);
    const auto n = static_cast<int>(y.size());
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = -half; k <= half; ++k) {
            const int j = i + k;
            if (j >= 0 && j < n) s += kernel[static_cast<std::size_t>(k + half)] * y[static_cast<std::size_t>(j)];
        }
        out[static_cast<std::size_t>(i)] = s;
    }
    return out;
}

/// Sum of bin contents over [lo, hi], splitting partially covered bins proportionally.
inline double window_sum(const CloudImage& img, double lo, double hi) {
    double s = 0.0;
    for (std::size_t j = 0; j < img.bins(); ++j) {
        const double a = std::max(lo, img.edges[j]);
        const double b = std::min(hi, img.edges[j + 1]);
        if (b > a) s += img.values[j] * (b - a) / (img.edges[j + 1] - img.edges[j]);
    }
    return s;
}

} // namespace detail

/// Recovers the pre-fall momentum record of a cloud centered at `z` that ended
/// in final level `m`, then w = -E p / delta_p.
inline double invert_trajectory(const ExperimentConfig& c, const HamiltonianPair& pair, int m, double z,
                                double* momentum_shift = nullptr) {
    const double t_total = c.imaging_time();
    const double t_between = c.time_between_kicks();
    const double t_after = c.time_after_second_kick();
    const auto corr = inter_pulse_fall_correction(pair.final_side(), c.lambda(), t_between, c.mass);
    const double z_gravity = c.z0 + 0.5 * c.gravity * t_total * t_total;
    const double p = c.mass * (z - z_gravity - corr.level_displacement[static_cast<std::size_t>(m)]) /
                     (t_between + t_after);
    if (momentum_shift) *momentum_shift = p;
    return -p / c.lambda();
}

inline RunResult analyze_image(const CloudImage& img, const ExperimentConfig& c, const AnalysisOptions& opt = {}) {
    c.validate();
    if (img.bins() < 3) throw NumericalError("image has too few bins");
    const PreparedSystem sys = prepare_system(c);
    const std::vector<CloudModel> predicted = cloud_schedule(c, sys.pair, sys.distribution);
    RunResult result;
    result.overlap_warning = img.overlap_warning;

    double width = 0.0;
    for (const auto& p : predicted) width = std::max(width, p.image_width);
    const double px = img.edges[1] - img.edges[0];
    const std::vector<double> z = img.bin_centers();

    // Peak candidates from the smoothed profile.
    const double smooth_bins = 0.5 * width / px;
    const std::vector<double> smooth = detail::gaussian_smooth(img.values, smooth_bins);
    struct Candidate {
        std::size_t bin;
        double signal;
    };
    std::vector<Candidate> candidates;
    for (std::size_t j = 1; j + 1 < smooth.size(); ++j) {
        if (!(smooth[j] > smooth[j - 1] && smooth[j] >= smooth[j + 1])) continue;
        const double signal = detail::window_sum(img, z[j] - 2.0 * width, z[j] + 2.0 * width) / 0.9545;
        candidates.push_back({j, signal});
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) { return a.signal > b.signal; });
    const double min_signal = std::max(opt.min_cloud_signal, opt.min_cloud_fraction * img.total_signal);
    const std::size_t max_clouds = predicted.size();
    std::vector<std::size_t> peaks;
    for (const auto& cand : candidates) {
        if (peaks.size() >= max_clouds) break;
        if (cand.signal < min_signal) break;
        bool far = true;
        for (std::size_t p : peaks)
            if (std::abs(z[p] - z[cand.bin]) < opt.min_separation_widths * width) far = false;
        if (far) peaks.push_back(cand.bin);
    }
    std::sort(peaks.begin(), peaks.end());
    if (peaks.empty()) throw NumericalError("no clouds detected in image");

    // Joint Gaussian fit around the detected peaks.
    std::vector<GaussianComponent> init;
    const double smoothing_loss = std::sqrt(1.0 + (smooth_bins * px / width) * (smooth_bins * px / width));
    for (std::size_t p : peaks) init.push_back({smooth[p] * smoothing_loss, z[p], width});
    const double fit_lo = z[peaks.front()] - 6.0 * width;
    const double fit_hi = z[peaks.back()] + 6.0 * width;
    std::vector<double> fx, fy;
    for (std::size_t j = 0; j < img.bins(); ++j)
        if (z[j] >= fit_lo && z[j] <= fit_hi) {
            fx.push_back(z[j]);
            fy.push_back(img.values[j]);
        }
    GaussianFitResult fit = fit_gaussians(fx, fy, init);
    std::vector<GaussianComponent> comps = fit.components;
    bool usable = fit.converged;
    for (std::size_t k = 0; k < comps.size(); ++k)
        if (!(comps[k].width > 0.0) || std::abs(comps[k].center - init[k].center) > 3.0 * width) usable = false;
    if (!usable) {
        result.diagnostics.push_back("joint Gaussian fit did not converge; falling back to peak positions");
        comps = init;
    }
    std::sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) { return a.center < b.center; });

    // Counting windows: +-window_widths fitted widths, ties split at midpoints.
    std::vector<CloudFit> fits;
    for (std::size_t k = 0; k < comps.size(); ++k) {
        double lo = comps[k].center - opt.window_widths * comps[k].width;
        double hi = comps[k].center + opt.window_widths * comps[k].width;
        if (k > 0) lo = std::max(lo, 0.5 * (comps[k - 1].center + comps[k].center));
        if (k + 1 < comps.size()) hi = std::min(hi, 0.5 * (comps[k].center + comps[k + 1].center));
        CloudFit f;
        f.center = comps[k].center;
        f.width = comps[k].width;
        f.amplitude = comps[k].amplitude;
        f.signal = detail::window_sum(img, lo, hi);
        f.fit_converged = usable;
        fits.push_back(f);
    }

    // Assign each fitted cloud to the nearest predicted (n, m) branch.
    double min_spacing = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < predicted.size(); ++a)
        for (std::size_t b = a + 1; b < predicted.size(); ++b)
            min_spacing = std::min(min_spacing, std::abs(predicted[a].center - predicted[b].center));
    const double tolerance = std::isfinite(min_spacing) ? opt.match_fraction * min_spacing
                                                        : std::numeric_limits<double>::infinity();
    struct Pair {
        double distance;
        std::size_t fit, model;
    };
    std::vector<Pair> pairs;
    for (std::size_t f = 0; f < fits.size(); ++f)
        for (std::size_t p = 0; p < predicted.size(); ++p)
            pairs.push_back({std::abs(fits[f].center - predicted[p].center), f, p});
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.distance < b.distance; });
    std::vector<int> fit_to_model(fits.size(), -1), model_to_fit(predicted.size(), -1);
    for (const auto& pr : pairs) {
        if (pr.distance > tolerance) break;
        if (fit_to_model[pr.fit] >= 0 || model_to_fit[pr.model] >= 0) continue;
        fit_to_model[pr.fit] = static_cast<int>(pr.model);
        model_to_fit[pr.model] = static_cast<int>(pr.fit);
    }

    double matched_signal = 0.0;
    for (std::size_t f = 0; f < fits.size(); ++f) {
        if (fit_to_model[f] < 0) {
            result.diagnostics.push_back("cloud at z = " + csv::num(fits[f].center) + " matches no work outcome");
            continue;
        }
        matched_signal += fits[f].signal;
    }
    if (!(matched_signal > 0.0)) throw NumericalError("no detected cloud matches a work outcome");

    std::vector<WorkEntry> entries;
    for (std::size_t p = 0; p < predicted.size(); ++p) {
        const auto& model = predicted[p];
        WorkEntry e{model.n, model.m, model.work, 0.0, false};
        if (model_to_fit[p] >= 0) {
            CloudFit& f = fits[static_cast<std::size_t>(model_to_fit[p])];
            f.n = model.n;
            f.m = model.m;
            f.expected_work = model.work;
            f.fraction = f.signal / matched_signal;
            f.work = invert_trajectory(c, sys.pair, model.m, f.center, &f.momentum_shift);
            e.work = f.work;
            e.probability = f.fraction;
        } else {
            result.missing.emplace_back(model.n, model.m);
        }
        entries.push_back(e);
    }
    for (const auto& f : fits)
        if (f.n >= 0) result.clouds.push_back(f);
    result.distribution = WorkDistribution::empirical(std::move(entries), c.beta_E);

    // Self-calibration of the two kicks from cloud spacings (two-level case).
    if (sys.pair.dim() == 2 && result.clouds.size() == 4) {
        auto center = [&](int n, int m) {
            for (const auto& f : result.clouds)
                if (f.n == n && f.m == m) return f.center;
            return std::numeric_limits<double>::quiet_NaN();
        };
        const double t_total = c.imaging_time();
        const double de = sys.pair.initial().level(1).energy - sys.pair.initial().level(0).energy;
        const double de_tilde =
            (sys.pair.final_side().level(1).energy - sys.pair.final_side().level(0).energy) / c.energy_ratio;
        const double dz_n = 0.5 * ((center(1, 0) - center(0, 0)) + (center(1, 1) - center(0, 1)));
        const double dz_m = 0.5 * ((center(0, 1) - center(0, 0)) + (center(1, 1) - center(1, 0)));
        result.recovered_kick = c.mass * dz_n / (de * (t_total - c.first_kick_time()));
        result.recovered_kick_tilde = c.mass * dz_m / (de_tilde * (t_total - c.second_kick_time()));
        result.recovered_energy_ratio = -*result.recovered_kick_tilde / *result.recovered_kick;
    }
    return result;
}

inline void write_run_result_csv(std::ostream& os, const RunResult& r) {
    csv::write_row(os, {"n", "m", "detected", "center", "width", "fraction", "momentum_shift", "work",
                        "expected_work"});
    for (const auto& e : r.distribution.entries()) {
        const CloudFit* f = nullptr;
        for (const auto& c : r.clouds)
            if (c.n == e.n && c.m == e.m) f = &c;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        csv::write_row(os, {std::to_string(e.n + 1), std::to_string(e.m + 1), f ? "1" : "0",
                            csv::num(f ? f->center : nan), csv::num(f ? f->width : nan),
                            csv::num(e.probability), csv::num(f ? f->momentum_shift : nan), csv::num(e.work),
                            csv::num(f ? f->expected_work : e.work)});
    }
}

struct SweepRow {
    double beta_E = 0.0;
    double rf_area = 0.0;
    int rep = 0;
    double g = std::numeric_limits<double>::quiet_NaN();
    std::optional<WorkDistribution> distribution;
    std::string error;
};

struct SweepPoint {
    double beta_E = 0.0;
    double rf_area = 0.0;
    double mean_g = 0.0;
    double sem = 0.0;
    std::size_t count = 0;
};

struct SweepTemperature {
    double beta_E = 0.0;
    FreeEnergyEstimate jarzynski; // pooled over all areas and repetitions
    double partition_function = 0.0; // ln(Z / Z~)
};

struct SweepTable {
    std::vector<SweepRow> rows;
    std::vector<SweepPoint> points;
    std::vector<SweepTemperature> temperatures;
    std::vector<std::string> errors;

    std::vector<WorkDistribution> distributions(double beta_E) const {
        std::vector<WorkDistribution> out;
        for (const auto& r : rows)
            if (r.beta_E == beta_E && r.distribution) out.push_back(*r.distribution);
        return out;
    }
};

/// Runs the full pipeline (or the exact distribution when `exact`) for every
/// (beta, area, repetition). Per-run failures are recorded, not thrown.
inline SweepTable jarzynski_sweep(const ExperimentConfig& config, const std::vector<double>& rf_areas,
                                  const std::vector<double>& betas, int repetitions, bool exact = false,
                                  const AnalysisOptions& analysis = {}) {
    if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
    SweepTable table;
    for (std::size_t bi = 0; bi < betas.size(); ++bi) {
        std::vector<WorkDistribution> pooled;
        for (std::size_t ai = 0; ai < rf_areas.size(); ++ai) {
            std::vector<double> gs;
            for (int rep = 0; rep < (exact ? 1 : repetitions); ++rep) {
                ExperimentConfig c = config;
                c.beta_E = betas[bi];
                c.rf_pulse_area = rf_areas[ai];
                c.seed = rng::derive(config.seed, (bi * 4096 + ai) * 4096 + static_cast<std::uint64_t>(rep));
                SweepRow row{c.beta_E, c.rf_pulse_area, rep, std::numeric_limits<double>::quiet_NaN(), std::nullopt, {}};
                try {
                    WorkDistribution d = exact ? prepare_system(c).distribution
                                               : analyze_image(simulate_run(c), c, analysis).distribution;
                    row.g = jarzynski_average(d, c.beta_E).g;
                    row.distribution = d;
                    gs.push_back(row.g);
                    pooled.push_back(d);
                } catch (const std::exception& e) {
                    row.error = e.what();
                    table.errors.push_back("beta_E=" + csv::num(c.beta_E) + " area=" + csv::num(c.rf_pulse_area) +
                                           " rep=" + std::to_string(rep) + ": " + e.what());
                }
                table.rows.push_back(std::move(row));
            }
            SweepPoint pt{betas[bi], rf_areas[ai], std::numeric_limits<double>::quiet_NaN(), 0.0, gs.size()};
            if (!gs.empty()) {
                pt.mean_g = std::accumulate(gs.begin(), gs.end(), 0.0) / static_cast<double>(gs.size());
                if (gs.size() > 1) {
                    double ss = 0.0;
                    for (double g : gs) ss += (g - pt.mean_g) * (g - pt.mean_g);
                    pt.sem = std::sqrt(ss / static_cast<double>(gs.size() - 1) / static_cast<double>(gs.size()));
                }
            }
            table.points.push_back(pt);
        }
        SweepTemperature t;
        t.beta_E = betas[bi];
        t.partition_function = delta_f_from_partition(HamiltonianPair::two_level(config.energy_ratio), betas[bi]);
        if (!pooled.empty()) t.jarzynski = delta_f_from_samples(pooled, betas[bi]);
        table.temperatures.push_back(std::move(t));
    }
    return table;
}

/// Per-run rows: beta_E, rf_area, rep, G, SEM of G at that (beta, area), P_nm...
inline void write_sweep_csv(std::ostream& os, const SweepTable& t) {
    std::vector<std::string> header = {"beta_E", "rf_area", "rep", "G", "sem"};
    std::size_t width = 0;
    for (const auto& r : t.rows)
        if (r.distribution) {
            for (const auto& e : r.distribution->entries())
                header.push_back("P_" + std::to_string(e.n + 1) + std::to_string(e.m + 1));
            width = r.distribution->size();
            break;
        }
    csv::write_row(os, header);
    for (const auto& r : t.rows) {
        double sem = std::numeric_limits<double>::quiet_NaN();
        for (const auto& p : t.points)
            if (p.beta_E == r.beta_E && p.rf_area == r.rf_area) sem = p.sem;
        std::vector<std::string> cells = {csv::num(r.beta_E), csv::num(r.rf_area), std::to_string(r.rep),
                                          csv::num(r.g), csv::num(sem)};
        for (std::size_t k = 0; k < width; ++k)
            cells.push_back(r.distribution ? csv::num(r.distribution->entries()[k].probability) : "nan");
        csv::write_row(os, cells);
    }
}

inline void write_sweep_summary_csv(std::ostream& os, const SweepTable& t) {
    csv::write_row(os, {"beta_E", "rf_area", "G_mean", "sem", "runs", "beta_dF_PF"});
    for (const auto& p : t.points) {
        double pf = std::numeric_limits<double>::quiet_NaN();
        for (const auto& temp : t.temperatures)
            if (temp.beta_E == p.beta_E) pf = temp.partition_function;
        csv::write_row(os, {csv::num(p.beta_E), csv::num(p.rf_area), csv::num(p.mean_g), csv::num(p.sem),
                            std::to_string(p.count), csv::num(pf)});
    }
}

} // namespace qwm
