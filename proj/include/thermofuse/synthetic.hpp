#pragma once

// Synthetic data: a reference camera, temperature scenes, calibration
// measurement grids and offset-block training corpora.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "thermofuse/burst.hpp"
#include "thermofuse/calibration.hpp"
#include "thermofuse/fusion.hpp"
#include "thermofuse/image.hpp"

namespace thermofuse::synthetic {

namespace stream {
inline constexpr std::uint64_t kScene = 4;
inline constexpr std::uint64_t kCorpus = 5;
inline constexpr std::uint64_t kMeasurement = 6;
}  // namespace stream

/// Degree-2 radial camera, gray levels for °C inputs. Responsivity falls off
/// toward the border while the self-heating offset grows, roughly the shape of
/// a 14-bit uncooled core.
inline calibration::RadialModel reference_radial_model() {
    calibration::RadialModel rm = calibration::RadialModel::zeros(2);
    rm.terms = {{
        {2.4e-4, 0.0, -3.6e-5},   // g0
        {1.5e-6, 0.0, 4.5e-7},    // g1
        {-2e-8, 0.0, -4e-9},      // g2
        {1e-10, 1e-11, 0.0},      // g3
        {6500.0, 0.0, 260.0},     // d0
        {35.0, 0.0, -1.75},       // d1
        {0.08, 0.0, 0.0},         // d2
        {-4e-4, 0.0, 0.0},        // d3
    }};
    return rm;
}

inline calibration::CoefficientTensor reference_camera(std::size_t height, std::size_t width) {
    return calibration::reconstruct_coeffs(reference_radial_model(), height, width);
}

struct SceneSpec {
    double base_min = 20.0;
    double base_max = 50.0;
    std::size_t blobs = 3;
    double amplitude = 5.0;  // blob peaks uniform in [-amplitude, amplitude]
    double sigma_min = 4.0;
    double sigma_max = 16.0;
};

/// Smooth field: uniform base plus Gaussian hot and cold spots.
inline TemperatureMap scene(std::size_t height, std::size_t width, std::uint64_t seed, const SceneSpec& spec = {}) {
    burst::Rng rng = burst::make_rng(seed, stream::kScene);
    std::uniform_real_distribution<double> base(spec.base_min, spec.base_max);
    std::uniform_real_distribution<double> cy(0.0, static_cast<double>(height));
    std::uniform_real_distribution<double> cx(0.0, static_cast<double>(width));
    std::uniform_real_distribution<double> sig(spec.sigma_min, spec.sigma_max);
    std::uniform_real_distribution<double> amp(-spec.amplitude, spec.amplitude);
    TemperatureMap x(height, width, base(rng));
    for (std::size_t k = 0; k < spec.blobs; ++k) {
        const double y0 = cy(rng);
        const double x0 = cx(rng);
        const double s = sig(rng);
        const double a = amp(rng);
        for (std::size_t r = 0; r < height; ++r) {
            for (std::size_t c = 0; c < width; ++c) {
                const double dy = static_cast<double>(r) - y0;
                const double dx = static_cast<double>(c) - x0;
                x(r, c) += a * std::exp(-(dy * dy + dx * dx) / (2.0 * s * s));
            }
        }
    }
    return x;
}

/// Noiseless uniform-target frames on the full (t_obj x t_amb) grid.
inline calibration::MeasurementSet measurement_grid(const calibration::CoefficientTensor& c,
                                                    std::span<const double> t_obj, std::span<const double> t_amb) {
    std::vector<calibration::MeasurementSample> samples;
    for (double a : t_amb) {
        for (double t : t_obj) {
            const TemperatureMap target(c.height(), c.width(), t);
            samples.push_back({t, a, calibration::synthesize_frame(target, a, c)});
        }
    }
    return calibration::MeasurementSet(std::move(samples));
}

/// Bursts that only carry sensor noise: every frame sees the pivot view, no
/// FPN and exact registration.
inline burst::BurstSpec static_burst_spec(std::size_t n_frames, std::uint64_t seed, double noise_sigma2 = 5.0) {
    burst::BurstSpec spec;
    spec.noise_sigma2 = noise_sigma2;
    spec.n_frames = n_frames;
    spec.overlap_min = spec.overlap_max = 1.0;
    spec.perturbation = {0.0, 0.0};
    spec.fpn_min = spec.fpn_max = 1.0;
    spec.seed = seed;
    return spec;
}

/// One offset-block training pair: the target is the gap between the mean
/// normalised truth and the mean kernel output over covered pixels.
inline fusion::OffsetSample offset_sample(const TemperatureMap& x, double t_amb,
                                          const calibration::CoefficientTensor& c, const burst::BurstSpec& spec,
                                          const fusion::KernelSpec& kernels) {
    if (!spec.normalize) throw ConfigError("offset samples are defined on normalised bursts");
    const burst::Burst b = burst::make_burst(x, t_amb, c, spec);
    const auto ks = fusion::kernel_provider(kernels, b.size(), b.height(), b.width());
    const Map gain_term = fusion::apply_kernels(b, ks);
    const Mask cov = fusion::coverage(b);
    const TemperatureMap xn = burst::normalize_temperature(x, spec.normalization.temperature_min,
                                                           spec.normalization.temperature_max);
    double truth = 0.0;
    double estimate = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < xn.size(); ++p) {
        if (!cov[p]) continue;
        truth += xn[p];
        estimate += gain_term[p];
        ++count;
    }
    if (count == 0) throw DomainError("offset sample burst covers no pixel");
    return {fusion::frame_means(b), t_amb, (truth - estimate) / static_cast<double>(count)};
}

struct CorpusSpec {
    std::size_t scenes = 500;
    std::size_t height = 64;
    std::size_t width = 64;
    SceneSpec scene{};
    double t_amb_min = -10.0;
    double t_amb_max = 50.0;
    std::size_t n_frames = 3;
    double noise_sigma2 = 5.0;
    fusion::KernelSpec kernels{};
    std::uint64_t seed = 7;
};

/// Independent scenes and ambient temperatures through static noisy bursts.
inline std::vector<fusion::OffsetSample> offset_corpus(const calibration::CoefficientTensor& c,
                                                       const CorpusSpec& spec) {
    burst::Rng rng = burst::make_rng(spec.seed, stream::kCorpus);
    std::uniform_real_distribution<double> amb(spec.t_amb_min, spec.t_amb_max);
    std::vector<fusion::OffsetSample> out;
    out.reserve(spec.scenes);
    for (std::size_t s = 0; s < spec.scenes; ++s) {
        const std::uint64_t scene_seed = rng();
        const double t_amb = amb(rng);
        const TemperatureMap x = scene(spec.height, spec.width, scene_seed, spec.scene);
        out.push_back(offset_sample(x, t_amb, c, static_burst_spec(spec.n_frames, scene_seed, spec.noise_sigma2), spec.kernels));
    }
    return out;
}

}  // namespace thermofuse::synthetic
