#pragma once

// Synthetic multi-frame bursts: camera path sampling, registration error,
// column fixed-pattern noise, read noise, normalisation and warping toward
// the pivot frame.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "thermofuse/calibration.hpp"
#include "thermofuse/error.hpp"
#include "thermofuse/homography.hpp"
#include "thermofuse/image.hpp"
#include "thermofuse/parallel.hpp"

namespace thermofuse::burst {

/// 14-bit ADC.
inline constexpr double kGrayLevelMax = 16383.0;

using Rng = std::mt19937_64;

/// Independent generator for one consumer of a seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

namespace stream {
inline constexpr std::uint64_t kPath = 1;
inline constexpr std::uint64_t kFpn = 2;
inline constexpr std::uint64_t kAugment = 3;
inline constexpr std::uint64_t kPerturbBase = 1000;
inline constexpr std::uint64_t kNoiseBase = 2000;
}  // namespace stream

enum class PathMode { walk, hover };

struct Perturbation {
    double max_translation_px = 2.0;   // uniform in [-max, max] on h13, h23
    double perspective_sigma = 5e-5;   // standard deviation on h31, h32
};

struct Normalization {
    double gray_min = 0.0;
    double gray_max = kGrayLevelMax;
    double temperature_min = -10.0;
    double temperature_max = 90.0;
};

struct BurstSpec {
    std::size_t n_frames = 7;
    PathMode mode = PathMode::hover;
    double overlap_min = 0.60;
    double overlap_max = 0.80;
    Perturbation perturbation{};
    double noise_sigma2 = 5.0;
    double fpn_min = 0.9;
    double fpn_max = 1.01;
    std::uint64_t seed = 42;
    bool quantize = true;
    bool normalize = true;
    Normalization normalization{};

    std::size_t pivot() const noexcept { return n_frames / 2; }

    void validate() const {
        if (n_frames < 1) throw ConfigError("burst needs at least one frame");
        if (!(overlap_min > 0.0 && overlap_min <= overlap_max && overlap_max <= 1.0)) {
            throw ConfigError("overlap range must satisfy 0 < min <= max <= 1");
        }
        if (!(perturbation.max_translation_px >= 0.0) || !(perturbation.perspective_sigma >= 0.0)) {
            throw ConfigError("perturbation magnitudes must be non-negative");
        }
        if (!(noise_sigma2 >= 0.0)) throw ConfigError("noise variance must be non-negative");
        if (!(fpn_min <= fpn_max)) throw ConfigError("FPN range must satisfy min <= max");
        if (!(normalization.gray_max > normalization.gray_min) ||
            !(normalization.temperature_max > normalization.temperature_min)) {
            throw ConfigError("normalization bounds must satisfy max > min");
        }
    }
};

namespace detail {

/// Translation magnitude along `angle` whose overlap with the pivot equals `target`.
inline double solve_translation(double angle, double target, Dims dims) {
    if (target >= 1.0) return 0.0;
    const double cx = std::cos(angle);
    const double cy = std::sin(angle);
    auto overlap_at = [&](double t) { return overlap(Homography::translation(t * cx, t * cy), dims); };
    double lo = 0.0;
    double hi = static_cast<double>(dims.width + dims.height);
    for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (overlap_at(mid) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// Frame-to-pivot homographies. The pivot (index N/2) is the identity; every
/// other frame overlaps the pivot by a fraction drawn from BurstSpec's overlap range.
/// Walk: frames sit on a common heading through the pivot, farther from it the
/// farther their index. Hover: each frame takes an independent direction.
inline std::vector<Homography> sample_path(const BurstSpec& spec, Dims dims) {
    spec.validate();
    if (dims.height < 2 || dims.width < 2) throw ConfigError("burst frames must be at least 2x2");
    const std::size_t n = spec.n_frames;
    const std::size_t pivot = spec.pivot();
    std::vector<Homography> path(n, Homography::identity());
    if (n == 1) return path;

    Rng rng = make_rng(spec.seed, stream::kPath);
    std::uniform_real_distribution<double> angle_dist(0.0, 2.0 * std::numbers::pi);
    auto draw_overlap = [&] {
        if (spec.overlap_min == spec.overlap_max) return spec.overlap_min;
        return std::uniform_real_distribution<double>(spec.overlap_min, spec.overlap_max)(rng);
    };

    auto place = [&](std::size_t index, double angle, double target) {
        const double t = detail::solve_translation(angle, target, dims);
        Homography h = Homography::translation(t * std::cos(angle), t * std::sin(angle));
        const double achieved = overlap(h, dims);
        if (achieved < spec.overlap_min - 1e-9 || achieved > spec.overlap_max + 1e-9) {
            throw ConfigError("cannot place frame " + std::to_string(index) + " at overlap " +
                              std::to_string(target) + " for " + std::to_string(dims.height) + "x" +
                              std::to_string(dims.width) + " frames");
        }
        path[index] = h;
    };

    if (spec.mode == PathMode::hover) {
        for (std::size_t i = 0; i < n; ++i) {
            if (i == pivot) continue;
            const double angle = angle_dist(rng);
            place(i, angle, draw_overlap());
        }
        return path;
    }

    const double heading = angle_dist(rng);
    std::normal_distribution<double> jitter(0.0, 0.05);
    auto walk_side = [&](std::size_t count, double direction, auto index_of) {
        std::vector<double> targets(count);
        for (auto& t : targets) t = draw_overlap();
        std::sort(targets.begin(), targets.end(), std::greater<>());
        for (std::size_t k = 0; k < count; ++k) place(index_of(k), direction + jitter(rng), targets[k]);
    };
    walk_side(pivot, heading + std::numbers::pi, [&](std::size_t k) { return pivot - 1 - k; });
    walk_side(n - 1 - pivot, heading, [&](std::size_t k) { return pivot + 1 + k; });
    return path;
}

/// Registration error: uniform translation on h13/h23 and Gaussian noise on h31/h32.
inline Homography perturb(const Homography& h, const Perturbation& p, Rng& rng) {
    Eigen::Matrix3d m = h.matrix();
    if (p.max_translation_px > 0.0) {
        std::uniform_real_distribution<double> shift(-p.max_translation_px, p.max_translation_px);
        m(0, 2) += shift(rng);
        m(1, 2) += shift(rng);
    }
    if (p.perspective_sigma > 0.0) {
        std::normal_distribution<double> persp(0.0, p.perspective_sigma);
        m(2, 0) += persp(rng);
        m(2, 1) += persp(rng);
    }
    return Homography(m);
}

/// Column pattern: every row is the same vector of w draws from U[u_min, u_max].
inline Map generate_fpn(std::size_t height, std::size_t width, double u_min, double u_max,
                        std::uint64_t seed) {
    if (!(u_min <= u_max)) throw DomainError("FPN range must satisfy u_min <= u_max");
    std::vector<double> columns(width, u_min);
    if (u_min < u_max) {
        Rng rng = make_rng(seed, stream::kFpn);
        std::uniform_real_distribution<double> u(u_min, u_max);
        for (auto& c : columns) c = u(rng);
    }
    Map fpn(height, width);
    for (std::size_t r = 0; r < height; ++r) std::copy(columns.begin(), columns.end(), fpn.row(r).begin());
    return fpn;
}

/// Adds i.i.d. N(0, sigma2) to every pixel.
inline GrayFrame add_noise(const GrayFrame& frame, double sigma2, Rng& rng) {
    if (!(sigma2 >= 0.0)) throw DomainError("noise variance must be non-negative");
    GrayFrame out = frame;
    if (sigma2 == 0.0) return out;
    std::normal_distribution<double> noise(0.0, std::sqrt(sigma2));
    for (auto& v : out) v += noise(rng);
    return out;
}

inline GrayFrame add_noise(const GrayFrame& frame, double sigma2, std::uint64_t seed) {
    Rng rng = make_rng(seed, stream::kNoiseBase);
    return add_noise(frame, sigma2, rng);
}

namespace detail {
inline Map affine_rescale(const Map& x, double lo, double hi, bool forward) {
    if (!(hi > lo)) throw DomainError("normalization needs max > min");
    Map out = x;
    const double span = hi - lo;
    for (auto& v : out) v = forward ? (v - lo) / span : v * span + lo;
    return out;
}
}  // namespace detail

inline TemperatureMap normalize_temperature(const TemperatureMap& x, double x_min, double x_max) {
    return detail::affine_rescale(x, x_min, x_max, true);
}
inline TemperatureMap denormalize_temperature(const TemperatureMap& x, double x_min, double x_max) {
    return detail::affine_rescale(x, x_min, x_max, false);
}
inline GrayFrame normalize_frame(const GrayFrame& i, double i_min, double i_max) {
    return detail::affine_rescale(i, i_min, i_max, true);
}
inline GrayFrame denormalize_frame(const GrayFrame& i, double i_min, double i_max) {
    return detail::affine_rescale(i, i_min, i_max, false);
}

/// Registered burst. `frames` are in pivot coordinates (normalised when
/// `normalized` is set); `raw_frames` are the camera outputs before registration.
struct Burst {
    std::vector<GrayFrame> frames;
    std::vector<Mask> masks;
    std::vector<GrayFrame> raw_frames;
    std::vector<Mask> view_masks;
    std::vector<Homography> true_homographies;          // frame -> pivot, ground truth
    std::vector<Homography> registration_homographies;  // frame -> pivot, as used for registration
    std::vector<double> overlaps;
    std::size_t pivot = 0;
    double t_amb = 0.0;
    bool normalized = false;
    Normalization normalization{};
    BurstSpec spec{};

    std::size_t size() const noexcept { return frames.size(); }
    std::size_t height() const noexcept { return frames.empty() ? 0 : frames.front().height(); }
    std::size_t width() const noexcept { return frames.empty() ? 0 : frames.front().width(); }

    void validate() const {
        if (frames.empty()) throw ShapeError("burst has no frames");
        if (masks.size() != frames.size()) throw ShapeError("burst mask count differs from frame count");
        for (std::size_t i = 0; i < frames.size(); ++i) {
            require_same_shape(frames[i], frames.front(), "burst frames");
            require_same_shape(masks[i], frames.front(), "burst masks");
        }
        if (pivot >= frames.size()) throw ShapeError("burst pivot index out of range");
    }

    /// Registered frames in gray levels regardless of normalisation.
    GrayFrame gray_frame(std::size_t i) const {
        return normalized ? denormalize_frame(frames[i], normalization.gray_min, normalization.gray_max)
                          : frames[i];
    }
};

/// Burst from frames already aligned with the pivot (identity registration).
inline Burst make_registered_burst(std::vector<GrayFrame> frames, std::vector<Mask> masks, double t_amb,
                                   bool normalized = false, Normalization norm = {}) {
    Burst b;
    if (masks.empty()) {
        for (const auto& f : frames) masks.push_back(full_mask(f.height(), f.width()));
    }
    b.frames = std::move(frames);
    b.masks = std::move(masks);
    b.true_homographies.assign(b.frames.size(), Homography::identity());
    b.registration_homographies = b.true_homographies;
    b.overlaps.assign(b.frames.size(), 1.0);
    b.pivot = b.frames.size() / 2;
    b.t_amb = t_amb;
    b.normalized = normalized;
    b.normalization = norm;
    b.spec.n_frames = b.frames.size();
    b.validate();
    return b;
}

/// Warps raw frames toward the pivot and normalises them; fills frames/masks.
inline void register_frames(Burst& b) {
    const std::size_t n = b.raw_frames.size();
    if (b.view_masks.size() != n || b.registration_homographies.size() != n) {
        throw ShapeError("burst raw frames, view masks and homographies must have equal counts");
    }
    b.frames.assign(n, {});
    b.masks.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
        auto reg = warp(b.raw_frames[i], b.registration_homographies[i], &b.view_masks[i]);
        b.frames[i] = b.normalized ? normalize_frame(reg.frame, b.normalization.gray_min,
                                                     b.normalization.gray_max)
                                   : std::move(reg.frame);
        b.masks[i] = std::move(reg.mask);
    }
    b.validate();
}

/// Full simulation: sample a path, view the scene from each pose, pass each
/// view through the camera model, apply one shared FPN and per-frame noise,
/// quantise, then register with perturbed homographies.
inline Burst make_burst(const TemperatureMap& x, double t_amb, const calibration::CoefficientTensor& c,
                        const BurstSpec& spec) {
    spec.validate();
    require_same_shape(x, c.plane(0), "make_burst scene vs coefficients");
    const Dims dims{x.height(), x.width()};

    Burst b;
    b.spec = spec;
    b.t_amb = t_amb;
    b.pivot = spec.pivot();
    b.normalized = spec.normalize;
    b.normalization = spec.normalization;
    b.true_homographies = sample_path(spec, dims);

    const std::size_t n = spec.n_frames;
    const Map fpn = generate_fpn(dims.height, dims.width, spec.fpn_min, spec.fpn_max, spec.seed);
    b.raw_frames.resize(n);
    b.view_masks.resize(n);
    b.registration_homographies.resize(n);
    b.overlaps.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Homography& to_pivot = b.true_homographies[i];
        b.overlaps[i] = overlap(to_pivot, dims);
        auto view = warp(x, to_pivot.inverse());
        GrayFrame gray = calibration::synthesize_frame(view.frame, t_amb, c);
        for (std::size_t p = 0; p < gray.size(); ++p) gray[p] *= fpn[p];
        Rng noise_rng = make_rng(spec.seed, stream::kNoiseBase + i);
        gray = add_noise(gray, spec.noise_sigma2, noise_rng);
        if (spec.quantize) {
            for (auto& v : gray) v = std::clamp(std::round(v), 0.0, kGrayLevelMax);
        }
        b.raw_frames[i] = std::move(gray);
        b.view_masks[i] = std::move(view.mask);

        if (i == b.pivot) {
            b.registration_homographies[i] = to_pivot;
        } else {
            Rng perturb_rng = make_rng(spec.seed, stream::kPerturbBase + i);
            b.registration_homographies[i] = perturb(to_pivot, spec.perturbation, perturb_rng);
        }
    }
    register_frames(b);
    return b;
}

/// Random flip / 90-degree rotation of a scene (rotation only for square maps).
inline TemperatureMap augment_scene(const TemperatureMap& x, std::uint64_t seed) {
    Rng rng = make_rng(seed, stream::kAugment);
    std::bernoulli_distribution coin(0.5);
    const bool flip_h = coin(rng);
    const bool flip_v = coin(rng);
    const bool rotate = coin(rng) && x.height() == x.width();
    TemperatureMap out(x.height(), x.width());
    for (std::size_t r = 0; r < x.height(); ++r) {
        for (std::size_t c = 0; c < x.width(); ++c) {
            std::size_t sr = flip_v ? x.height() - 1 - r : r;
            std::size_t sc = flip_h ? x.width() - 1 - c : c;
            if (rotate) std::swap(sr, sc);
            out(r, c) = x(sr, sc);
        }
    }
    return out;
}

struct FlightGeometry {
    double gsd_m_per_px;
    double px_per_frame;
    double frames_per_object;
};

/// Ground sampling distance, image motion per frame and how many frames an
/// object stays in view along the flight direction.
inline FlightGeometry flight_geometry(double height_m, double focal_mm, double sensor_mm, double sensor_px,
                                      double speed_mps, double fps) {
    if (!(height_m > 0 && focal_mm > 0 && sensor_mm > 0 && sensor_px > 0 && speed_mps > 0 && fps > 0)) {
        throw DomainError("flight geometry inputs must be positive");
    }
    const double gsd = height_m * sensor_mm / (focal_mm * sensor_px);
    const double px_per_frame = (speed_mps / fps) / gsd;
    return {gsd, px_per_frame, sensor_px / px_per_frame};
}

}  // namespace thermofuse::burst
