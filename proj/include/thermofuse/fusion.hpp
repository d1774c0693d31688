#pragma once

// Temperature estimation from a registered burst:
//   * the naive per-pixel inverse of the affine camera model,
//   * per-pixel, per-frame kernel application (sum of patch inner products),
//   * the scalar offset block, a polynomial in frame means and ambient temperature.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "thermofuse/binary.hpp"
#include "thermofuse/burst.hpp"
#include "thermofuse/calibration.hpp"
#include "thermofuse/error.hpp"
#include "thermofuse/image.hpp"
#include "thermofuse/parallel.hpp"

namespace thermofuse::fusion {

/// Inverse affine model: t = G * I + D.
struct GainOffsetMaps {
    Map gain;    // °C per gray level
    Map offset;  // °C
};

/// Linearises I = q t^4 + c around t_ref (°C) at one ambient temperature and
/// inverts it: I ~= 4 q t_ref^3 t + (c - 3 q t_ref^4).
inline GainOffsetMaps gain_offset_maps(const calibration::CoefficientTensor& coeffs, double t_amb,
                                       double t_ref) {
    const auto resp = calibration::ambient_response(coeffs, t_amb);
    GainOffsetMaps gd{Map(coeffs.height(), coeffs.width()), Map(coeffs.height(), coeffs.width())};
    const double t3 = t_ref * t_ref * t_ref;
    for (std::size_t p = 0; p < gd.gain.size(); ++p) {
        const double g = 4.0 * resp.quartic[p] * t3;
        const double d = resp.constant[p] - 3.0 * resp.quartic[p] * t3 * t_ref;
        if (g == 0.0) throw DomainError("linearised gain is zero; pick a nonzero reference temperature");
        gd.gain[p] = 1.0 / g;
        gd.offset[p] = -d / g;
    }
    return gd;
}

struct Estimate {
    TemperatureMap map;
    Mask valid;
};

/// Average over frames of G * I + D, with G and D sampled at the pixel's
/// position in each frame's own (pre-registration) coordinates. Pixels seen by
/// no frame are NaN and flagged invalid.
inline Estimate naive_estimate(const burst::Burst& b, const GainOffsetMaps& gd) {
    b.validate();
    require_same_shape(gd.gain, b.frames.front(), "naive_estimate gain map");
    require_same_shape(gd.offset, b.frames.front(), "naive_estimate offset map");
    const std::size_t h = b.height();
    const std::size_t w = b.width();
    const std::size_t n = b.size();

    std::vector<GrayFrame> gray(n);
    std::vector<Homography> to_frame(n);
    for (std::size_t i = 0; i < n; ++i) {
        gray[i] = b.gray_frame(i);
        to_frame[i] = i < b.registration_homographies.size() ? b.registration_homographies[i].inverse()
                                                             : Homography::identity();
    }

    Estimate est{TemperatureMap(h, w, 0.0), Mask(h, w, 0)};
    parallel_for(h, [&](std::size_t row) {
        for (std::size_t col = 0; col < w; ++col) {
            double sum = 0.0;
            std::size_t count = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!b.masks[i](row, col)) continue;
                const Point q = to_frame[i].apply({static_cast<double>(col), static_cast<double>(row)});
                const double g = sample_bilinear(gd.gain, q.y, q.x);
                const double d = sample_bilinear(gd.offset, q.y, q.x);
                sum += g * gray[i](row, col) + d;
                ++count;
            }
            if (count == 0) {
                est.map(row, col) = std::numeric_limits<double>::quiet_NaN();
            } else {
                est.map(row, col) = sum / static_cast<double>(count);
                est.valid(row, col) = 1;
            }
        }
    });
    return est;
}

/// N x h x w grid of K x K kernels, stored frame-major, row-major, kernel-row-major.
class KernelStack {
public:
    KernelStack() = default;
    KernelStack(std::size_t frames, std::size_t height, std::size_t width, std::size_t k)
        : frames_(frames), height_(height), width_(width), k_(k), data_(frames * height * width * k * k, 0.0f) {
        if (k % 2 == 0 || k == 0) throw DomainError("kernel size must be odd and >= 1");
    }
    KernelStack(std::size_t frames, std::size_t height, std::size_t width, std::size_t k,
                std::vector<float> data)
        : KernelStack(frames, height, width, k) {
        if (data.size() != data_.size()) throw ShapeError("kernel stack data size mismatch");
        for (float v : data) {
            if (!std::isfinite(v)) throw DomainError("kernel stack contains a non-finite weight");
        }
        data_ = std::move(data);
    }

    std::size_t frames() const noexcept { return frames_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t kernel_size() const noexcept { return k_; }
    std::size_t radius() const noexcept { return k_ / 2; }

    std::size_t index(std::size_t n, std::size_t row, std::size_t col, std::size_t a, std::size_t b) const noexcept {
        return (((n * height_ + row) * width_ + col) * k_ + a) * k_ + b;
    }
    float& operator()(std::size_t n, std::size_t row, std::size_t col, std::size_t a, std::size_t b) noexcept {
        return data_[index(n, row, col, a, b)];
    }
    float operator()(std::size_t n, std::size_t row, std::size_t col, std::size_t a, std::size_t b) const noexcept {
        return data_[index(n, row, col, a, b)];
    }
    /// The K x K kernel of frame n at pixel (row, col).
    std::span<const float> kernel(std::size_t n, std::size_t row, std::size_t col) const noexcept {
        return {data_.data() + index(n, row, col, 0, 0), k_ * k_};
    }

    std::span<const float> weights() const noexcept { return data_; }
    std::span<float> weights() noexcept { return data_; }

    bool operator==(const KernelStack&) const = default;

private:
    std::size_t frames_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t k_ = 1;
    std::vector<float> data_;
};

inline void require_compatible(const burst::Burst& b, const KernelStack& ks) {
    b.validate();
    if (ks.frames() != b.size() || ks.height() != b.height() || ks.width() != b.width()) {
        throw ShapeError("kernel stack " + std::to_string(ks.frames()) + "x" + std::to_string(ks.height()) +
                         "x" + std::to_string(ks.width()) + " does not match burst " +
                         std::to_string(b.size()) + "x" + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
    }
}

/// Gain term: out(p) = sum_n <K_n(p), patch_p(frame_n)> with K x K patches
/// centred on p and edge-replicate padding.
inline Map apply_kernels(const burst::Burst& b, const KernelStack& ks) {
    require_compatible(b, ks);
    const std::size_t h = b.height();
    const std::size_t w = b.width();
    const std::size_t k = ks.kernel_size();
    const auto r = static_cast<std::ptrdiff_t>(ks.radius());
    Map out(h, w, 0.0);
    parallel_for(h, [&](std::size_t row) {
        for (std::size_t col = 0; col < w; ++col) {
            double acc = 0.0;
            for (std::size_t n = 0; n < b.size(); ++n) {
                const auto weights = ks.kernel(n, row, col);
                const Map& f = b.frames[n];
                for (std::size_t a = 0; a < k; ++a) {
                    const auto y = static_cast<std::ptrdiff_t>(row) + static_cast<std::ptrdiff_t>(a) - r;
                    for (std::size_t c = 0; c < k; ++c) {
                        const auto x = static_cast<std::ptrdiff_t>(col) + static_cast<std::ptrdiff_t>(c) - r;
                        acc += static_cast<double>(weights[a * k + c]) * f.clamped(y, x);
                    }
                }
            }
            out(row, col) = acc;
        }
    });
    return out;
}

/// d~ = (1/N) sum_n sum_{i,j=0..nu} delta_ij * mean_n^i * t_amb^j
struct OffsetModel {
    std::size_t nu = 0;
    std::vector<std::vector<double>> delta;  // delta[i][j]

    static OffsetModel zeros(std::size_t nu) {
        return {nu, std::vector<std::vector<double>>(nu + 1, std::vector<double>(nu + 1, 0.0))};
    }
    static OffsetModel constant(double value) {
        OffsetModel m = zeros(0);
        m.delta[0][0] = value;
        return m;
    }

    void validate() const {
        if (delta.size() != nu + 1) throw ShapeError("offset model needs (nu+1)^2 coefficients");
        for (const auto& row : delta) {
            if (row.size() != nu + 1) throw ShapeError("offset model needs (nu+1)^2 coefficients");
            for (double v : row) {
                if (!std::isfinite(v)) throw DomainError("offset model coefficient is not finite");
            }
        }
    }
};

/// Row of monomials averaged over frames, ordered i-major: index i * (nu+1) + j.
inline std::vector<double> offset_features(std::span<const double> frame_means, double t_amb, std::size_t nu) {
    if (frame_means.empty()) throw DomainError("offset block needs at least one frame mean");
    std::vector<double> f((nu + 1) * (nu + 1), 0.0);
    for (double m : frame_means) {
        double mi = 1.0;
        for (std::size_t i = 0; i <= nu; ++i) {
            double aj = 1.0;
            for (std::size_t j = 0; j <= nu; ++j) {
                f[i * (nu + 1) + j] += mi * aj;
                aj *= t_amb;
            }
            mi *= m;
        }
    }
    const double inv_n = 1.0 / static_cast<double>(frame_means.size());
    for (auto& v : f) v *= inv_n;
    return f;
}

inline double offset_eval(std::span<const double> frame_means, double t_amb, const OffsetModel& om) {
    om.validate();
    if (frame_means.empty()) throw DomainError("offset block needs at least one frame mean");
    double total = 0.0;
    for (double m : frame_means) {
        double per_frame = 0.0;
        double mi = 1.0;
        for (std::size_t i = 0; i <= om.nu; ++i) {
            double aj = 1.0;
            for (std::size_t j = 0; j <= om.nu; ++j) {
                per_frame += om.delta[i][j] * mi * aj;
                aj *= t_amb;
            }
            mi *= m;
        }
        total += per_frame;
    }
    return total / static_cast<double>(frame_means.size());
}

/// Spatial mean of each registered frame over its valid pixels (all pixels
/// when a frame has none).
inline std::vector<double> frame_means(const burst::Burst& b) {
    std::vector<double> means;
    means.reserve(b.size());
    for (std::size_t n = 0; n < b.size(); ++n) {
        double sum = 0.0;
        double all = 0.0;
        std::size_t count = 0;
        for (std::size_t p = 0; p < b.frames[n].size(); ++p) {
            all += b.frames[n][p];
            if (b.masks[n][p]) {
                sum += b.frames[n][p];
                ++count;
            }
        }
        means.push_back(count ? sum / static_cast<double>(count)
                              : all / static_cast<double>(b.frames[n].size()));
    }
    return means;
}

struct OffsetSample {
    std::vector<double> frame_means;
    double t_amb;
    double target;
};

/// Linear least squares for delta over the monomial features. Columns are
/// scaled to unit norm before a column-pivoted QR.
inline OffsetModel fit_offset(std::span<const OffsetSample> samples, std::size_t nu) {
    const std::size_t terms = (nu + 1) * (nu + 1);
    if (samples.size() < terms) {
        throw CalibrationError("offset fit with nu=" + std::to_string(nu) + " needs at least " +
                               std::to_string(terms) + " samples, got " + std::to_string(samples.size()));
    }
    const auto rows = static_cast<Eigen::Index>(samples.size());
    const auto cols = static_cast<Eigen::Index>(terms);
    Eigen::MatrixXd a(rows, cols);
    Eigen::VectorXd y(rows);
    for (Eigen::Index s = 0; s < rows; ++s) {
        const auto& sample = samples[static_cast<std::size_t>(s)];
        const auto f = offset_features(sample.frame_means, sample.t_amb, nu);
        for (Eigen::Index c = 0; c < cols; ++c) a(s, c) = f[static_cast<std::size_t>(c)];
        y(s) = sample.target;
    }
    Eigen::VectorXd norms = a.colwise().norm().transpose();
    for (Eigen::Index c = 0; c < cols; ++c) {
        if (norms(c) == 0.0) throw CalibrationError("offset feature column " + std::to_string(c) + " is all zero");
        a.col(c) /= norms(c);
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < cols) {
        throw CalibrationError("offset feature matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                               " < " + std::to_string(terms) + ")");
    }
    const Eigen::VectorXd x = qr.solve(y);
    OffsetModel om = OffsetModel::zeros(nu);
    for (std::size_t i = 0; i <= nu; ++i) {
        for (std::size_t j = 0; j <= nu; ++j) {
            const auto c = static_cast<Eigen::Index>(i * (nu + 1) + j);
            om.delta[i][j] = x(c) / norms(c);
        }
    }
    return om;
}

/// Pixels covered by at least one valid frame.
inline Mask coverage(const burst::Burst& b) {
    Mask m(b.height(), b.width(), 0);
    for (const auto& mask : b.masks) {
        for (std::size_t p = 0; p < m.size(); ++p) m[p] = (m[p] || mask[p]) ? 1 : 0;
    }
    return m;
}

/// Kernel gain term plus the scalar offset, mapped back to °C with the
/// burst's temperature normalisation (when the burst is normalised).
inline TemperatureMap fuse(const burst::Burst& b, const KernelStack& ks, const OffsetModel& om) {
    Map out = apply_kernels(b, ks);
    const double offset = offset_eval(frame_means(b), b.t_amb, om);
    for (auto& v : out) v += offset;
    if (b.normalized) {
        out = burst::denormalize_temperature(out, b.normalization.temperature_min,
                                             b.normalization.temperature_max);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Kernel sources

enum class KernelKind { identity, average, shifted, file };

struct Shift {
    int dx = 0;
    int dy = 0;
};

struct KernelSpec {
    KernelKind kind = KernelKind::identity;
    std::vector<Shift> shifts;  // for KernelKind::shifted, one per frame
    std::string path;           // for KernelKind::file
    std::size_t kernel_size = 1;
    double gain = 1.0;          // folded into every weight
};

inline constexpr std::string_view kKernelMagic = "TFKERNL1";

inline std::string encode_kernel_stack(const KernelStack& ks) {
    binary::Writer w;
    w.bytes(kKernelMagic);
    for (std::size_t v : {ks.frames(), ks.height(), ks.width(), ks.kernel_size()}) {
        w.u32(static_cast<std::uint32_t>(v));
    }
    for (float v : ks.weights()) w.f32(v);
    return w.str();
}

inline KernelStack decode_kernel_stack(std::string_view bytes) {
    binary::Reader r(bytes);
    r.expect(kKernelMagic, "kernel stack");
    const std::size_t n = r.u32("kernel stack frame count");
    const std::size_t h = r.u32("kernel stack height");
    const std::size_t w = r.u32("kernel stack width");
    const std::uint64_t k_offset = r.offset();
    const std::size_t k = r.u32("kernel stack kernel size");
    if (k % 2 == 0) throw FormatError("kernel size " + std::to_string(k) + " is not odd", k_offset);
    const std::uint64_t count = static_cast<std::uint64_t>(n) * h * w * k * k;
    r.need(count * 4, "kernel stack weights");
    std::vector<float> data(count);
    for (auto& v : data) {
        const std::uint64_t at = r.offset();
        v = r.f32("kernel weight");
        if (!std::isfinite(v)) throw FormatError("non-finite kernel weight", at);
    }
    r.expect_end("kernel stack");
    return KernelStack(n, h, w, k, std::move(data));
}

/// Estimates the integer residual misregistration of each frame from its true
/// and registration homographies, in the convention registered(p) = scene(p + s).
inline std::vector<Shift> residual_shifts(const burst::Burst& b) {
    std::vector<Shift> shifts;
    for (std::size_t n = 0; n < b.size(); ++n) {
        if (n >= b.true_homographies.size() || n >= b.registration_homographies.size()) {
            shifts.push_back({});
            continue;
        }
        // registered(p) = raw(reg^-1 p) = scene(true * reg^-1 p)
        const Homography residual = b.true_homographies[n] * b.registration_homographies[n].inverse();
        shifts.push_back({static_cast<int>(std::lround(residual(0, 2))),
                          static_cast<int>(std::lround(residual(1, 2)))});
    }
    return shifts;
}

/// Deterministic kernel stack for a burst of `frames` x `height` x `width`.
/// identity: centred delta / N.  average: uniform 1 / (N K^2).
/// shifted: delta / N at offset -s_n, undoing registered(p) = scene(p + s_n).
/// file: stack decoded from `bytes_for_file` (the caller reads the file).
inline KernelStack kernel_provider(const KernelSpec& spec, std::size_t frames, std::size_t height,
                                   std::size_t width, std::string_view bytes_for_file = {}) {
    if (spec.kind == KernelKind::file) {
        KernelStack ks = decode_kernel_stack(bytes_for_file);
        if (ks.frames() != frames || ks.height() != height || ks.width() != width) {
            throw ShapeError("kernel file shape does not match the burst");
        }
        if (spec.gain != 1.0) {
            for (auto& v : ks.weights()) v = static_cast<float>(v * spec.gain);
        }
        return ks;
    }
    if (frames == 0) throw DomainError("kernel stack needs at least one frame");
    const std::size_t k = spec.kernel_size;
    KernelStack ks(frames, height, width, k);
    const std::size_t r = k / 2;
    const double per_frame = spec.gain / static_cast<double>(frames);

    if (spec.kind == KernelKind::shifted && spec.shifts.size() != frames) {
        throw ConfigError("shifted kernels need one shift per frame (" + std::to_string(frames) + ")");
    }
    for (std::size_t n = 0; n < frames; ++n) {
        std::size_t ca = r;
        std::size_t cb = r;
        if (spec.kind == KernelKind::shifted) {
            const Shift s = spec.shifts[n];
            if (static_cast<std::size_t>(std::abs(s.dx)) > r || static_cast<std::size_t>(std::abs(s.dy)) > r) {
                throw ConfigError("shift (" + std::to_string(s.dx) + "," + std::to_string(s.dy) +
                                  ") does not fit a " + std::to_string(k) + "x" + std::to_string(k) + " kernel");
            }
            ca = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(r) - s.dy);
            cb = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(r) - s.dx);
        }
        for (std::size_t row = 0; row < height; ++row) {
            for (std::size_t col = 0; col < width; ++col) {
                if (spec.kind == KernelKind::average) {
                    const auto v = static_cast<float>(per_frame / static_cast<double>(k * k));
                    for (std::size_t a = 0; a < k; ++a)
                        for (std::size_t b = 0; b < k; ++b) ks(n, row, col, a, b) = v;
                } else {
                    ks(n, row, col, ca, cb) = static_cast<float>(per_frame);
                }
            }
        }
    }
    return ks;
}

}  // namespace thermofuse::fusion
