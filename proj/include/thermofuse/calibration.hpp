#pragma once

// Per-pixel radiometric calibration. Each pixel follows
//
//   I(t_obj, t_amb) = sum_i g_i t_amb^i t_obj^4 + sum_i d_i t_amb^i,  i = 0..3
//
// with temperatures in °C. The eight coefficients are fitted by least squares
// from blackbody measurements, then regularised by a radial polynomial model
// that keeps only the circularly symmetric part of the nonuniformity.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "thermofuse/error.hpp"
#include "thermofuse/image.hpp"
#include "thermofuse/parallel.hpp"

namespace thermofuse::calibration {

inline constexpr std::size_t kAmbientDegree = 3;
inline constexpr std::size_t kPlaneCount = 2 * (kAmbientDegree + 1);

/// Internal rescaling of temperatures inside the design matrix. t_obj^4 of a
/// 60 °C target is ~1.3e7; dividing by 100 first keeps every column O(1).
inline constexpr double kObjectScale = 100.0;
inline constexpr double kAmbientScale = 100.0;

using DesignRow = std::array<double, kPlaneCount>;

/// [t^4, t^4 a, t^4 a^2, t^4 a^3, 1, a, a^2, a^3] with t = t_obj, a = t_amb.
constexpr DesignRow design_row(double t_obj, double t_amb) noexcept {
    const double t2 = t_obj * t_obj;
    const double t4 = t2 * t2;
    DesignRow row{};
    double amb_power = 1.0;
    for (std::size_t i = 0; i <= kAmbientDegree; ++i) {
        row[i] = t4 * amb_power;
        row[kAmbientDegree + 1 + i] = amb_power;
        amb_power *= t_amb;
    }
    return row;
}

/// Factor s_k such that design_row(t, a)[k] == s_k * design_row(t / 100, a / 100)[k].
inline DesignRow design_scale() noexcept {
    DesignRow s{};
    const double obj4 = std::pow(kObjectScale, 4);
    for (std::size_t i = 0; i <= kAmbientDegree; ++i) {
        const double amb = std::pow(kAmbientScale, static_cast<double>(i));
        s[i] = obj4 * amb;
        s[kAmbientDegree + 1 + i] = amb;
    }
    return s;
}

/// Eight coefficient planes ordered [g0..g3, d0..d3].
class CoefficientTensor {
public:
    CoefficientTensor() = default;
    CoefficientTensor(std::size_t height, std::size_t width) {
        for (auto& p : planes_) p = Map(height, width, 0.0);
    }
    explicit CoefficientTensor(std::array<Map, kPlaneCount> planes) : planes_(std::move(planes)) {
        for (const auto& p : planes_) {
            require_same_shape(p, planes_[0], "coefficient planes");
            for (double v : p) {
                if (!std::isfinite(v)) throw DomainError("coefficient tensor contains a non-finite value");
            }
        }
    }

    std::size_t height() const noexcept { return planes_[0].height(); }
    std::size_t width() const noexcept { return planes_[0].width(); }

    Map& plane(std::size_t i) { return planes_.at(i); }
    const Map& plane(std::size_t i) const { return planes_.at(i); }
    const std::array<Map, kPlaneCount>& planes() const noexcept { return planes_; }

    DesignRow at(std::size_t row, std::size_t col) const noexcept {
        DesignRow c{};
        for (std::size_t k = 0; k < kPlaneCount; ++k) c[k] = planes_[k](row, col);
        return c;
    }

    bool operator==(const CoefficientTensor&) const = default;

private:
    std::array<Map, kPlaneCount> planes_;
};

struct MeasurementSample {
    double t_obj;  // °C
    double t_amb;  // °C
    GrayFrame frame;
};

/// Blackbody measurements sharing one frame shape.
class MeasurementSet {
public:
    explicit MeasurementSet(std::vector<MeasurementSample> samples) : samples_(std::move(samples)) {
        if (samples_.size() < kPlaneCount) {
            throw CalibrationError("measurement set has " + std::to_string(samples_.size()) +
                                   " samples; the per-pixel model needs at least " +
                                   std::to_string(kPlaneCount) + " for a rank-" +
                                   std::to_string(kPlaneCount) + " design matrix");
        }
        for (const auto& s : samples_) {
            require_same_shape(s.frame, samples_.front().frame, "measurement frames");
        }
        if (samples_.front().frame.empty()) throw ShapeError("measurement frames are empty");
    }

    std::size_t size() const noexcept { return samples_.size(); }
    std::size_t height() const noexcept { return samples_.front().frame.height(); }
    std::size_t width() const noexcept { return samples_.front().frame.width(); }
    const std::vector<MeasurementSample>& samples() const noexcept { return samples_; }

private:
    std::vector<MeasurementSample> samples_;
};

struct FitOptions {
    /// Pixels whose RMS residual exceeds this (gray levels) are excluded.
    double outlier_residual = std::numeric_limits<double>::infinity();
};

struct PixelFit {
    CoefficientTensor coefficients;
    Map residual_rms;   // gray levels
    Mask excluded;      // 1 = residual above FitOptions::outlier_residual
    std::size_t rank = 0;
};

/// Least-squares fit of every pixel against the shared design matrix using a
/// column-pivoted QR, so one factorisation serves all pixels.
inline PixelFit fit_per_pixel(const MeasurementSet& ms, const FitOptions& options = {}) {
    const auto n = static_cast<Eigen::Index>(ms.size());
    const std::size_t h = ms.height();
    const std::size_t w = ms.width();
    const auto pixels = static_cast<Eigen::Index>(h * w);

    Eigen::MatrixXd design(n, static_cast<Eigen::Index>(kPlaneCount));
    Eigen::MatrixXd gray(n, pixels);
    for (Eigen::Index s = 0; s < n; ++s) {
        const auto& sample = ms.samples()[static_cast<std::size_t>(s)];
        const auto row = design_row(sample.t_obj / kObjectScale, sample.t_amb / kAmbientScale);
        for (std::size_t k = 0; k < kPlaneCount; ++k) design(s, static_cast<Eigen::Index>(k)) = row[k];
        const auto px = sample.frame.pixels();
        for (Eigen::Index p = 0; p < pixels; ++p) gray(s, p) = px[static_cast<std::size_t>(p)];
    }

    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < static_cast<Eigen::Index>(kPlaneCount)) {
        throw CalibrationError("design matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                               " < " + std::to_string(kPlaneCount) +
                               "); measurements need at least 2 distinct object temperatures and " +
                               std::to_string(kAmbientDegree + 1) + " distinct ambient temperatures");
    }
    const Eigen::MatrixXd solution = qr.solve(gray);
    const Eigen::MatrixXd residual = design * solution - gray;

    const auto scale = design_scale();
    PixelFit fit{CoefficientTensor(h, w), Map(h, w, 0.0), Mask(h, w, 0),
                 static_cast<std::size_t>(qr.rank())};
    const double inv_n = 1.0 / static_cast<double>(n);
    parallel_for(static_cast<std::size_t>(pixels), [&](std::size_t p) {
        const auto col = static_cast<Eigen::Index>(p);
        for (std::size_t k = 0; k < kPlaneCount; ++k) {
            fit.coefficients.plane(k)[p] = solution(static_cast<Eigen::Index>(k), col) / scale[k];
        }
        const double rms = std::sqrt(residual.col(col).squaredNorm() * inv_n);
        fit.residual_rms[p] = rms;
        fit.excluded[p] = rms > options.outlier_residual ? 1 : 0;
    });
    return fit;
}

/// R = sqrt(H^2 + W^2) where H runs -0.5..0.5 down the rows and W across the
/// columns, both inclusive and uniform. Computed as (2i - (n-1)) / (2(n-1)) so
/// mirrored entries are exact negatives of each other.
inline Map radial_map(std::size_t height, std::size_t width) {
    if (height < 2 || width < 2) throw DomainError("radial_map needs at least 2x2 pixels");
    Map r(height, width);
    const double hden = 2.0 * static_cast<double>(height - 1);
    const double wden = 2.0 * static_cast<double>(width - 1);
    for (std::size_t i = 0; i < height; ++i) {
        const double hy = (2.0 * static_cast<double>(i) - static_cast<double>(height - 1)) / hden;
        for (std::size_t j = 0; j < width; ++j) {
            const double wx = (2.0 * static_cast<double>(j) - static_cast<double>(width - 1)) / wden;
            r(i, j) = std::sqrt(hy * hy + wx * wx);
        }
    }
    return r;
}

inline constexpr std::size_t kDefaultRadialDegree = 6;

/// Per plane, coefficients m_0..m_M of sum_j m_j R^j.
struct RadialModel {
    std::size_t degree = 0;
    std::array<std::vector<double>, kPlaneCount> terms;

    static RadialModel zeros(std::size_t degree) {
        RadialModel m{degree, {}};
        for (auto& t : m.terms) t.assign(degree + 1, 0.0);
        return m;
    }
};

/// Least-squares radial fit of every plane. Pixels flagged in `exclude` are
/// ignored. When the map has fewer distinct radii than M + 1 the minimum-norm
/// solution is returned.
inline RadialModel fit_radial(const CoefficientTensor& c, std::size_t degree,
                              const Mask* exclude = nullptr) {
    const std::size_t h = c.height();
    const std::size_t w = c.width();
    if (degree + 1 > h * w) {
        throw DomainError("radial degree " + std::to_string(degree) + " exceeds pixel count");
    }
    if (exclude) require_same_shape(*exclude, c.plane(0), "radial fit exclusion mask");

    const Map r = radial_map(h, w);
    std::vector<std::size_t> used;
    used.reserve(h * w);
    for (std::size_t p = 0; p < h * w; ++p) {
        if (!exclude || (*exclude)[p] == 0) used.push_back(p);
    }
    if (used.size() < degree + 1) throw DomainError("too few usable pixels for the radial fit");

    const auto rows = static_cast<Eigen::Index>(used.size());
    const auto cols = static_cast<Eigen::Index>(degree + 1);
    Eigen::MatrixXd vander(rows, cols);
    Eigen::MatrixXd rhs(rows, static_cast<Eigen::Index>(kPlaneCount));
    for (Eigen::Index i = 0; i < rows; ++i) {
        const std::size_t p = used[static_cast<std::size_t>(i)];
        double power = 1.0;
        for (Eigen::Index j = 0; j < cols; ++j) {
            vander(i, j) = power;
            power *= r[p];
        }
        for (std::size_t k = 0; k < kPlaneCount; ++k) rhs(i, static_cast<Eigen::Index>(k)) = c.plane(k)[p];
    }
    const Eigen::MatrixXd m = vander.completeOrthogonalDecomposition().solve(rhs);

    RadialModel model = RadialModel::zeros(degree);
    for (std::size_t k = 0; k < kPlaneCount; ++k) {
        for (std::size_t j = 0; j <= degree; ++j) {
            model.terms[k][j] = m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
        }
    }
    return model;
}

inline CoefficientTensor reconstruct_coeffs(const RadialModel& rm, std::size_t height, std::size_t width) {
    const Map r = radial_map(height, width);
    std::array<Map, kPlaneCount> planes;
    for (std::size_t k = 0; k < kPlaneCount; ++k) {
        const auto& m = rm.terms[k];
        if (m.size() != rm.degree + 1) throw ShapeError("radial model term count does not match degree");
        planes[k] = Map(height, width);
        for (std::size_t p = 0; p < r.size(); ++p) {
            double acc = 0.0;
            for (auto it = m.rbegin(); it != m.rend(); ++it) acc = acc * r[p] + *it;
            planes[k][p] = acc;
        }
    }
    return CoefficientTensor(std::move(planes));
}

/// Noiseless gray frame of a temperature map at one ambient temperature.
inline GrayFrame synthesize_frame(const TemperatureMap& x, double t_amb, const CoefficientTensor& c) {
    require_same_shape(x, c.plane(0), "synthesize_frame scene vs coefficients");
    GrayFrame out(x.height(), x.width());
    parallel_for(x.height(), [&](std::size_t row) {
        for (std::size_t col = 0; col < x.width(); ++col) {
            const auto t = design_row(x(row, col), t_amb);
            double acc = 0.0;
            for (std::size_t k = 0; k < kPlaneCount; ++k) acc += t[k] * c.plane(k)(row, col);
            out(row, col) = acc;
        }
    });
    return out;
}

/// Collapses the ambient polynomial at one t_amb: I = quartic * t_obj^4 + constant.
struct AmbientResponse {
    Map quartic;
    Map constant;
};

inline AmbientResponse ambient_response(const CoefficientTensor& c, double t_amb) {
    AmbientResponse out{Map(c.height(), c.width(), 0.0), Map(c.height(), c.width(), 0.0)};
    double amb_power = 1.0;
    for (std::size_t i = 0; i <= kAmbientDegree; ++i) {
        const Map& g = c.plane(i);
        const Map& d = c.plane(kAmbientDegree + 1 + i);
        for (std::size_t p = 0; p < g.size(); ++p) {
            out.quartic[p] += g[p] * amb_power;
            out.constant[p] += d[p] * amb_power;
        }
        amb_power *= t_amb;
    }
    return out;
}

}  // namespace thermofuse::calibration
