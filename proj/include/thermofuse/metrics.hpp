#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "thermofuse/error.hpp"
#include "thermofuse/image.hpp"
#include "thermofuse/parallel.hpp"

namespace thermofuse::metrics {

namespace detail {

inline bool valid_at(const Mask* mask, std::size_t p) { return !mask || (*mask)[p] != 0; }

inline void check_inputs(const Map& a, const Map& b, const Mask* mask, const char* what) {
    require_same_shape(a, b, what);
    if (mask) require_same_shape(*mask, a, what);
    if (a.empty()) throw ShapeError(std::string(what) + ": empty image");
    if (mask && count_valid(*mask) == 0) throw DomainError(std::string(what) + ": mask has no valid pixel");
}

}  // namespace detail

/// Mean |x_hat - x| over valid pixels (all pixels when mask is null).
inline double mae(const Map& x_hat, const Map& x, const Mask* mask = nullptr) {
    detail::check_inputs(x_hat, x, mask, "mae");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < x.size(); ++p) {
        if (!detail::valid_at(mask, p)) continue;
        sum += std::abs(x_hat[p] - x[p]);
        ++count;
    }
    return sum / static_cast<double>(count);
}

/// sqrt(Gx^2 + Gy^2) with 3x3 Sobel kernels and edge-replicate borders.
/// Neighbours outside `mask` take the centre value; invalid centres get 0.
inline Map sobel_magnitude(const Map& img, const Mask* mask = nullptr) {
    if (img.height() < 3 || img.width() < 3) throw DomainError("sobel_magnitude needs at least 3x3 pixels");
    if (mask) require_same_shape(*mask, img, "sobel mask");
    static constexpr std::array<std::array<double, 3>, 3> kx{{{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}}};
    static constexpr std::array<std::array<double, 3>, 3> ky{{{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}}};
    Map out(img.height(), img.width(), 0.0);
    const auto h = static_cast<std::ptrdiff_t>(img.height());
    const auto w = static_cast<std::ptrdiff_t>(img.width());
    parallel_for(img.height(), [&](std::size_t row) {
        for (std::size_t col = 0; col < img.width(); ++col) {
            if (mask && !(*mask)(row, col)) continue;
            const double centre = img(row, col);
            double gx = 0.0;
            double gy = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const auto y = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(row) + dy, 0, h - 1);
                    const auto x = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(col) + dx, 0, w - 1);
                    const auto uy = static_cast<std::size_t>(y);
                    const auto ux = static_cast<std::size_t>(x);
                    const double v = (!mask || (*mask)(uy, ux)) ? img(uy, ux) : centre;
                    gx += kx[static_cast<std::size_t>(dy + 1)][static_cast<std::size_t>(dx + 1)] * v;
                    gy += ky[static_cast<std::size_t>(dy + 1)][static_cast<std::size_t>(dx + 1)] * v;
                }
            }
            out(row, col) = std::sqrt(gx * gx + gy * gy);
        }
    });
    return out;
}

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

/// Normalised 1D Gaussian taps.
inline std::vector<double> gaussian_taps(std::size_t window, double sigma) {
    if (window % 2 == 0) throw DomainError("SSIM window must be odd");
    std::vector<double> taps(window);
    const double r = static_cast<double>(window / 2);
    double sum = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
        const double d = static_cast<double>(i) - r;
        taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += taps[i];
    }
    for (auto& t : taps) t /= sum;
    return taps;
}

namespace detail {

/// Separable Gaussian sum with edge-replicate indexing.
inline Map gaussian_sum(const Map& f, std::span<const double> taps) {
    const auto r = static_cast<std::ptrdiff_t>(taps.size() / 2);
    const std::size_t h = f.height();
    const std::size_t w = f.width();
    Map horiz(h, w, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::size_t t = 0; t < taps.size(); ++t) {
                acc += taps[t] * f.clamped(static_cast<std::ptrdiff_t>(y),
                                           static_cast<std::ptrdiff_t>(x) + static_cast<std::ptrdiff_t>(t) - r);
            }
            horiz(y, x) = acc;
        }
    }
    Map out(h, w, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::size_t t = 0; t < taps.size(); ++t) {
                acc += taps[t] * horiz.clamped(static_cast<std::ptrdiff_t>(y) + static_cast<std::ptrdiff_t>(t) - r,
                                               static_cast<std::ptrdiff_t>(x));
            }
            out(y, x) = acc;
        }
    }
    return out;
}

}  // namespace detail

/// Per-pixel SSIM map over Gaussian windows whose weights are restricted to
/// valid pixels and renormalised. Entries at invalid centres are 0.
inline Map ssim_map(const Map& a, const Map& b, const Mask* mask = nullptr, const SsimParams& params = {}) {
    detail::check_inputs(a, b, mask, "ssim");
    const auto taps = gaussian_taps(params.window, params.sigma);
    const std::size_t n = a.size();
    Map m(a.height(), a.width()), ma = m, mb = m, maa = m, mbb = m, mab = m;
    for (std::size_t p = 0; p < n; ++p) {
        const bool v = detail::valid_at(mask, p);
        const double av = v ? a[p] : 0.0;
        const double bv = v ? b[p] : 0.0;
        m[p] = v ? 1.0 : 0.0;
        ma[p] = av;
        mb[p] = bv;
        maa[p] = av * av;
        mbb[p] = bv * bv;
        mab[p] = av * bv;
    }
    const Map sm = detail::gaussian_sum(m, taps);
    const Map sa = detail::gaussian_sum(ma, taps);
    const Map sb = detail::gaussian_sum(mb, taps);
    const Map saa = detail::gaussian_sum(maa, taps);
    const Map sbb = detail::gaussian_sum(mbb, taps);
    const Map sab = detail::gaussian_sum(mab, taps);

    const double c1 = (params.k1 * params.dynamic_range) * (params.k1 * params.dynamic_range);
    const double c2 = (params.k2 * params.dynamic_range) * (params.k2 * params.dynamic_range);
    Map out(a.height(), a.width(), 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        if (!detail::valid_at(mask, p)) continue;
        const double mu_a = sa[p] / sm[p];
        const double mu_b = sb[p] / sm[p];
        const double var_a = saa[p] / sm[p] - mu_a * mu_a;
        const double var_b = sbb[p] / sm[p] - mu_b * mu_b;
        const double cov = sab[p] / sm[p] - mu_a * mu_b;
        out[p] = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                 ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
    return out;
}

/// Mean local SSIM over valid window centres.
inline double ssim(const Map& a, const Map& b, const Mask* mask = nullptr, const SsimParams& params = {}) {
    const Map s = ssim_map(a, b, mask, params);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < s.size(); ++p) {
        if (!detail::valid_at(mask, p)) continue;
        sum += s[p];
        ++count;
    }
    return sum / static_cast<double>(count);
}

struct LossWeights {
    double lambda1 = 0.1;   // gradient term
    double lambda2 = 0.01;  // structural term
};

/// Fidelity L1 + lambda1 * Sobel-gradient L1 + lambda2 * (1 - SSIM). L1 terms
/// are means over valid pixels.
inline double loss(const Map& x_hat, const Map& x, const Mask* mask = nullptr, const LossWeights& w = {},
                   const SsimParams& params = {}) {
    if (!(w.lambda1 >= 0.0) || !(w.lambda2 >= 0.0)) throw DomainError("loss weights must be non-negative");
    const double fidelity = mae(x_hat, x, mask);
    double gradient = 0.0;
    if (w.lambda1 != 0.0) gradient = mae(sobel_magnitude(x_hat, mask), sobel_magnitude(x, mask), mask);
    double structural = 0.0;
    // SSIM <= 1 analytically; the clamp only absorbs rounding.
    if (w.lambda2 != 0.0) structural = std::max(0.0, 1.0 - ssim(x_hat, x, mask, params));
    return fidelity + w.lambda1 * gradient + w.lambda2 * structural;
}

struct ErrorReport {
    double mae = 0.0;
    Map abs_diff;                                      // NaN outside the mask
    std::vector<std::pair<double, double>> cumulative; // (threshold °C, fraction with |d| <= threshold)
    std::size_t valid_pixels = 0;
    double max_abs_diff = 0.0;
};

inline ErrorReport error_report(const Map& x_hat, const Map& x, const Mask* mask,
                                std::span<const double> thresholds) {
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
        throw DomainError("error_report thresholds must be sorted ascending");
    }
    ErrorReport rep;
    rep.mae = mae(x_hat, x, mask);
    rep.abs_diff = Map(x.height(), x.width(), std::numeric_limits<double>::quiet_NaN());
    std::vector<double> errors;
    for (std::size_t p = 0; p < x.size(); ++p) {
        if (!detail::valid_at(mask, p)) continue;
        const double e = std::abs(x_hat[p] - x[p]);
        rep.abs_diff[p] = e;
        errors.push_back(e);
    }
    std::sort(errors.begin(), errors.end());
    rep.valid_pixels = errors.size();
    rep.max_abs_diff = errors.back();
    const auto total = static_cast<double>(errors.size());
    for (double t : thresholds) {
        const auto below = std::upper_bound(errors.begin(), errors.end(), t) - errors.begin();
        rep.cumulative.emplace_back(t, static_cast<double>(below) / total);
    }
    if (rep.cumulative.empty() || rep.cumulative.back().second < 1.0) {
        rep.cumulative.emplace_back(rep.max_abs_diff, 1.0);
    }
    return rep;
}

}  // namespace thermofuse::metrics
