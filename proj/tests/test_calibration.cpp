#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "thermofuse/calibration.hpp"
#include "thermofuse/synthetic.hpp"

using namespace thermofuse;
using namespace thermofuse::calibration;

namespace {

MeasurementSet grid_set(const CoefficientTensor& c, std::vector<double> objs, std::vector<double> ambs) {
    return synthetic::measurement_grid(c, objs, ambs);
}

double max_relative_error(const CoefficientTensor& got, const CoefficientTensor& want) {
    double worst = 0.0;
    for (std::size_t k = 0; k < kPlaneCount; ++k) {
        for (std::size_t p = 0; p < want.plane(k).size(); ++p) {
            const double ref = want.plane(k)[p];
            worst = std::max(worst, std::abs(got.plane(k)[p] - ref) / std::abs(ref));
        }
    }
    return worst;
}

// Random-grid measurements with additive Gaussian noise.
MeasurementSet noisy_set(const CoefficientTensor& c, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> obj(10.0, 60.0);
    std::uniform_real_distribution<double> amb(-10.0, 50.0);
    std::normal_distribution<double> noise(0.0, std::sqrt(5.0));
    std::vector<MeasurementSample> samples;
    for (std::size_t s = 0; s < count; ++s) {
        const double t = obj(rng);
        const double a = amb(rng);
        GrayFrame f = synthesize_frame(TemperatureMap(c.height(), c.width(), t), a, c);
        for (auto& v : f) v += noise(rng);
        samples.push_back({t, a, std::move(f)});
    }
    return MeasurementSet(std::move(samples));
}

// Mean over planes and pixels of the relative coefficient error.
double mean_relative_error(const CoefficientTensor& got, const CoefficientTensor& want) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < kPlaneCount; ++k) {
        for (std::size_t p = 0; p < want.plane(k).size(); ++p) {
            sum += std::abs(got.plane(k)[p] - want.plane(k)[p]) / std::abs(want.plane(k)[p]);
            ++n;
        }
    }
    return sum / static_cast<double>(n);
}

}  // namespace

TEST(DesignRow, Examples) {
    EXPECT_EQ(design_row(0, 0), (DesignRow{0, 0, 0, 0, 1, 0, 0, 0}));
    EXPECT_EQ(design_row(1, 1), (DesignRow{1, 1, 1, 1, 1, 1, 1, 1}));
    EXPECT_EQ(design_row(2, 3), (DesignRow{16, 48, 144, 432, 1, 3, 9, 27}));
}

TEST(DesignRow, QuarticInObjectTemperature) {
    for (double t : {-3.5, 0.25, 7.0, 41.0}) {
        for (double a : {-10.0, 0.0, 12.5}) {
            const auto r1 = design_row(t, a);
            const auto r2 = design_row(2.0 * t, a);
            for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(r2[k], 16.0 * r1[k]);
            for (std::size_t k = 4; k < 8; ++k) EXPECT_EQ(r2[k], r1[k]);
        }
    }
}

TEST(DesignRow, ScaleFactorsUndoInternalScaling) {
    const auto s = design_scale();
    const auto raw = design_row(37.0, -8.0);
    const auto scaled = design_row(37.0 / kObjectScale, -8.0 / kAmbientScale);
    for (std::size_t k = 0; k < kPlaneCount; ++k) EXPECT_NEAR(s[k] * scaled[k], raw[k], 1e-9 * std::abs(raw[k]));
}

TEST(MeasurementSet, NeedsEightSamples) {
    const auto c = synthetic::reference_camera(4, 4);
    std::vector<MeasurementSample> samples;
    for (int i = 0; i < 7; ++i) {
        samples.push_back({10.0 + i, 5.0 * i, synthesize_frame(TemperatureMap(4, 4, 10.0 + i), 5.0 * i, c)});
    }
    try {
        MeasurementSet ms(samples);
        FAIL() << "expected CalibrationError";
    } catch (const CalibrationError& e) {
        EXPECT_NE(std::string(e.what()).find("rank-8"), std::string::npos) << e.what();
    }
}

TEST(MeasurementSet, RejectsMixedShapes) {
    std::vector<MeasurementSample> samples;
    for (int i = 0; i < 8; ++i) samples.push_back({10.0 * i, 1.0 * i, GrayFrame(4, 4, 1.0)});
    samples.back().frame = GrayFrame(4, 5, 1.0);
    EXPECT_THROW(MeasurementSet{samples}, ShapeError);
}

TEST(FitPerPixel, NoiselessRoundTrip) {
    const auto c = synthetic::reference_camera(16, 16);
    const auto ms = grid_set(c, {10, 26.6667, 43.3333, 60}, {-10, 10, 30, 50});
    const auto fit = fit_per_pixel(ms);
    EXPECT_EQ(fit.rank, kPlaneCount);
    EXPECT_LT(max_relative_error(fit.coefficients, c), 1e-6);
    EXPECT_EQ(count_valid(fit.excluded), 0u);
}

TEST(FitPerPixel, EightSamplesInterpolate) {
    const auto c = synthetic::reference_camera(6, 5);
    const auto ms = grid_set(c, {15, 55}, {-5, 10, 25, 40});
    ASSERT_EQ(ms.size(), 8u);
    const auto fit = fit_per_pixel(ms);
    for (double r : fit.residual_rms) EXPECT_LT(r, 1e-8);
}

TEST(FitPerPixel, ConsistentDuplicatesDoNotMoveSolution) {
    const auto c = synthetic::reference_camera(5, 5);
    const auto base = grid_set(c, {10, 35, 60}, {-10, 5, 20, 35, 50});
    auto samples = base.samples();
    for (std::size_t i = 0; i < 4; ++i) samples.push_back(samples[i * 3]);
    const auto a = fit_per_pixel(base);
    const auto b = fit_per_pixel(MeasurementSet(samples));
    for (std::size_t k = 0; k < kPlaneCount; ++k) {
        for (std::size_t p = 0; p < 25; ++p) {
            EXPECT_NEAR(b.coefficients.plane(k)[p], a.coefficients.plane(k)[p],
                        1e-8 * std::abs(a.coefficients.plane(k)[p]));
        }
    }
}

TEST(FitPerPixel, RankDeficiencyIsNamed) {
    const auto c = synthetic::reference_camera(4, 4);
    // eight samples but only two ambient temperatures
    const auto ms = grid_set(c, {10, 20, 30, 40}, {0, 25});
    try {
        fit_per_pixel(ms);
        FAIL() << "expected CalibrationError";
    } catch (const CalibrationError& e) {
        EXPECT_NE(std::string(e.what()).find("rank deficient"), std::string::npos) << e.what();
    }
}

TEST(FitPerPixel, ConvergesWithMoreNoisySamples) {
    const auto c = synthetic::reference_camera(4, 4);
    const double e1 = mean_relative_error(fit_per_pixel(noisy_set(c, 50, 11)).coefficients, c);
    const double e2 = mean_relative_error(fit_per_pixel(noisy_set(c, 400, 12)).coefficients, c);
    const double e3 = mean_relative_error(fit_per_pixel(noisy_set(c, 3200, 13)).coefficients, c);
    EXPECT_GT(e1, e2);
    EXPECT_GT(e2, e3);
}

TEST(FitPerPixel, FlagsOutlierPixels) {
    const auto c = synthetic::reference_camera(5, 5);
    auto samples = grid_set(c, {10, 30, 50}, {-10, 10, 30, 50}).samples();
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> junk(0.0, 16383.0);
    for (auto& s : samples) s.frame(2, 3) = junk(rng);  // dead pixel
    const auto fit = fit_per_pixel(MeasurementSet(samples), FitOptions{1.0});
    EXPECT_EQ(fit.excluded(2, 3), 1);
    EXPECT_EQ(count_valid(fit.excluded), 1u);
}

TEST(RadialMap, CornersAndCentre) {
    const Map r = radial_map(7, 7);
    const double corner = std::sqrt(0.5);
    EXPECT_NEAR(r(0, 0), corner, 1e-15);
    EXPECT_NEAR(r(0, 6), corner, 1e-15);
    EXPECT_NEAR(r(6, 0), corner, 1e-15);
    EXPECT_NEAR(r(6, 6), corner, 1e-15);
    EXPECT_EQ(r(3, 3), 0.0);
    const Map even = radial_map(8, 12);
    EXPECT_NEAR(even(7, 11), 0.70711, 1e-5);
}

TEST(RadialMap, FlipInvariant) {
    for (auto [h, w] : {std::pair{5, 9}, std::pair{8, 8}, std::pair{2, 3}}) {
        const Map r = radial_map(h, w);
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                EXPECT_EQ(r(i, j), r(h - 1 - i, j));
                EXPECT_EQ(r(i, j), r(i, w - 1 - j));
            }
        }
    }
}

TEST(RadialMap, RejectsTinyDimensions) {
    EXPECT_THROW(radial_map(1, 5), DomainError);
    EXPECT_THROW(radial_map(5, 1), DomainError);
}

TEST(FitRadial, RecoversAffineProfile) {
    const Map r = radial_map(9, 11);
    std::array<Map, kPlaneCount> planes;
    for (auto& p : planes) {
        p = Map(9, 11);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = 2.0 + 3.0 * r[i];
    }
    const auto rm = fit_radial(CoefficientTensor(planes), 1);
    for (const auto& m : rm.terms) {
        EXPECT_NEAR(m[0], 2.0, 1e-9);
        EXPECT_NEAR(m[1], 3.0, 1e-9);
    }
}

TEST(FitRadial, ConstantPlaneAnyDegree) {
    CoefficientTensor c(10, 10);
    for (std::size_t k = 0; k < kPlaneCount; ++k) {
        for (auto& v : c.plane(k)) v = 1.5 * static_cast<double>(k) - 4.0;
    }
    for (std::size_t degree : {0u, 2u, 6u}) {
        const auto rm = fit_radial(c, degree);
        for (std::size_t k = 0; k < kPlaneCount; ++k) {
            EXPECT_NEAR(rm.terms[k][0], 1.5 * static_cast<double>(k) - 4.0, 1e-8);
            for (std::size_t j = 1; j <= degree; ++j) EXPECT_NEAR(rm.terms[k][j], 0.0, 1e-7);
        }
    }
}

TEST(FitRadial, DefaultDegreeRoundTrip) {
    auto rm = RadialModel::zeros(kDefaultRadialDegree);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& t : rm.terms) {
        for (auto& v : t) v = u(rng);
    }
    const auto back = fit_radial(reconstruct_coeffs(rm, 40, 40), kDefaultRadialDegree);
    for (std::size_t k = 0; k < kPlaneCount; ++k) {
        for (std::size_t j = 0; j <= kDefaultRadialDegree; ++j) EXPECT_NEAR(back.terms[k][j], rm.terms[k][j], 1e-7);
    }
}

TEST(FitRadial, IgnoresExcludedPixels) {
    const auto rm = synthetic::reference_radial_model();
    auto c = reconstruct_coeffs(rm, 12, 12);
    Mask exclude(12, 12, 0);
    for (std::size_t k = 0; k < kPlaneCount; ++k) c.plane(k)(4, 7) = 1e6;
    exclude(4, 7) = 1;
    const auto back = fit_radial(c, rm.degree, &exclude);
    for (std::size_t k = 0; k < kPlaneCount; ++k) {
        for (std::size_t j = 0; j <= rm.degree; ++j) {
            const double scale = std::max(std::abs(rm.terms[k][0]), 1e-30);
            EXPECT_NEAR(back.terms[k][j], rm.terms[k][j], 1e-9 * scale);
        }
    }
}

TEST(FitRadial, DegreeBeyondPixelCount) {
    EXPECT_THROW(fit_radial(CoefficientTensor(2, 2), 4), DomainError);
}

TEST(ReconstructCoeffs, ZeroModelGivesZeroTensor) {
    const auto c = reconstruct_coeffs(RadialModel::zeros(3), 6, 7);
    for (const auto& p : c.planes()) {
        for (double v : p) EXPECT_EQ(v, 0.0);
    }
}

TEST(ReconstructCoeffs, ExactlyFlipSymmetric) {
    auto rm = RadialModel::zeros(5);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 10.0);
    for (auto& t : rm.terms) {
        for (auto& v : t) v = n(rng);
    }
    for (auto [h, w] : {std::pair{13, 13}, std::pair{10, 17}}) {
        const auto c = reconstruct_coeffs(rm, h, w);
        for (const auto& p : c.planes()) {
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    ASSERT_EQ(p(i, j), p(h - 1 - i, j));
                    ASSERT_EQ(p(i, j), p(i, w - 1 - j));
                }
            }
        }
    }
}

TEST(ReconstructCoeffs, RadiallySymmetricOnSquareGrid) {
    const auto rm = fit_radial(synthetic::reference_camera(9, 9), 4);
    const auto c = reconstruct_coeffs(rm, 9, 9);
    for (const auto& p : c.planes()) {
        for (int i = 0; i < 9; ++i) {
            for (int j = 0; j < 9; ++j) EXPECT_EQ(p(i, j), p(j, i));
        }
    }
}

TEST(ReconstructCoeffs, MismatchedTermCount) {
    auto rm = RadialModel::zeros(2);
    rm.terms[3].push_back(1.0);
    EXPECT_THROW(reconstruct_coeffs(rm, 4, 4), ShapeError);
}

TEST(SynthesizeFrame, OnlyConstantOffset) {
    CoefficientTensor c(4, 6);
    for (auto& v : c.plane(4)) v = 6000.0;
    TemperatureMap x(4, 6);
    for (std::size_t p = 0; p < x.size(); ++p) x[p] = static_cast<double>(p);
    for (double a : {-10.0, 0.0, 33.0}) {
        for (double v : synthesize_frame(x, a, c)) EXPECT_EQ(v, 6000.0);
    }
}

TEST(SynthesizeFrame, AffineInAmbientForLinearPlanes) {
    CoefficientTensor c(3, 3);
    for (std::size_t p = 0; p < 9; ++p) {
        c.plane(0)[p] = 2e-4 + 1e-6 * p;
        c.plane(1)[p] = 3e-6;
        c.plane(4)[p] = 6000.0 + p;
        c.plane(5)[p] = 30.0;
    }
    TemperatureMap x(3, 3, 25.0);
    x(1, 1) = 40.0;
    const auto f0 = synthesize_frame(x, 5.0, c);
    const auto f1 = synthesize_frame(x, 10.0, c);
    const auto f2 = synthesize_frame(x, 15.0, c);
    for (std::size_t p = 0; p < 9; ++p) {
        EXPECT_NEAR(f2[p] - f0[p], 2.0 * (f1[p] - f0[p]), 1e-9);
        const double slope = c.plane(1)[p] * std::pow(x[p], 4) + c.plane(5)[p];
        EXPECT_NEAR(f1[p] - f0[p], 5.0 * slope, 1e-9);
    }
}

TEST(SynthesizeFrame, ShapeMismatch) {
    EXPECT_THROW(synthesize_frame(TemperatureMap(3, 4), 0.0, CoefficientTensor(4, 3)), ShapeError);
}

TEST(CoefficientTensor, RejectsNonFinite) {
    std::array<Map, kPlaneCount> planes;
    for (auto& p : planes) p = Map(2, 2, 1.0);
    planes[6](1, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(CoefficientTensor{planes}, DomainError);
}

TEST(AmbientResponse, CollapsesPolynomials) {
    const auto c = synthetic::reference_camera(3, 3);
    const auto resp = ambient_response(c, 12.0);
    const TemperatureMap x(3, 3, 31.0);
    const auto f = synthesize_frame(x, 12.0, c);
    for (std::size_t p = 0; p < 9; ++p) {
        EXPECT_NEAR(f[p], resp.quartic[p] * std::pow(31.0, 4) + resp.constant[p], 1e-9 * f[p]);
    }
}
