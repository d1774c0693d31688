#pragma once

// Emission and acquisition physics of a microbolometer pixel: Planck spectral
// exitance, Stefan-Boltzmann band power, incident power, its first-order
// expansion around a reference temperature, and the ambient-dependent
// gray-level model.

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "thermofuse/error.hpp"

namespace thermofuse::radiometry {

inline constexpr double kCelsiusToKelvin = 273.15;

constexpr double to_kelvin(double celsius) noexcept { return celsius + kCelsiusToKelvin; }
constexpr double to_celsius(double kelvin) noexcept { return kelvin - kCelsiusToKelvin; }

/// CODATA 2018 exact/recommended values.
struct PhysicalConstants {
    double h = 6.62607015e-34;       // J s
    double c = 299792458.0;          // m / s
    double k = 1.380649e-23;         // J / K
    double sigma = 5.670374419e-8;   // W m^-2 K^-4
};

inline constexpr PhysicalConstants kCodata2018{};

class Emission {
public:
    Emission(double temperature_kelvin, double emissivity, double gamma = 1.0)
        : temperature_kelvin_(temperature_kelvin), emissivity_(emissivity), gamma_(gamma) {
        if (!(temperature_kelvin > 0.0) || !std::isfinite(temperature_kelvin)) {
            throw DomainError("emission temperature must be a positive Kelvin value");
        }
        if (!(emissivity >= 0.0 && emissivity <= 1.0)) {
            throw DomainError("emissivity must lie in [0, 1]");
        }
        if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
            throw DomainError("geometric coefficient gamma must be finite and non-negative");
        }
    }

    double temperature_kelvin() const noexcept { return temperature_kelvin_; }
    double emissivity() const noexcept { return emissivity_; }
    double gamma() const noexcept { return gamma_; }

private:
    double temperature_kelvin_;
    double emissivity_;
    double gamma_;
};

struct AffineCoefficients {
    double gain;    // per kelvin
    double offset;

    double operator()(double delta) const noexcept { return gain * delta + offset; }
};

/// Blackbody spectral exitance M_lambda(T) in W sr^-1 m^-3.
inline double planck_spectral_density(double t_kelvin, double wavelength_m,
                                      const PhysicalConstants& consts = kCodata2018) {
    if (!(t_kelvin > 0.0) || !(wavelength_m > 0.0)) {
        throw DomainError("planck_spectral_density needs positive temperature and wavelength");
    }
    const double lambda5 = std::pow(wavelength_m, 5);
    const double prefactor = 2.0 * std::numbers::pi * consts.h * consts.c * consts.c / lambda5;
    const double exponent = consts.h * consts.c / (wavelength_m * consts.k * t_kelvin);
    // expm1 keeps precision in the Rayleigh-Jeans limit; overflow gives exactly 0.
    return prefactor / std::expm1(exponent);
}

/// Integral of planck_spectral_density over [lambda_lo, lambda_hi], computed by
/// adaptive Gauss-Kronrod in log-wavelength. Over [0.1 um, 1000 um] the
/// truncated tails hold less than 1e-5 of sigma T^4 for T in [250, 350] K.
inline double planck_band_integral(double t_kelvin, double lambda_lo_m, double lambda_hi_m,
                                   const PhysicalConstants& consts = kCodata2018) {
    if (!(lambda_lo_m > 0.0) || !(lambda_hi_m > lambda_lo_m)) {
        throw DomainError("planck_band_integral needs 0 < lambda_lo < lambda_hi");
    }
    auto integrand = [&](double log_lambda) {
        const double lambda = std::exp(log_lambda);
        return planck_spectral_density(t_kelvin, lambda, consts) * lambda;
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        integrand, std::log(lambda_lo_m), std::log(lambda_hi_m), 15, 1e-12);
}

/// sigma * epsilon * T^4
inline double band_power(const Emission& e, const PhysicalConstants& consts = kCodata2018) {
    const double t2 = e.temperature_kelvin() * e.temperature_kelvin();
    return consts.sigma * e.emissivity() * t2 * t2;
}

/// gamma * sigma * epsilon * T^4
inline double incident_power(const Emission& e, const PhysicalConstants& consts = kCodata2018) {
    return e.gamma() * band_power(e, consts);
}

/// First-order expansion of incident_power around t0: the gain multiplies
/// (T - t0) and the offset is the power at t0. The emission's own
/// temperature is ignored; only emissivity and gamma are used.
inline AffineCoefficients affine_expand(double t0_kelvin, const Emission& e,
                                        const PhysicalConstants& consts = kCodata2018) {
    if (!(t0_kelvin > 0.0)) throw DomainError("affine_expand needs a positive reference temperature");
    const double scale = e.gamma() * e.emissivity() * consts.sigma;
    const double t3 = t0_kelvin * t0_kelvin * t0_kelvin;
    return {4.0 * scale * t3, scale * t3 * t0_kelvin};
}

/// I = g(t_amb) * t_obj + d(t_amb)
template <typename GainFn, typename OffsetFn>
double gray_level(double t_obj, double t_amb, GainFn&& gain_fn, OffsetFn&& offset_fn) {
    return gain_fn(t_amb) * t_obj + offset_fn(t_amb);
}

}  // namespace thermofuse::radiometry
