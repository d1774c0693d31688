#pragma once

// File formats:
//   * binary PGM (P5), 8- and 16-bit
//   * coefficient tensor:  "TFCOEFF1", u32 h, u32 w, 8*h*w f64 (LE, plane-major, row-major)
//   * float map:           raw f32 LE, row-major, plus "<path>.json" sidecar
//   * JSON for radial models, offset models, burst specs, error reports,
//     measurement manifests and burst directories

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "thermofuse/binary.hpp"
#include "thermofuse/burst.hpp"
#include "thermofuse/calibration.hpp"
#include "thermofuse/error.hpp"
#include "thermofuse/fusion.hpp"
#include "thermofuse/image.hpp"
#include "thermofuse/metrics.hpp"

namespace thermofuse::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

inline json read_json(const fs::path& path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what(), e.byte);
    }
}

inline void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// PGM

inline std::string encode_pgm(const Image<std::uint16_t>& img, std::uint16_t maxval) {
    std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n" +
                      std::to_string(maxval) + "\n";
    const bool wide = maxval > 255;
    out.reserve(out.size() + img.size() * (wide ? 2 : 1));
    for (std::uint16_t v : img) {
        if (v > maxval) throw DomainError("PGM sample exceeds maxval");
        if (wide) out.push_back(static_cast<char>(v >> 8));  // netpbm stores 16-bit big-endian
        out.push_back(static_cast<char>(v & 0xFF));
    }
    return out;
}

inline Image<std::uint16_t> decode_pgm(std::string_view bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            const char c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&](const char* what) -> std::uint64_t {
        skip_space();
        const std::size_t start = pos;
        std::uint64_t v = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + static_cast<std::uint64_t>(bytes[pos] - '0');
            if (v > (1ull << 32)) throw FormatError(std::string("PGM ") + what + " too large", start);
            ++pos;
        }
        if (pos == start) throw FormatError(std::string("PGM ") + what + " expected", start);
        return v;
    };
    if (bytes.substr(0, 2) != "P5") throw FormatError("not a binary PGM (P5) file", 0);
    pos = 2;
    const std::uint64_t width = read_uint("width");
    const std::uint64_t height = read_uint("height");
    const std::size_t maxval_at = pos;
    const std::uint64_t maxval = read_uint("maxval");
    if (maxval == 0 || maxval > 65535) throw FormatError("PGM maxval out of range", maxval_at);
    if (pos >= bytes.size()) throw FormatError("PGM header not terminated", pos);
    ++pos;  // single whitespace before raster
    const std::size_t bpp = maxval > 255 ? 2 : 1;
    const std::uint64_t need = width * height * bpp;
    if (bytes.size() - pos < need) {
        throw FormatError("PGM raster truncated: need " + std::to_string(need) + " bytes", pos);
    }
    Image<std::uint16_t> img(height, width);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const auto hi = static_cast<unsigned char>(bytes[pos]);
        std::uint16_t v = hi;
        if (bpp == 2) v = static_cast<std::uint16_t>((hi << 8) | static_cast<unsigned char>(bytes[pos + 1]));
        if (v > maxval) throw FormatError("PGM sample exceeds maxval", pos);
        img[i] = v;
        pos += bpp;
    }
    return img;
}

/// Gray levels rounded and clamped to [0, 65535].
inline void write_gray_pgm(const fs::path& path, const GrayFrame& frame) {
    Image<std::uint16_t> q(frame.height(), frame.width());
    for (std::size_t p = 0; p < frame.size(); ++p) {
        const double v = std::isfinite(frame[p]) ? frame[p] : 0.0;
        q[p] = static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0));
    }
    write_file(path, encode_pgm(q, 65535));
}

inline GrayFrame read_gray_pgm(const fs::path& path) {
    const std::string bytes = read_file(path);
    Image<std::uint16_t> raw;
    try {
        raw = decode_pgm(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
    GrayFrame out(raw.height(), raw.width());
    for (std::size_t p = 0; p < raw.size(); ++p) out[p] = raw[p];
    return out;
}

inline void write_mask_pgm(const fs::path& path, const Mask& mask) {
    Image<std::uint16_t> q(mask.height(), mask.width());
    for (std::size_t p = 0; p < mask.size(); ++p) q[p] = mask[p] ? 255 : 0;
    write_file(path, encode_pgm(q, 255));
}

inline Mask read_mask_pgm(const fs::path& path) {
    const auto raw = decode_pgm(read_file(path));
    Mask m(raw.height(), raw.width());
    for (std::size_t p = 0; p < raw.size(); ++p) m[p] = raw[p] ? 1 : 0;
    return m;
}

/// 8-bit preview stretched between the finite min and max.
inline void write_preview_pgm(const fs::path& path, const Map& map) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double v : map) {
        if (!std::isfinite(v)) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Image<std::uint16_t> q(map.height(), map.width(), 0);
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t p = 0; p < map.size(); ++p) {
        if (std::isfinite(map[p])) q[p] = static_cast<std::uint16_t>(std::lround(255.0 * (map[p] - lo) / span));
    }
    write_file(path, encode_pgm(q, 255));
}

// ---------------------------------------------------------------------------
// Coefficient tensor

inline constexpr std::string_view kCoeffMagic = "TFCOEFF1";

inline std::string encode_coefficients(const calibration::CoefficientTensor& c) {
    binary::Writer w;
    w.bytes(kCoeffMagic);
    w.u32(static_cast<std::uint32_t>(c.height()));
    w.u32(static_cast<std::uint32_t>(c.width()));
    for (const auto& plane : c.planes()) {
        for (double v : plane) w.f64(v);
    }
    return w.str();
}

inline calibration::CoefficientTensor decode_coefficients(std::string_view bytes) {
    binary::Reader r(bytes);
    r.expect(kCoeffMagic, "coefficient tensor");
    const std::size_t h = r.u32("coefficient tensor height");
    const std::size_t w = r.u32("coefficient tensor width");
    r.need(static_cast<std::uint64_t>(calibration::kPlaneCount) * h * w * 8, "coefficient planes");
    std::array<Map, calibration::kPlaneCount> planes;
    for (auto& plane : planes) {
        plane = Map(h, w);
        for (auto& v : plane) {
            const std::uint64_t at = r.offset();
            v = r.f64("coefficient");
            if (!std::isfinite(v)) throw FormatError("non-finite coefficient", at);
        }
    }
    r.expect_end("coefficient tensor");
    return calibration::CoefficientTensor(std::move(planes));
}

inline void write_coefficients(const fs::path& path, const calibration::CoefficientTensor& c) {
    write_file(path, encode_coefficients(c));
}

inline calibration::CoefficientTensor read_coefficients(const fs::path& path) {
    try {
        return decode_coefficients(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
}

// ---------------------------------------------------------------------------
// Kernel stacks

inline void write_kernel_stack(const fs::path& path, const fusion::KernelStack& ks) {
    write_file(path, fusion::encode_kernel_stack(ks));
}

inline fusion::KernelStack read_kernel_stack(const fs::path& path) {
    try {
        return fusion::decode_kernel_stack(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
}

// ---------------------------------------------------------------------------
// Float maps

inline fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

inline void write_float_map(const fs::path& path, const Map& map, const std::string& units = "degC") {
    binary::Writer w;
    for (double v : map) w.f32(static_cast<float>(v));
    write_file(path, w.str());
    write_json(sidecar_path(path), json{{"height", map.height()},
                                        {"width", map.width()},
                                        {"dtype", "float32le"},
                                        {"layout", "row-major"},
                                        {"units", units}});
}

inline Map read_float_map(const fs::path& path) {
    const json meta = read_json(sidecar_path(path));
    if (!meta.contains("height") || !meta.contains("width")) {
        throw FormatError(sidecar_path(path).string() + ": missing height/width", 0);
    }
    if (meta.value("dtype", "float32le") != "float32le") {
        throw FormatError(sidecar_path(path).string() + ": unsupported dtype", 0);
    }
    const auto h = meta.at("height").get<std::size_t>();
    const auto w = meta.at("width").get<std::size_t>();
    const std::string bytes = read_file(path);
    binary::Reader r(bytes);
    Map map(h, w);
    try {
        r.need(static_cast<std::uint64_t>(h) * w * 4, "float map");
        for (auto& v : map) v = r.f32("float map sample");
        r.expect_end("float map");
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
    return map;
}

// ---------------------------------------------------------------------------
// JSON schemas

inline json to_json(const calibration::RadialModel& rm) {
    json planes = json::array();
    for (const auto& t : rm.terms) planes.push_back(t);
    return {{"degree", rm.degree}, {"plane_order", "g0,g1,g2,g3,d0,d1,d2,d3"}, {"terms", planes}};
}

inline calibration::RadialModel radial_model_from_json(const json& j) {
    calibration::RadialModel rm;
    rm.degree = j.at("degree").get<std::size_t>();
    const auto& planes = j.at("terms");
    if (!planes.is_array() || planes.size() != calibration::kPlaneCount) {
        throw ConfigError("radial model needs 8 term lists");
    }
    for (std::size_t k = 0; k < calibration::kPlaneCount; ++k) {
        rm.terms[k] = planes[k].get<std::vector<double>>();
        if (rm.terms[k].size() != rm.degree + 1) throw ConfigError("radial model term count does not match degree");
    }
    return rm;
}

inline json to_json(const fusion::OffsetModel& om) { return {{"nu", om.nu}, {"delta", om.delta}}; }

inline fusion::OffsetModel offset_model_from_json(const json& j) {
    fusion::OffsetModel om;
    om.nu = j.at("nu").get<std::size_t>();
    om.delta = j.at("delta").get<std::vector<std::vector<double>>>();
    om.validate();
    return om;
}

inline json to_json(const burst::BurstSpec& s) {
    return {{"n_frames", s.n_frames},
            {"mode", s.mode == burst::PathMode::walk ? "walk" : "hover"},
            {"overlap_range", {s.overlap_min, s.overlap_max}},
            {"perturbation",
             {{"max_translation_px", s.perturbation.max_translation_px},
              {"perspective_sigma", s.perturbation.perspective_sigma}}},
            {"noise_sigma2", s.noise_sigma2},
            {"fpn_range", {s.fpn_min, s.fpn_max}},
            {"seed", s.seed},
            {"quantize", s.quantize},
            {"normalize", s.normalize},
            {"normalization",
             {{"gray_min", s.normalization.gray_min},
              {"gray_max", s.normalization.gray_max},
              {"temperature_min", s.normalization.temperature_min},
              {"temperature_max", s.normalization.temperature_max}}}};
}

/// Every field optional; missing fields keep their defaults.
inline burst::BurstSpec burst_spec_from_json(const json& j) {
    burst::BurstSpec s;
    try {
        s.n_frames = j.value("n_frames", s.n_frames);
        if (j.contains("mode")) {
            const auto mode = j.at("mode").get<std::string>();
            if (mode == "walk") {
                s.mode = burst::PathMode::walk;
            } else if (mode == "hover") {
                s.mode = burst::PathMode::hover;
            } else {
                throw ConfigError("burst mode must be walk or hover, got " + mode);
            }
        }
        if (j.contains("overlap_range")) {
            const auto r = j.at("overlap_range").get<std::vector<double>>();
            if (r.size() != 2) throw ConfigError("overlap_range needs two values");
            s.overlap_min = r[0];
            s.overlap_max = r[1];
        }
        if (j.contains("perturbation")) {
            const auto& p = j.at("perturbation");
            s.perturbation.max_translation_px = p.value("max_translation_px", s.perturbation.max_translation_px);
            s.perturbation.perspective_sigma = p.value("perspective_sigma", s.perturbation.perspective_sigma);
        }
        s.noise_sigma2 = j.value("noise_sigma2", s.noise_sigma2);
        if (j.contains("fpn_range")) {
            const auto r = j.at("fpn_range").get<std::vector<double>>();
            if (r.size() != 2) throw ConfigError("fpn_range needs two values");
            s.fpn_min = r[0];
            s.fpn_max = r[1];
        }
        s.seed = j.value("seed", s.seed);
        s.quantize = j.value("quantize", s.quantize);
        s.normalize = j.value("normalize", s.normalize);
        if (j.contains("normalization")) {
            const auto& n = j.at("normalization");
            s.normalization.gray_min = n.value("gray_min", s.normalization.gray_min);
            s.normalization.gray_max = n.value("gray_max", s.normalization.gray_max);
            s.normalization.temperature_min = n.value("temperature_min", s.normalization.temperature_min);
            s.normalization.temperature_max = n.value("temperature_max", s.normalization.temperature_max);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("burst spec: ") + e.what());
    }
    s.validate();
    return s;
}

inline json to_json(const metrics::ErrorReport& rep) {
    json curve = json::array();
    for (const auto& [t, f] : rep.cumulative) curve.push_back({{"threshold", t}, {"fraction", f}});
    return {{"mae", rep.mae},
            {"max_abs_diff", rep.max_abs_diff},
            {"valid_pixels", rep.valid_pixels},
            {"cumulative", curve}};
}

/// Absolute-difference map as 16-bit PGM plus a sidecar with the °C per count.
inline void write_diff_map(const fs::path& path, const Map& abs_diff) {
    double hi = 0.0;
    for (double v : abs_diff) {
        if (std::isfinite(v)) hi = std::max(hi, v);
    }
    const double scale = hi > 0.0 ? hi / 65535.0 : 1.0;
    Image<std::uint16_t> q(abs_diff.height(), abs_diff.width(), 0);
    for (std::size_t p = 0; p < abs_diff.size(); ++p) {
        if (std::isfinite(abs_diff[p])) {
            q[p] = static_cast<std::uint16_t>(std::clamp(std::round(abs_diff[p] / scale), 0.0, 65535.0));
        }
    }
    write_file(path, encode_pgm(q, 65535));
    write_json(sidecar_path(path), json{{"height", abs_diff.height()},
                                        {"width", abs_diff.width()},
                                        {"units", "degC"},
                                        {"degC_per_count", scale},
                                        {"quantity", "absolute error"}});
}

// ---------------------------------------------------------------------------
// Measurement manifests: [{t_obj, t_amb, frame_path}, ...] or {"samples": [...]},
// frame paths relative to the manifest's directory.

inline calibration::MeasurementSet read_measurement_manifest(const fs::path& manifest) {
    const json j = read_json(manifest);
    const json& list = j.is_array() ? j : j.at("samples");
    const fs::path base = manifest.parent_path();
    std::vector<calibration::MeasurementSample> samples;
    for (const auto& entry : list) {
        try {
            fs::path frame = entry.at("frame_path").get<std::string>();
            if (frame.is_relative()) frame = base / frame;
            samples.push_back({entry.at("t_obj").get<double>(), entry.at("t_amb").get<double>(),
                               read_gray_pgm(frame)});
        } catch (const json::exception& e) {
            throw ConfigError(manifest.string() + ": " + e.what());
        }
    }
    return calibration::MeasurementSet(std::move(samples));
}

// ---------------------------------------------------------------------------
// Burst directories

inline std::string frame_name(const char* stem, std::size_t i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03zu.%s", stem, i, ext);
    return buf;
}

inline json homography_json(const Homography& h) { return h.entries(); }

inline Homography homography_from_json(const json& j) {
    return Homography::from_entries(j.get<std::array<double, 9>>());
}

/// Raw frames (16-bit PGM), view masks and registered masks (8-bit PGM) and
/// burst.json. Raw frames must hold integer gray levels in [0, 65535].
inline void save_burst(const fs::path& dir, const burst::Burst& b) {
    if (b.raw_frames.size() != b.size()) throw ConfigError("only simulated bursts with raw frames can be saved");
    fs::create_directories(dir);
    json frames = json::array();
    for (std::size_t i = 0; i < b.size(); ++i) {
        for (double v : b.raw_frames[i]) {
            if (v != std::round(v) || v < 0.0 || v > 65535.0) {
                throw ConfigError("burst directories store integer gray levels; simulate with quantize enabled");
            }
        }
        const std::string raw = frame_name("raw", i, "pgm");
        const std::string view = frame_name("view_mask", i, "pgm");
        const std::string mask = frame_name("mask", i, "pgm");
        write_gray_pgm(dir / raw, b.raw_frames[i]);
        write_mask_pgm(dir / view, b.view_masks[i]);
        write_mask_pgm(dir / mask, b.masks[i]);
        frames.push_back({{"raw", raw},
                          {"view_mask", view},
                          {"mask", mask},
                          {"true_homography", homography_json(b.true_homographies[i])},
                          {"registration_homography", homography_json(b.registration_homographies[i])},
                          {"overlap", b.overlaps[i]}});
    }
    json meta{{"format", "thermofuse-burst-1"},
              {"t_amb", b.t_amb},
              {"pivot", b.pivot},
              {"height", b.height()},
              {"width", b.width()},
              {"normalized", b.normalized},
              {"seed", b.spec.seed},
              {"spec", to_json(b.spec)},
              {"frames", frames}};
    write_json(dir / "burst.json", meta);
}

inline burst::Burst load_burst(const fs::path& dir) {
    const json meta = read_json(dir / "burst.json");
    burst::Burst b;
    try {
        b.spec = burst_spec_from_json(meta.at("spec"));
        b.t_amb = meta.at("t_amb").get<double>();
        b.pivot = meta.at("pivot").get<std::size_t>();
        b.normalized = meta.at("normalized").get<bool>();
        b.normalization = b.spec.normalization;
        for (const auto& f : meta.at("frames")) {
            b.raw_frames.push_back(read_gray_pgm(dir / f.at("raw").get<std::string>()));
            b.view_masks.push_back(read_mask_pgm(dir / f.at("view_mask").get<std::string>()));
            b.true_homographies.push_back(homography_from_json(f.at("true_homography")));
            b.registration_homographies.push_back(homography_from_json(f.at("registration_homography")));
            b.overlaps.push_back(f.at("overlap").get<double>());
        }
    } catch (const json::exception& e) {
        throw ConfigError((dir / "burst.json").string() + ": " + e.what());
    }
    burst::register_frames(b);
    for (std::size_t i = 0; i < b.size(); ++i) {
        const auto path = dir / meta["frames"][i].at("mask").get<std::string>();
        if (read_mask_pgm(path) != b.masks[i]) {
            throw FormatError(path.string() + ": stored mask disagrees with re-registration", 0);
        }
    }
    return b;
}

}  // namespace thermofuse::io
