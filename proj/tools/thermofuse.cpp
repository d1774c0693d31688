// thermofuse: command-line driver for calibration, burst synthesis, fusion and evaluation.

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "thermofuse/thermofuse.hpp"

using namespace thermofuse;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitUser = 2;

// ---------------------------------------------------------------------------
// Plumbing

std::string config_scalar(const json& v, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw ConfigError("config key '" + key + "' must be a scalar or a list of scalars");
}

/// Fills options not given on the command line from a flat JSON object such
/// as {"seed": 3, "t-amb": [-10, 10]}; lists become comma-separated values.
void apply_json_config(CLI::App& sub, const std::string& path) {
    const json j = io::read_json(path);
    if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        CLI::Option* opt = sub.get_option_no_throw("--" + key);
        if (opt == nullptr || key == "config" || key == "help") {
            throw ConfigError(path + ": unknown option '" + key + "' for " + sub.get_name());
        }
        if (opt->count() > 0) continue;
        std::string text;
        if (value.is_array()) {
            for (const auto& v : value) text += (text.empty() ? "" : ",") + config_scalar(v, key);
        } else {
            text = config_scalar(value, key);
        }
        try {
            opt->add_result(text);
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw ConfigError(path + ": option '" + key + "': " + e.what());
        }
    }
}

void require_options(const CLI::App& sub, std::initializer_list<const char*> names) {
    for (const char* name : names) {
        if (sub.get_option(std::string("--") + name)->count() == 0) {
            throw ConfigError(sub.get_name() + ": --" + name + " is required (flag or config key)");
        }
    }
}

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        try {
            out.push_back(std::stod(item, &used));
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos) {
            throw ConfigError(what + ": '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw ConfigError(what + " is empty");
    return out;
}

std::vector<std::size_t> parse_counts(const std::string& text, const std::string& what) {
    std::vector<std::size_t> out;
    for (double v : parse_doubles(text, what)) {
        if (v < 1.0 || v != std::floor(v)) throw ConfigError(what + " entries must be positive integers");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Exclusive marker file guarding an output directory for the lifetime of a command.
class OutputLock {
public:
    explicit OutputLock(const fs::path& dir) : path_((dir.empty() ? fs::path(".") : dir) / ".thermofuse.lock") {
        fs::create_directories(path_.parent_path());
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            if (errno == EEXIST) {
                throw IoError("output directory " + path_.parent_path().string() +
                              " is locked by another run (remove " + path_.string() + " if stale)");
            }
            throw IoError("cannot create lock file " + path_.string());
        }
        ::close(fd);
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;
    ~OutputLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

private:
    fs::path path_;
};

/// Effective option values of a subcommand, excluding output locations so
/// that runs differing only in where they write produce identical manifests.
json option_config(const CLI::App& sub) {
    static const std::set<std::string> skip{"help", "out", "out-dir"};
    json j = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string& name = opt->get_single_name();
        if (skip.count(name)) continue;
        if (opt->count() > 0) {
            const auto& res = opt->results();
            j[name] = res.size() == 1 ? json(res.front()) : json(res);
        } else if (!opt->get_default_str().empty()) {
            j[name] = opt->get_default_str();
        }
    }
    return j;
}

json manifest(const std::string& command, const json& config, std::uint64_t seed, const json& extras = {}) {
    json m{{"tool", "thermofuse"},
           {"version", kVersion},
           {"command", command},
           {"config_hash", fnv1a_hex(config.dump())},
           {"seed", seed},
           {"config", config}};
    if (extras.is_object()) {
        for (const auto& [k, v] : extras.items()) m[k] = v;
    }
    return m;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
    return p.parent_path() / (p.stem().string() + suffix);
}

fs::path manifest_for_file(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

calibration::CoefficientTensor camera_or_reference(const std::string& path, std::size_t h, std::size_t w) {
    return path.empty() ? synthetic::reference_camera(h, w) : io::read_coefficients(path);
}

fusion::KernelSpec parse_kernels(const std::string& text, std::size_t k, double gain) {
    fusion::KernelSpec spec;
    spec.kernel_size = k;
    spec.gain = gain;
    if (text == "identity") {
        spec.kind = fusion::KernelKind::identity;
    } else if (text == "average") {
        spec.kind = fusion::KernelKind::average;
    } else if (text == "shifted") {
        spec.kind = fusion::KernelKind::shifted;
    } else if (text.rfind("file:", 0) == 0 && text.size() > 5) {
        spec.kind = fusion::KernelKind::file;
        spec.path = text.substr(5);
    } else {
        throw ConfigError("--kernels must be identity, average, shifted or file:PATH (got '" + text + "')");
    }
    return spec;
}

fusion::KernelStack kernels_for(fusion::KernelSpec spec, const burst::Burst& b) {
    if (spec.kind == fusion::KernelKind::file) {
        return fusion::kernel_provider(spec, b.size(), b.height(), b.width(), io::read_file(spec.path));
    }
    if (spec.kind == fusion::KernelKind::shifted) {
        spec.shifts = fusion::residual_shifts(b);
        // Grow the kernel until every residual shift fits.
        std::size_t reach = 0;
        for (const auto& s : spec.shifts) {
            reach = std::max({reach, static_cast<std::size_t>(std::abs(s.dx)), static_cast<std::size_t>(std::abs(s.dy))});
        }
        spec.kernel_size = std::max(spec.kernel_size, 2 * reach + 1);
    }
    return fusion::kernel_provider(spec, b.size(), b.height(), b.width());
}

/// Scalar kernel gain mapping normalised gray levels to normalised temperature,
/// from the mean inverse responsivity at t_ref.
double normalized_gain(const calibration::CoefficientTensor& c, double t_amb, double t_ref,
                       const burst::Normalization& norm) {
    const auto gd = fusion::gain_offset_maps(c, t_amb, t_ref);
    double g = 0.0;
    for (double v : gd.gain) g += v;
    g /= static_cast<double>(gd.gain.size());
    return g * (norm.gray_max - norm.gray_min) / (norm.temperature_max - norm.temperature_min);
}

double map_mean(const Map& m) {
    double s = 0.0;
    for (double v : m) s += v;
    return s / static_cast<double>(m.size());
}

// ---------------------------------------------------------------------------
// Commands

struct CameraOptions {
    std::size_t height = 64;
    std::size_t width = 64;
    std::string out;
};

void run_camera(const CameraOptions& o, const CLI::App& sub) {
    const fs::path out = o.out;
    OutputLock lock(out.parent_path());
    io::write_coefficients(out, synthetic::reference_camera(o.height, o.width));
    io::write_json(manifest_for_file(out),
                   manifest("camera", option_config(sub), 0,
                            {{"radial_model", io::to_json(synthetic::reference_radial_model())}}));
    std::cout << "wrote " << o.height << "x" << o.width << " reference coefficients to " << out.string() << "\n";
}

struct SceneOptions {
    std::size_t height = 64;
    std::size_t width = 64;
    std::uint64_t seed = 0;
    synthetic::SceneSpec spec;
    std::string out;
};

void run_scene(const SceneOptions& o, const CLI::App& sub) {
    const fs::path out = o.out;
    OutputLock lock(out.parent_path());
    const auto x = synthetic::scene(o.height, o.width, o.seed, o.spec);
    io::write_float_map(out, x);
    io::write_preview_pgm(with_suffix(out, ".pgm"), x);
    io::write_json(manifest_for_file(out), manifest("scene", option_config(sub), o.seed));
    std::cout << "wrote scene to " << out.string() << "\n";
}

struct SynthOptions {
    std::string coeffs;
    std::size_t height = 64;
    std::size_t width = 64;
    std::string t_obj = "10,20,30,40,50,60";
    std::string t_amb = "-10,10,30,50";
    double noise_sigma2 = 0.0;
    std::uint64_t seed = 0;
    std::string out_dir;
};

void run_synth(const SynthOptions& o, const CLI::App& sub) {
    const fs::path dir = o.out_dir;
    OutputLock lock(dir);
    const auto c = camera_or_reference(o.coeffs, o.height, o.width);
    const auto t_obj = parse_doubles(o.t_obj, "--t-obj");
    const auto t_amb = parse_doubles(o.t_amb, "--t-amb");
    if (!(o.noise_sigma2 >= 0.0)) throw ConfigError("--noise-sigma2 must be non-negative");
    burst::Rng rng = burst::make_rng(o.seed, synthetic::stream::kMeasurement);
    json samples = json::array();
    std::size_t i = 0;
    for (double a : t_amb) {
        for (double t : t_obj) {
            GrayFrame f = calibration::synthesize_frame(TemperatureMap(c.height(), c.width(), t), a, c);
            f = burst::add_noise(f, o.noise_sigma2, rng);
            const std::string name = "frames/" + io::frame_name("frame", i++, "pgm");
            io::write_gray_pgm(dir / name, f);
            samples.push_back({{"t_obj", t}, {"t_amb", a}, {"frame_path", name}});
        }
    }
    io::write_json(dir / "measurements.json", {{"samples", samples}});
    io::write_json(dir / "manifest.json", manifest("synth", option_config(sub), o.seed));
    std::cout << "wrote " << samples.size() << " measurement frames to " << dir.string() << "\n";
}

struct CalibrateOptions {
    std::string manifest;
    std::string out;
    int radial_degree = -1;
    double outlier_residual = std::numeric_limits<double>::infinity();
};

void run_calibrate(const CalibrateOptions& o, const CLI::App& sub) {
    const fs::path out = o.out;
    const auto ms = io::read_measurement_manifest(o.manifest);
    calibration::FitOptions fo;
    fo.outlier_residual = o.outlier_residual;
    const auto fit = calibration::fit_per_pixel(ms, fo);

    OutputLock lock(out.parent_path());
    io::write_coefficients(out, fit.coefficients);

    double mean = 0.0;
    double worst = 0.0;
    std::size_t excluded = 0;
    for (std::size_t p = 0; p < fit.residual_rms.size(); ++p) {
        mean += fit.residual_rms[p];
        worst = std::max(worst, fit.residual_rms[p]);
        excluded += fit.excluded[p];
    }
    mean /= static_cast<double>(fit.residual_rms.size());
    json extras{{"samples", ms.size()},
                {"rank", fit.rank},
                {"residual_rms_mean", mean},
                {"residual_rms_max", worst},
                {"excluded_pixels", excluded}};

    std::cout << "samples " << ms.size() << ", rank " << fit.rank << "\n"
              << "residual rms (gray levels): mean " << mean << ", max " << worst << "\n"
              << "pixels above outlier threshold: " << excluded << "\n";

    if (o.radial_degree >= 0) {
        const auto rm = calibration::fit_radial(fit.coefficients, static_cast<std::size_t>(o.radial_degree),
                                                excluded > 0 ? &fit.excluded : nullptr);
        const fs::path rm_path = with_suffix(out, "_radial.json");
        const fs::path rc_path = with_suffix(out, "_radial.bin");
        io::write_json(rm_path, io::to_json(rm));
        io::write_coefficients(rc_path, calibration::reconstruct_coeffs(rm, ms.height(), ms.width()));
        extras["radial_model"] = rm_path.filename().string();
        extras["radial_coefficients"] = rc_path.filename().string();
        std::cout << "radial model (degree " << o.radial_degree << ") written to " << rm_path.string() << "\n";
    }
    io::write_json(manifest_for_file(out), manifest("calibrate", option_config(sub), 0, extras));
}

struct BurstOptions {
    std::string scene;
    std::string coeffs;
    std::string config;
    double t_amb = 20.0;
    std::size_t n_frames = 0;
    std::uint64_t seed = 0;
    bool augment = false;
    std::string out_dir;
};

void run_burst(const BurstOptions& o, const CLI::App& sub) {
    burst::BurstSpec spec = o.config.empty() ? burst::BurstSpec{} : io::burst_spec_from_json(io::read_json(o.config));
    if (sub.count("--n-frames")) spec.n_frames = o.n_frames;
    if (sub.count("--seed")) spec.seed = o.seed;
    spec.validate();

    TemperatureMap x = io::read_float_map(o.scene);
    if (o.augment) x = burst::augment_scene(x, spec.seed);
    const auto c = camera_or_reference(o.coeffs, x.height(), x.width());
    const auto b = burst::make_burst(x, o.t_amb, c, spec);

    const fs::path dir = o.out_dir;
    OutputLock lock(dir);
    io::save_burst(dir, b);
    double lo = 1.0;
    double hi = 0.0;
    double mean = 0.0;
    std::size_t others = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (i == b.pivot) continue;
        lo = std::min(lo, b.overlaps[i]);
        hi = std::max(hi, b.overlaps[i]);
        mean += b.overlaps[i];
        ++others;
    }
    json stats{{"frames", b.size()}, {"pivot", b.pivot}, {"overlaps", b.overlaps}};
    if (others > 0) {
        stats["overlap_min"] = lo;
        stats["overlap_max"] = hi;
        stats["overlap_mean"] = mean / static_cast<double>(others);
    }
    json config = option_config(sub);
    config["spec"] = io::to_json(spec);
    io::write_json(dir / "manifest.json", manifest("burst", config, spec.seed, {{"overlap_stats", stats}}));
    std::cout << "wrote " << b.size() << "-frame burst to " << dir.string() << "\n";
}

struct FitOffsetOptions {
    std::string coeffs;
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t nu = 4;
    std::size_t scenes = 500;
    std::size_t n_frames = 3;
    std::string kernels = "identity";
    std::size_t kernel_size = 1;
    double gain = 1.0;
    double t_amb_min = -10.0;
    double t_amb_max = 50.0;
    double noise_sigma2 = 5.0;
    double holdout = 0.2;
    std::uint64_t seed = 7;
    std::string out;
};

void run_fit_offset(const FitOffsetOptions& o, const CLI::App& sub) {
    if (!(o.holdout >= 0.0 && o.holdout < 1.0)) throw ConfigError("--holdout must lie in [0, 1)");
    const auto c = camera_or_reference(o.coeffs, o.height, o.width);
    synthetic::CorpusSpec cs;
    cs.scenes = o.scenes;
    cs.height = c.height();
    cs.width = c.width();
    cs.t_amb_min = o.t_amb_min;
    cs.t_amb_max = o.t_amb_max;
    cs.n_frames = o.n_frames;
    cs.noise_sigma2 = o.noise_sigma2;
    cs.kernels = parse_kernels(o.kernels, o.kernel_size, o.gain);
    if (cs.kernels.kind == fusion::KernelKind::shifted || cs.kernels.kind == fusion::KernelKind::file) {
        throw ConfigError("fit-offset supports identity or average kernels");
    }
    cs.seed = o.seed;
    const auto corpus = synthetic::offset_corpus(c, cs);
    const auto n_test = static_cast<std::size_t>(std::floor(o.holdout * static_cast<double>(corpus.size())));
    const std::span<const fusion::OffsetSample> all(corpus);
    const auto train = all.first(corpus.size() - n_test);
    const auto test = all.last(n_test);
    const auto om = fusion::fit_offset(train, o.nu);

    const burst::Normalization norm{};
    const double scale = norm.temperature_max - norm.temperature_min;
    auto mae_c = [&](std::span<const fusion::OffsetSample> set) {
        double s = 0.0;
        for (const auto& smp : set) s += std::abs(fusion::offset_eval(smp.frame_means, smp.t_amb, om) - smp.target);
        return set.empty() ? 0.0 : scale * s / static_cast<double>(set.size());
    };
    const double train_mae = mae_c(train);
    const double test_mae = mae_c(test);

    const fs::path out = o.out;
    OutputLock lock(out.parent_path());
    io::write_json(out, io::to_json(om));
    io::write_json(manifest_for_file(out),
                   manifest("fit-offset", option_config(sub), o.seed,
                            {{"train_samples", train.size()},
                             {"heldout_samples", test.size()},
                             {"train_mae_degC", train_mae},
                             {"heldout_mae_degC", test_mae}}));
    std::cout << "offset model nu=" << o.nu << " fitted on " << train.size() << " bursts\n"
              << "train MAE " << train_mae << " degC, held-out MAE " << test_mae << " degC over " << test.size()
              << " bursts\n";
}

struct FuseOptions {
    std::string burst_dir;
    std::string kernels = "identity";
    std::size_t kernel_size = 1;
    double gain = 1.0;
    std::string offset;
    std::string out;
};

void run_fuse(const FuseOptions& o, const CLI::App& sub) {
    const auto b = io::load_burst(o.burst_dir);
    const auto ks = kernels_for(parse_kernels(o.kernels, o.kernel_size, o.gain), b);
    const auto om = o.offset.empty() ? fusion::OffsetModel::zeros(0) : io::offset_model_from_json(io::read_json(o.offset));
    const TemperatureMap est = fusion::fuse(b, ks, om);

    const fs::path out = o.out;
    OutputLock lock(out.parent_path());
    io::write_float_map(out, est);
    io::write_preview_pgm(with_suffix(out, ".pgm"), est);
    io::write_mask_pgm(with_suffix(out, ".mask.pgm"), fusion::coverage(b));
    io::write_json(manifest_for_file(out), manifest("fuse", option_config(sub), b.spec.seed,
                                                    {{"kernel_size", ks.kernel_size()}, {"frames", b.size()}}));
    std::cout << "fused " << b.size() << " frames into " << out.string() << "\n";
}

struct EvalOptions {
    std::string estimate;
    std::string truth;
    std::string mask;
    std::string thresholds = "0.1,0.25,0.5,1,2";
    std::string out;
};

void run_eval(const EvalOptions& o, const CLI::App& sub) {
    const Map est = io::read_float_map(o.estimate);
    const Map truth = io::read_float_map(o.truth);
    if (est.height() != truth.height() || est.width() != truth.width()) {
        throw ShapeError("estimate is " + std::to_string(est.height()) + "x" + std::to_string(est.width()) +
                         " but truth is " + std::to_string(truth.height()) + "x" + std::to_string(truth.width()));
    }
    Mask mask = o.mask.empty() ? full_mask(truth.height(), truth.width()) : io::read_mask_pgm(o.mask);
    require_same_shape(mask, truth, "eval mask");
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!std::isfinite(est[p]) || !std::isfinite(truth[p])) mask[p] = 0;
    }
    const auto thresholds = parse_doubles(o.thresholds, "--thresholds");
    const auto rep = metrics::error_report(est, truth, &mask, thresholds);

    const fs::path out = o.out;
    OutputLock lock(out.parent_path());
    io::write_json(out, io::to_json(rep));
    io::write_diff_map(with_suffix(out, ".diff.pgm"), rep.abs_diff);
    io::write_json(manifest_for_file(out), manifest("eval", option_config(sub), 0));
    std::cout << "MAE " << rep.mae << " degC over " << rep.valid_pixels << " pixels (max " << rep.max_abs_diff
              << ")\n";
}

struct SweepOptions {
    std::string config;
    std::string n_list;
    std::string kernels;
    std::size_t kernel_size = 0;
    std::size_t nu = 0;
    std::size_t repeats = 0;
    std::uint64_t seed = 0;
    std::string out;
};

/// burst -> fuse -> eval for each N in a list, averaged over repeats.
void run_sweep(const SweepOptions& o, const CLI::App& sub) {
    json cfg = o.config.empty() ? json::object() : io::read_json(o.config);
    if (!cfg.is_object()) throw ConfigError("sweep config must be a JSON object");
    if (sub.count("--seed")) cfg["seed"] = o.seed;
    if (sub.count("--n-list")) cfg["n_list"] = parse_counts(o.n_list, "--n-list");
    if (sub.count("--kernels")) cfg["kernels"] = o.kernels;
    if (sub.count("--kernel-size")) cfg["kernel_size"] = o.kernel_size;
    if (sub.count("--repeats")) cfg["repeats"] = o.repeats;
    if (sub.count("--nu")) {
        if (!cfg.contains("offset") || !cfg["offset"].is_object()) cfg["offset"] = json::object();
        cfg["offset"]["nu"] = o.nu;
    }

    try {
        const std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
        const std::size_t h = cfg.value("height", std::size_t{64});
        const std::size_t w = cfg.value("width", std::size_t{64});
        const double t_amb = cfg.value("t_amb", 20.0);
        const auto n_list = cfg.value("n_list", std::vector<std::size_t>{1, 3, 5, 7});
        const std::size_t repeats = cfg.value("repeats", std::size_t{1});
        const std::string kernels = cfg.value("kernels", std::string("average"));
        const std::size_t kernel_size = cfg.value("kernel_size", std::size_t{1});
        if (n_list.empty()) throw ConfigError("n_list is empty");
        if (repeats == 0) throw ConfigError("repeats must be at least 1");

        const auto c = camera_or_reference(cfg.value("coeffs", std::string()), h, w);
        const TemperatureMap x = cfg.contains("scene") ? io::read_float_map(cfg["scene"].get<std::string>())
                                                       : synthetic::scene(c.height(), c.width(), seed);
        require_same_shape(x, c.plane(0), "sweep scene vs coefficients");

        json spec_json = io::to_json(synthetic::static_burst_spec(1, seed));
        if (cfg.contains("burst")) spec_json.merge_patch(cfg["burst"]);
        const burst::BurstSpec base = io::burst_spec_from_json(spec_json);

        double gain = 1.0;
        const json g = cfg.value("gain", json("auto"));
        if (g.is_string() && g.get<std::string>() == "auto") {
            gain = normalized_gain(c, t_amb, map_mean(x), base.normalization);
        } else {
            gain = g.get<double>();
        }
        const fusion::KernelSpec kspec = parse_kernels(kernels, kernel_size, gain);
        if (kspec.kind == fusion::KernelKind::file) throw ConfigError("sweep-n cannot use a kernel file across N");

        fusion::OffsetModel om;
        const json off = cfg.value("offset", json::object());
        if (off.is_string()) {
            om = io::offset_model_from_json(io::read_json(off.get<std::string>()));
        } else {
            synthetic::CorpusSpec cs;
            cs.scenes = off.value("scenes", std::size_t{200});
            cs.height = c.height();
            cs.width = c.width();
            cs.n_frames = off.value("n_frames", std::size_t{3});
            cs.noise_sigma2 = base.noise_sigma2;
            cs.kernels = kspec;
            if (cs.kernels.kind == fusion::KernelKind::shifted) cs.kernels.kind = fusion::KernelKind::identity;
            cs.seed = off.value("seed", seed + 1);
            const auto corpus = synthetic::offset_corpus(c, cs);
            om = fusion::fit_offset(corpus, off.value("nu", std::size_t{4}));
        }

        std::string csv = "n_frames,mae\n";
        json rows = json::array();
        for (std::size_t n : n_list) {
            double total = 0.0;
            for (std::size_t r = 0; r < repeats; ++r) {
                burst::BurstSpec spec = base;
                spec.n_frames = n;
                spec.seed = seed + r;
                const auto b = burst::make_burst(x, t_amb, c, spec);
                const TemperatureMap est = fusion::fuse(b, kernels_for(kspec, b), om);
                const Mask cov = fusion::coverage(b);
                total += metrics::mae(est, x, &cov);
            }
            const double mae = total / static_cast<double>(repeats);
            char line[64];
            std::snprintf(line, sizeof line, "%zu,%.9g\n", n, mae);
            csv += line;
            std::cout << line;
            rows.push_back({{"n_frames", n}, {"mae", mae}});
        }

        const fs::path out = o.out;
        OutputLock lock(out.parent_path());
        io::write_file(out, csv);
        json config = option_config(sub);
        config["sweep"] = cfg;
        io::write_json(manifest_for_file(out),
                       manifest("sweep-n", config, seed, {{"gain", gain}, {"offset_model", io::to_json(om)}, {"rows", rows}}));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("sweep config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

/// Subcommand whose --config is a flat JSON of option values (flags win).
CLI::App* command(CLI::App& app, const std::string& name, const std::string& help, std::string* config) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->option_defaults()->always_capture_default();
    if (config) sub->add_option("--config", *config, "JSON object of option values (command-line flags take precedence)");
    return sub;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"thermofuse: radiometric thermal burst simulation, calibration and fusion"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    std::function<void()> run;
    std::string generic_config;

    CameraOptions cam;
    CLI::App* s_cam = command(app, "camera", "Write the reference camera's coefficient tensor", &generic_config);
    s_cam->add_option("--height", cam.height, "Rows");
    s_cam->add_option("--width", cam.width, "Columns");
    s_cam->add_option("--out", cam.out, "Coefficient file");
    s_cam->callback([&] {
        run = [&] {
            if (!generic_config.empty()) apply_json_config(*s_cam, generic_config);
            require_options(*s_cam, {"out"});
            run_camera(cam, *s_cam);
        };
    });

    SceneOptions sc;
    CLI::App* s_scene = command(app, "scene", "Write a synthetic temperature map (°C)", &generic_config);
    s_scene->add_option("--height", sc.height, "Rows");
    s_scene->add_option("--width", sc.width, "Columns");
    s_scene->add_option("--seed", sc.seed, "Random seed");
    s_scene->add_option("--base-min", sc.spec.base_min, "Lower bound of the uniform base temperature");
    s_scene->add_option("--base-max", sc.spec.base_max, "Upper bound of the uniform base temperature");
    s_scene->add_option("--blobs", sc.spec.blobs, "Number of Gaussian hot/cold spots");
    s_scene->add_option("--amplitude", sc.spec.amplitude, "Largest spot amplitude (°C)");
    s_scene->add_option("--sigma-min", sc.spec.sigma_min, "Smallest spot radius (px)");
    s_scene->add_option("--sigma-max", sc.spec.sigma_max, "Largest spot radius (px)");
    s_scene->add_option("--out", sc.out, "Float map (.f32 with JSON sidecar)");
    s_scene->callback([&] {
        run = [&] {
            if (!generic_config.empty()) apply_json_config(*s_scene, generic_config);
            require_options(*s_scene, {"out"});
            run_scene(sc, *s_scene);
        };
    });

    SynthOptions sy;
    CLI::App* s_synth = command(app, "synth", "Synthesize a blackbody measurement set", &generic_config);
    s_synth->add_option("--coeffs", sy.coeffs, "Coefficient file (default: reference camera)");
    s_synth->add_option("--height", sy.height, "Rows when using the reference camera");
    s_synth->add_option("--width", sy.width, "Columns when using the reference camera");
    s_synth->add_option("--t-obj", sy.t_obj, "Comma-separated target temperatures (°C)");
    s_synth->add_option("--t-amb", sy.t_amb, "Comma-separated ambient temperatures (°C)");
    s_synth->add_option("--noise-sigma2", sy.noise_sigma2, "Noise variance (gray levels squared)");
    s_synth->add_option("--seed", sy.seed, "Random seed");
    s_synth->add_option("--out-dir", sy.out_dir, "Output directory");
    s_synth->callback([&] {
        run = [&] {
            if (!generic_config.empty()) apply_json_config(*s_synth, generic_config);
            require_options(*s_synth, {"out-dir"});
            run_synth(sy, *s_synth);
        };
    });

    CalibrateOptions cal;
    CLI::App* s_cal = command(app, "calibrate", "Fit per-pixel coefficients from a measurement manifest", &generic_config);
    s_cal->add_option("--manifest", cal.manifest, "Measurement manifest JSON");
    s_cal->add_option("--out", cal.out, "Coefficient file");
    s_cal->add_option("--radial-degree", cal.radial_degree, "Also fit a radial model of this degree (-1: off)");
    s_cal->add_option("--outlier-residual", cal.outlier_residual,
                      "Exclude pixels with RMS residual above this from the radial fit");
    s_cal->callback([&] {
        run = [&] {
            if (!generic_config.empty()) apply_json_config(*s_cal, generic_config);
            require_options(*s_cal, {"manifest", "out"});
            run_calibrate(cal, *s_cal);
        };
    });

    BurstOptions bo;
    CLI::App* s_burst = command(app, "burst", "Simulate a registered burst from a temperature map", nullptr);
    s_burst->add_option("--scene", bo.scene, "Temperature map (.f32)");
    s_burst->add_option("--coeffs", bo.coeffs, "Coefficient file (default: reference camera)");
    s_burst->add_option("--config,--spec", bo.config, "Burst spec JSON");
    s_burst->add_option("--t-amb", bo.t_amb, "Ambient temperature (°C)");
    s_burst->add_option("--n-frames", bo.n_frames, "Override the burst spec's frame count");
    s_burst->add_option("--seed", bo.seed, "Override the burst spec's seed");
    s_burst->add_flag("--augment", bo.augment, "Randomly flip/rotate the scene first");
    s_burst->add_option("--out-dir", bo.out_dir, "Burst directory");
    s_burst->callback([&] {
        run = [&] {
            require_options(*s_burst, {"scene", "out-dir"});
            run_burst(bo, *s_burst);
        };
    });

    FitOffsetOptions fo;
    CLI::App* s_fit = command(app, "fit-offset", "Fit the offset polynomial on a synthetic corpus", &generic_config);
    s_fit->add_option("--coeffs", fo.coeffs, "Coefficient file (default: reference camera)");
    s_fit->add_option("--height", fo.height, "Rows when using the reference camera");
    s_fit->add_option("--width", fo.width, "Columns when using the reference camera");
    s_fit->add_option("--nu", fo.nu, "Polynomial degree");
    s_fit->add_option("--scenes", fo.scenes, "Corpus size");
    s_fit->add_option("--n-frames", fo.n_frames, "Frames per burst");
    s_fit->add_option("--kernels", fo.kernels, "identity or average");
    s_fit->add_option("--kernel-size", fo.kernel_size, "Kernel size K (odd)");
    s_fit->add_option("--gain", fo.gain, "Scalar folded into every kernel weight");
    s_fit->add_option("--t-amb-min", fo.t_amb_min, "Lowest ambient temperature (°C)");
    s_fit->add_option("--t-amb-max", fo.t_amb_max, "Highest ambient temperature (°C)");
    s_fit->add_option("--noise-sigma2", fo.noise_sigma2, "Noise variance (gray levels squared)");
    s_fit->add_option("--holdout", fo.holdout, "Fraction of the corpus held out for evaluation");
    s_fit->add_option("--seed", fo.seed, "Corpus seed");
    s_fit->add_option("--out", fo.out, "Offset model JSON");
    s_fit->callback([&] {
        run = [&] {
            if (!generic_config.empty()) apply_json_config(*s_fit, generic_config);
            require_options(*s_fit, {"out"});
            run_fit_offset(fo, *s_fit);
        };
    });

    FuseOptions fu;
    CLI::App* s_fuse = command(app, "fuse", "Estimate temperature from a burst directory", &generic_config);
    s_fuse->add_option("--burst", fu.burst_dir, "Burst directory");
    s_fuse->add_option("--kernels", fu.kernels, "identity | average | shifted | file:PATH");
    s_fuse->add_option("--kernel-size", fu.kernel_size, "Kernel size K (odd)");
    s_fuse->add_option("--gain", fu.gain, "Scalar folded into every kernel weight");
    s_fuse->add_option("--offset", fu.offset, "Offset model JSON (default: zero)");
    s_fuse->add_option("--out", fu.out, "Estimated map (.f32)");
    s_fuse->callback([&] {
        run = [&] {
            if (!generic_config.empty()) apply_json_config(*s_fuse, generic_config);
            require_options(*s_fuse, {"burst", "out"});
            run_fuse(fu, *s_fuse);
        };
    });

    EvalOptions ev;
    CLI::App* s_eval = command(app, "eval", "Compare an estimate with the ground truth", &generic_config);
    s_eval->add_option("--estimate", ev.estimate, "Estimated map (.f32)");
    s_eval->add_option("--truth", ev.truth, "Ground-truth map (.f32)");
    s_eval->add_option("--mask", ev.mask, "Valid-pixel mask PGM (nonzero = valid)");
    s_eval->add_option("--thresholds", ev.thresholds, "Comma-separated cumulative error thresholds (°C)");
    s_eval->add_option("--out", ev.out, "Report JSON");
    s_eval->callback([&] {
        run = [&] {
            if (!generic_config.empty()) apply_json_config(*s_eval, generic_config);
            require_options(*s_eval, {"estimate", "truth", "out"});
            run_eval(ev, *s_eval);
        };
    });

    SweepOptions sw;
    CLI::App* s_sweep = command(app, "sweep-n", "MAE as a function of the number of frames", nullptr);
    s_sweep->add_option("--config", sw.config, "Sweep config JSON");
    s_sweep->add_option("--n-list", sw.n_list, "Comma-separated frame counts");
    s_sweep->add_option("--kernels", sw.kernels, "identity | average | shifted");
    s_sweep->add_option("--kernel-size", sw.kernel_size, "Kernel size K (odd)");
    s_sweep->add_option("--nu", sw.nu, "Offset polynomial degree when fitting");
    s_sweep->add_option("--repeats", sw.repeats, "Bursts per N");
    s_sweep->add_option("--seed", sw.seed, "Base seed");
    s_sweep->add_option("--out", sw.out, "CSV of n_frames,mae");
    s_sweep->callback([&] {
        run = [&] {
            require_options(*s_sweep, {"out"});
            run_sweep(sw, *s_sweep);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUser;
    }

    try {
        run();
    } catch (const thermofuse::Error& e) {
        std::cerr << "thermofuse: error: " << e.what() << "\n";
        return kExitUser;
    } catch (const json::exception& e) {
        std::cerr << "thermofuse: error: " << e.what() << "\n";
        return kExitUser;
    } catch (const std::exception& e) {
        std::cerr << "thermofuse: internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return 0;
}
