#include <gtest/gtest.h>

#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <limits>
#include <random>
#include <string>

#include "thermofuse/io.hpp"
#include "thermofuse/synthetic.hpp"

using namespace thermofuse;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("thermofuse_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

}  // namespace

TEST(Pgm, SixteenBitRoundTrip) {
    Image<std::uint16_t> img(3, 4);
    for (std::size_t p = 0; p < img.size(); ++p) img[p] = static_cast<std::uint16_t>(p * 4000 + 7);
    const std::string bytes = io::encode_pgm(img, 65535);
    EXPECT_EQ(bytes.substr(0, 15), std::string("P5\n4 3\n65535\n\x00\x07", 15));
    EXPECT_EQ(io::decode_pgm(bytes), img);
}

TEST(Pgm, EightBitWithComments) {
    const std::string bytes = std::string("P5\n# made by hand\n2 2 # dims\n255\n") + "\x01\x02\x03\xff";
    const auto img = io::decode_pgm(bytes);
    EXPECT_EQ(img.height(), 2u);
    EXPECT_EQ(img(1, 1), 255);
    EXPECT_EQ(img(0, 1), 2);
}

TEST(Pgm, ErrorsCarryOffsets) {
    try {
        io::decode_pgm("P6\n1 1\n255\n\x00");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
    try {
        io::decode_pgm(std::string("P5\n2 2\n255\n") + "\x01\x02");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 11u);
        EXPECT_NE(std::string(e.what()).find("at byte 11"), std::string::npos);
    }
    try {
        io::decode_pgm("P5\nx 2\n255\n");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 3u);
    }
    EXPECT_THROW(io::decode_pgm(std::string("P5\n1 1\n10\n") + "\x0b"), FormatError);
}

TEST(Coefficients, BinaryLayout) {
    calibration::CoefficientTensor c(2, 3);
    for (std::size_t k = 0; k < calibration::kPlaneCount; ++k)
        for (std::size_t p = 0; p < 6; ++p) c.plane(k)[p] = static_cast<double>(k * 100 + p) + 0.5;
    const std::string bytes = io::encode_coefficients(c);
    ASSERT_EQ(bytes.size(), 8u + 8u + 8u * 6u * 8u);
    EXPECT_EQ(bytes.substr(0, 8), "TFCOEFF1");
    EXPECT_EQ(bytes[8], 2);
    EXPECT_EQ(bytes[12], 3);
    // plane 1, pixel (1, 0) sits at 16 + 8 * (6 + 3)
    double v = 0.0;
    std::memcpy(&v, bytes.data() + 16 + 8 * 9, 8);
    EXPECT_EQ(v, 103.5);
    EXPECT_EQ(io::decode_coefficients(bytes), c);
}

TEST(Coefficients, TruncationReportsOffset) {
    const std::string bytes = io::encode_coefficients(calibration::CoefficientTensor(2, 2));
    try {
        io::decode_coefficients(bytes.substr(0, 100));
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 16u);
    }
    std::string nan = bytes;
    const double q = std::numeric_limits<double>::quiet_NaN();
    std::memcpy(nan.data() + 16 + 8 * 5, &q, 8);
    try {
        io::decode_coefficients(nan);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 56u);
    }
}

TEST(FloatMap, RoundTripWithSidecar) {
    TempDir dir;
    Map m(3, 5);
    for (std::size_t p = 0; p < m.size(); ++p) m[p] = 20.0 + 0.25 * static_cast<double>(p);
    const auto path = dir.path() / "est.f32";
    io::write_float_map(path, m);
    EXPECT_EQ(fs::file_size(path), 60u);
    const auto meta = io::read_json(io::sidecar_path(path));
    EXPECT_EQ(meta["height"], 3);
    EXPECT_EQ(meta["width"], 5);
    EXPECT_EQ(meta["dtype"], "float32le");
    EXPECT_EQ(meta["units"], "degC");
    EXPECT_EQ(io::read_float_map(path), m);
}

TEST(FloatMap, SizeMismatch) {
    TempDir dir;
    const auto path = dir.path() / "bad.f32";
    io::write_float_map(path, Map(2, 2, 1.0));
    io::write_file(path, std::string(12, '\0'));
    EXPECT_THROW(io::read_float_map(path), FormatError);
}

TEST(Json, RadialAndOffsetModels) {
    const auto rm = synthetic::reference_radial_model();
    const auto back = io::radial_model_from_json(nlohmann::json::parse(io::to_json(rm).dump()));
    EXPECT_EQ(back.degree, rm.degree);
    EXPECT_EQ(back.terms, rm.terms);

    fusion::OffsetModel om = fusion::OffsetModel::zeros(1);
    om.delta = {{0.1, 1e-17}, {-3.5, 0.3333333333333333}};
    const auto om2 = io::offset_model_from_json(nlohmann::json::parse(io::to_json(om).dump()));
    EXPECT_EQ(om2.delta, om.delta);
    EXPECT_THROW(io::offset_model_from_json({{"nu", 2}, {"delta", {{1.0}}}}), ShapeError);
}

TEST(Json, BurstSpecDefaultsAndOverrides) {
    const auto empty = io::burst_spec_from_json(nlohmann::json::object());
    EXPECT_EQ(empty.n_frames, 7u);
    EXPECT_EQ(empty.seed, 42u);
    EXPECT_EQ(empty.overlap_min, 0.6);
    const auto s = io::burst_spec_from_json(
        {{"n_frames", 3}, {"mode", "walk"}, {"noise_sigma2", 0.0}, {"overlap_range", {0.7, 0.75}}});
    EXPECT_EQ(s.n_frames, 3u);
    EXPECT_EQ(s.mode, burst::PathMode::walk);
    EXPECT_EQ(s.overlap_max, 0.75);
    const auto round = io::burst_spec_from_json(io::to_json(s));
    EXPECT_EQ(io::to_json(round), io::to_json(s));
    EXPECT_THROW(io::burst_spec_from_json({{"mode", "orbit"}}), ConfigError);
    EXPECT_THROW(io::burst_spec_from_json({{"n_frames", "three"}}), ConfigError);
    EXPECT_THROW(io::burst_spec_from_json({{"overlap_range", {0.9, 0.1}}}), ConfigError);
}

TEST(MeasurementManifest, RelativePaths) {
    TempDir dir;
    const auto c = synthetic::reference_camera(4, 4);
    nlohmann::json list = nlohmann::json::array();
    int i = 0;
    for (double a : {-10.0, 10.0, 30.0, 50.0}) {
        for (double t : {10.0, 60.0}) {
            const std::string name = "frames/f" + std::to_string(i++) + ".pgm";
            io::write_gray_pgm(dir.path() / name, calibration::synthesize_frame(TemperatureMap(4, 4, t), a, c));
            list.push_back({{"t_obj", t}, {"t_amb", a}, {"frame_path", name}});
        }
    }
    io::write_json(dir.path() / "manifest.json", {{"samples", list}});
    const auto ms = io::read_measurement_manifest(dir.path() / "manifest.json");
    EXPECT_EQ(ms.size(), 8u);
    EXPECT_EQ(ms.samples()[3].t_obj, 60.0);
    for (double v : ms.samples()[0].frame) EXPECT_EQ(v, std::round(v));
    io::write_json(dir.path() / "bare.json", list);
    EXPECT_EQ(io::read_measurement_manifest(dir.path() / "bare.json").size(), 8u);
}

TEST(BurstDirectory, SaveLoadRoundTrip) {
    TempDir dir;
    const auto c = synthetic::reference_camera(24, 24);
    const auto x = synthetic::scene(24, 24, 5);
    burst::BurstSpec spec;
    spec.n_frames = 4;
    const auto b = burst::make_burst(x, 12.5, c, spec);
    io::save_burst(dir.path() / "b", b);
    EXPECT_TRUE(fs::exists(dir.path() / "b" / "raw_003.pgm"));
    EXPECT_TRUE(fs::exists(dir.path() / "b" / "mask_000.pgm"));
    const auto loaded = io::load_burst(dir.path() / "b");
    EXPECT_EQ(loaded.frames, b.frames);
    EXPECT_EQ(loaded.masks, b.masks);
    EXPECT_EQ(loaded.raw_frames, b.raw_frames);
    EXPECT_EQ(loaded.true_homographies, b.true_homographies);
    EXPECT_EQ(loaded.registration_homographies, b.registration_homographies);
    EXPECT_EQ(loaded.overlaps, b.overlaps);
    EXPECT_EQ(loaded.pivot, b.pivot);
    EXPECT_EQ(loaded.t_amb, 12.5);
}

TEST(BurstDirectory, RefusesUnquantisedFrames) {
    TempDir dir;
    const auto c = synthetic::reference_camera(8, 8);
    burst::BurstSpec spec;
    spec.quantize = false;
    const auto b = burst::make_burst(TemperatureMap(8, 8, 30.0), 0.0, c, spec);
    EXPECT_THROW(io::save_burst(dir.path(), b), ConfigError);
}

TEST(BurstDirectory, DetectsTamperedMask) {
    TempDir dir;
    const auto c = synthetic::reference_camera(16, 16);
    burst::BurstSpec spec;
    spec.n_frames = 3;
    io::save_burst(dir.path(), burst::make_burst(synthetic::scene(16, 16, 1), 0.0, c, spec));
    Mask wrong(16, 16, 1);
    io::write_mask_pgm(dir.path() / "mask_000.pgm", wrong);
    EXPECT_THROW(io::load_burst(dir.path()), FormatError);
}

TEST(DiffMap, ScaleSidecar) {
    TempDir dir;
    Map d(2, 2, 0.0);
    d(1, 1) = 2.0;
    d(0, 1) = std::numeric_limits<double>::quiet_NaN();
    io::write_diff_map(dir.path() / "diff.pgm", d);
    const auto meta = io::read_json(dir.path() / "diff.pgm.json");
    const double scale = meta["degC_per_count"];
    const auto img = io::decode_pgm(io::read_file(dir.path() / "diff.pgm"));
    EXPECT_EQ(img(1, 1), 65535);
    EXPECT_EQ(img(0, 1), 0);
    EXPECT_NEAR(img(1, 1) * scale, 2.0, 1e-12);
}

TEST(Files, MissingFileIsIoError) {
    EXPECT_THROW(io::read_file("/nonexistent/thermofuse/file"), IoError);
}
