#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "nerd/config.hpp"
#include "nerd/io.hpp"
#include "test_support.hpp"

using namespace nerd;
using testing_support::random_volume;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("nerd_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::filesystem::path dir_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

KeyValues parse(const std::string& text) {
  std::istringstream in(text);
  return parse_key_values(in);
}

}  // namespace

// ---- Key-value files ------------------------------------------------------

TEST(KeyValueFile, SkipsCommentsAndTrims) {
  const auto kv = parse("# header\n\n  method = nerd-a  \nlambda=0.2\n\t# indented comment\nlambda = 0.3\n");
  EXPECT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("method"), "nerd-a");
  EXPECT_EQ(kv.at("lambda"), "0.3");
}

TEST(KeyValueFile, ReportsMalformedLines) {
  try {
    parse("a = 1\nnot a pair\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  EXPECT_THROW(parse(" = 3\n"), ConfigError);
  EXPECT_THROW(read_key_values("/nonexistent/file.cfg"), ConfigError);
}

TEST(KeyValueFile, OverridesReplaceValues) {
  KeyValues kv = parse("steps = 30\n");
  apply_override(kv, "steps=5");
  apply_override(kv, " lambda_z = 0 ");
  EXPECT_EQ(kv.at("steps"), "5");
  EXPECT_EQ(kv.at("lambda_z"), "0");
  EXPECT_THROW(apply_override(kv, "steps"), ConfigError);
  EXPECT_THROW(apply_override(kv, "=4"), ConfigError);
}

// ---- RunConfig ------------------------------------------------------------

TEST(RunConfigTest, DefaultsFollowTheStatedSettings) {
  const RunConfig c = RunConfig::from_key_values({});
  EXPECT_EQ(c.sampler.method, Method::nerd_p);
  EXPECT_EQ(c.sampler.lambda, 0.1);
  EXPECT_EQ(c.sampler.lambda_z, 0.05);
  EXPECT_EQ(c.sampler.rho, 1.0);
  EXPECT_EQ(c.sampler.lambda_prime, 1.0);
  EXPECT_EQ(c.sampler.tau, 0.01);
  EXPECT_EQ(c.sampler.sigma, 0.05);
  EXPECT_EQ(c.sampler.steps, 30u);
  EXPECT_EQ(c.sampler.adam_updates, 10u);
  EXPECT_EQ(c.sampler.adam.lr, 1e-3);
  EXPECT_EQ(c.n_views, 8u);
  EXPECT_DOUBLE_EQ(c.sigma_y * c.sigma_y, 0.01);
  EXPECT_EQ(c.geometry().n_detectors, 91u);
  EXPECT_EQ(c.trace_path(), "recon.raw.trace.csv");
  EXPECT_FALSE(c.record_timing);
}

TEST(RunConfigTest, RoundTripsThroughKeyValues) {
  KeyValues kv{{"method", "dds"},        {"lambda", "0.25"},         {"dds_gamma", "0.7"},
               {"seed", "42"},           {"nx", "16"},               {"pdhg_order", "dual_first"},
               {"lr_schedule", "noise"}, {"record_timing", "true"},  {"gmm_components", "0.5:0:0.1, 0.5:1:0.2"},
               {"trace", "t.csv"},       {"n_detectors", "30"}};
  const RunConfig a = RunConfig::from_key_values(kv);
  const RunConfig b = RunConfig::from_key_values(a.to_key_values());
  EXPECT_EQ(a.to_key_values(), b.to_key_values());
  EXPECT_EQ(b.sampler.method, Method::dds);
  EXPECT_EQ(b.sampler.seed, 42u);
  EXPECT_EQ(b.seed, 42u);
  EXPECT_EQ(*b.sampler.dds_gamma, 0.7);
  EXPECT_EQ(b.sampler.pdhg_order, PdhgOrder::dual_first);
  EXPECT_EQ(b.sampler.lr_schedule, LrSchedule::noise);
  EXPECT_TRUE(b.record_timing);
  EXPECT_EQ(b.gmm_components.size(), 2u);
  EXPECT_EQ(b.trace_path(), "t.csv");
  EXPECT_EQ(b.geometry().n_detectors, 30u);
}

TEST(RunConfigTest, EmptyGammaMeansLambdaZ) {
  const RunConfig c = RunConfig::from_key_values({{"dds_gamma", ""}, {"lambda_z", "0.3"}});
  EXPECT_FALSE(c.sampler.dds_gamma.has_value());
  EXPECT_EQ(c.sampler.gamma(), 0.3);
}

TEST(RunConfigTest, RejectsBadInput) {
  const std::vector<KeyValues> bad = {
      {{"no_such_key", "1"}},      {{"lambda", "abc"}},         {{"lambda", "1.0x"}},
      {{"lambda", "nan"}},         {{"lambda", "-1"}},          {{"steps", "-3"}},
      {{"steps", "0"}},            {{"method", "fista"}},       {{"sigma_y", "-0.1"}},
      {{"n_views", "200"}},        {{"n_views", "0"}},          {{"nx", "0"}},
      {{"nz", "0"}},               {{"prior", "unet"}},         {{"gmm_components", "0.5:0:1"}},
      {{"gmm_components", "1:0"}}, {{"pdhg_order", "sideways"}}, {{"record_timing", "yes"}},
      {{"method", "nerd-a"}, {"rho", "0"}},
      {{"tau", "0"}},              {{"heldout_every", "1"}},    {{"detector_spacing", "0"}}};
  for (const auto& kv : bad) EXPECT_THROW(RunConfig::from_key_values(kv), ConfigError) << kv.begin()->first;
}

TEST(RunConfigTest, GmmComponentTextRoundTrips) {
  const auto cs = parse_gmm_components(" 0.25:-1:0.5 ,0.75:2.5:0.125");
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(cs[0].mean, -1.0);
  EXPECT_EQ(cs[1].stddev, 0.125);
  const auto back = parse_gmm_components(format_gmm_components(cs));
  for (std::size_t i = 0; i < cs.size(); ++i) {
    EXPECT_EQ(back[i].weight, cs[i].weight);
    EXPECT_EQ(back[i].mean, cs[i].mean);
    EXPECT_EQ(back[i].stddev, cs[i].stddev);
  }
  EXPECT_THROW(parse_gmm_components(""), ConfigError);
  EXPECT_THROW(parse_gmm_components("1;0;1"), ConfigError);
  EXPECT_THROW(parse_gmm_components("1:0:1:3"), ConfigError);
}

TEST(RunConfigTest, NoiseSeedIsDerivedAndStable) {
  EXPECT_EQ(measurement_noise_seed(0), measurement_noise_seed(0));
  EXPECT_NE(measurement_noise_seed(0), 0u);
  EXPECT_NE(measurement_noise_seed(0), measurement_noise_seed(1));
}

// ---- Raw files and sidecars -----------------------------------------------

TEST_F(TempDir, RawFilesAreLittleEndianFloat64) {
  const std::vector<double> v{1.0, -0.0, std::numeric_limits<double>::infinity(), 0.1};
  io::write_raw_f64(path("a.raw"), v);
  const std::string bytes = slurp(path("a.raw"));
  ASSERT_EQ(bytes.size(), 32u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 0xf0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 0x3f);
  for (int b = 0; b < 6; ++b) EXPECT_EQ(bytes[b], 0);
  const auto back = io::read_raw_f64(path("a.raw"), 4);
  for (std::size_t n = 0; n < v.size(); ++n) EXPECT_EQ(std::bit_cast<std::uint64_t>(back[n]), std::bit_cast<std::uint64_t>(v[n]));
  EXPECT_THROW(io::read_raw_f64(path("a.raw"), 5), std::runtime_error);
  EXPECT_THROW(io::read_raw_f64(path("missing.raw"), 1), std::runtime_error);
}

TEST_F(TempDir, VolumeRoundTripWithSidecar) {
  const Volume3D v = random_volume(5, 4, 3, 1);
  io::write_volume(path("v.raw"), v, {{"seed", 7}});
  EXPECT_EQ(std::filesystem::file_size(path("v.raw")), 5u * 4 * 3 * 8);
  io::json meta;
  const Volume3D back = io::read_volume(path("v.raw"), &meta);
  EXPECT_EQ(back, v);
  EXPECT_EQ(meta.at("nx"), 5);
  EXPECT_EQ(meta.at("nz"), 3);
  EXPECT_EQ(meta.at("dtype"), "float64");
  EXPECT_EQ(meta.at("provenance").at("seed"), 7);
}

TEST_F(TempDir, SinogramRoundTripAndConsistencyCheck) {
  const ProjectionGeometry g{60, 23, 1.0};
  const ViewSubsampling views = ViewSubsampling::uniform(60, 8);
  const Sinogram3D s = testing_support::random_sinogram(8, 23, 4, 3);
  io::write_sinogram(path("s.raw"), s, g, views, 16, {});
  const auto f = io::read_sinogram(path("s.raw"));
  EXPECT_EQ(f.data, s);
  EXPECT_EQ(f.geometry.n_angles_full, 60u);
  EXPECT_EQ(f.geometry.n_detectors, 23u);
  EXPECT_EQ(f.views.indices, views.indices);
  EXPECT_EQ(f.image_size, 16u);

  auto meta = io::read_json(path("s.raw.json"));
  meta["n_views"] = 7;
  io::write_json(path("s.raw.json"), meta);
  EXPECT_THROW(io::read_sinogram(path("s.raw")), std::runtime_error);
}

TEST_F(TempDir, MalformedJsonIsReported) {
  std::ofstream(path("bad.json")) << "{ not json";
  EXPECT_THROW(io::read_json(path("bad.json")), std::runtime_error);
}

TEST(JsonReals, NonFiniteValuesUseStrings) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(io::real(inf), "inf");
  EXPECT_EQ(io::real(-inf), "-inf");
  EXPECT_EQ(io::real(std::nan("")), "nan");
  EXPECT_EQ(io::real(2.5), 2.5);
  EXPECT_EQ(io::real_from(io::real(inf)), inf);
  EXPECT_TRUE(std::isnan(io::real_from("nan")));
  EXPECT_EQ(io::real_from(1.25), 1.25);
  EXPECT_THROW(io::real_from("infinite"), std::runtime_error);
}

TEST(JsonReals, ReportSerializesInfinitePsnr) {
  const Volume3D p = random_volume(12, 12, 12, 9, 0, 1);
  const io::json j = io::report_json(evaluate_volume(p, p));
  EXPECT_EQ(j.at("views").size(), 3u);
  for (const char* view : {"axial", "coronal", "sagittal"}) {
    EXPECT_EQ(j.at("views").at(view).at("psnr_mean"), "inf");
    EXPECT_EQ(j.at("views").at(view).at("ssim_mean"), 1.0);
    EXPECT_EQ(j.at("views").at(view).at("slices"), 12);
  }
  EXPECT_EQ(j.at("data_range"), 1.0);
}

TEST_F(TempDir, TraceCsvLayout) {
  std::vector<TraceRecord> trace(2);
  trace[0] = {1, 1000, 3.5, 0.25, std::nan(""), 12.0};
  trace[1] = {2, 500, 0.1, 1.0 / 3.0, 21.5, std::nan("")};
  io::write_trace_csv(path("t.csv"), trace);
  EXPECT_EQ(slurp(path("t.csv")),
            "step,t_index,data_residual,tv_z,psnr,wall_ms\n"
            "1,1000,3.5,0.25,nan,12\n"
            "2,500,0.10000000000000001,0.33333333333333331,21.5,nan\n");
}

TEST_F(TempDir, WeightsRoundTrip) {
  std::vector<double> w(809);
  for (std::size_t n = 0; n < w.size(); ++n) w[n] = std::sin(static_cast<double>(n));
  io::write_weights(path("w.raw"), w, {{"parameter_count", 809}});
  EXPECT_EQ(io::read_weights(path("w.raw"), 809), w);
  EXPECT_EQ(io::read_json(path("w.raw.json")).at("parameter_count"), 809);
  EXPECT_THROW(io::read_weights(path("w.raw"), 808), std::runtime_error);
}
