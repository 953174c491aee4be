#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nerd/forward_model.hpp"
#include "nerd/metrics.hpp"
#include "nerd/samplers.hpp"
#include "nerd/volume.hpp"

namespace nerd::io {

using nlohmann::json;

/// Sidecar path for a raw data file: "<path>.json".
inline std::string sidecar_path(const std::string& path) { return path + ".json"; }

inline void write_raw_f64(const std::string& path, std::span<const double> values) {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  std::vector<unsigned char> buf(values.size() * 8);
  for (std::size_t n = 0; n < values.size(); ++n) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(values[n]);
    for (int b = 0; b < 8; ++b) buf[n * 8 + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline std::vector<double> read_raw_f64(const std::string& path, std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() != expected_count * 8)
    throw std::runtime_error("'" + path + "' holds " + std::to_string(buf.size()) + " bytes, expected " +
                             std::to_string(expected_count * 8));
  std::vector<double> values(expected_count);
  for (std::size_t n = 0; n < expected_count; ++n) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[n * 8 + b]) << (8 * b);
    values[n] = std::bit_cast<double>(bits);
  }
  return values;
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed JSON in '" + path + "': " + e.what());
  }
}

/// Non-finite reals serialize as the strings "inf", "-inf" and "nan".
inline json real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double real_from(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw std::runtime_error("expected a number, got '" + s + "'");
  }
  return j.get<double>();
}

// ---------------------------------------------------------------------------
// Volumes: raw little-endian float64, x fastest and z slowest.

inline void write_volume(const std::string& path, const Volume3D& v, const json& provenance) {
  write_raw_f64(path, v.values());
  json meta = {{"kind", "volume"},
               {"nx", v.nx()},
               {"ny", v.ny()},
               {"nz", v.nz()},
               {"dtype", "float64"},
               {"byte_order", "little"},
               {"layout", "x fastest, z slowest"},
               {"provenance", provenance}};
  write_json(sidecar_path(path), meta);
}

inline Volume3D read_volume(const std::string& path, json* meta_out = nullptr) {
  const json meta = read_json(sidecar_path(path));
  if (meta.value("dtype", "") != "float64") throw std::runtime_error("'" + path + "': unsupported dtype");
  const auto nx = meta.at("nx").get<std::size_t>();
  const auto ny = meta.at("ny").get<std::size_t>();
  const auto nz = meta.at("nz").get<std::size_t>();
  if (meta_out) *meta_out = meta;
  return Volume3D(nx, ny, nz, read_raw_f64(path, nx * ny * nz));
}

// ---------------------------------------------------------------------------
// Sinograms: detector fastest, then view, then slice.

inline json geometry_json(const ProjectionGeometry& g) {
  return {{"n_angles_full", g.n_angles_full},
          {"n_detectors", g.n_detectors},
          {"detector_spacing", g.detector_spacing}};
}

inline ProjectionGeometry geometry_from(const json& j) {
  ProjectionGeometry g{j.at("n_angles_full").get<std::size_t>(), j.at("n_detectors").get<std::size_t>(),
                       j.at("detector_spacing").get<double>()};
  g.validate();
  return g;
}

struct SinogramFile {
  Sinogram3D data;
  ProjectionGeometry geometry;
  ViewSubsampling views;
  std::size_t image_size = 0;  // nx = ny of the projected volume
  json meta;
};

inline void write_sinogram(const std::string& path, const Sinogram3D& s, const ProjectionGeometry& g,
                           const ViewSubsampling& views, std::size_t image_size, const json& provenance) {
  write_raw_f64(path, s.values());
  json meta = {{"kind", "sinogram"},
               {"n_views", s.n_views()},
               {"n_detectors", s.n_detectors()},
               {"nz", s.nz()},
               {"image_size", image_size},
               {"dtype", "float64"},
               {"byte_order", "little"},
               {"layout", "detector fastest, then view, slice slowest"},
               {"geometry", geometry_json(g)},
               {"view_indices", views.indices},
               {"provenance", provenance}};
  write_json(sidecar_path(path), meta);
}

inline SinogramFile read_sinogram(const std::string& path) {
  SinogramFile f;
  f.meta = read_json(sidecar_path(path));
  const auto nv = f.meta.at("n_views").get<std::size_t>();
  const auto nd = f.meta.at("n_detectors").get<std::size_t>();
  const auto nz = f.meta.at("nz").get<std::size_t>();
  f.geometry = geometry_from(f.meta.at("geometry"));
  f.views.indices = f.meta.at("view_indices").get<std::vector<std::size_t>>();
  f.views.validate(f.geometry.n_angles_full);
  f.image_size = f.meta.at("image_size").get<std::size_t>();
  if (nv != f.views.size() || nd != f.geometry.n_detectors)
    throw std::runtime_error("'" + path + "': sidecar geometry is inconsistent");
  f.data = Sinogram3D(nv, nd, nz, read_raw_f64(path, nv * nd * nz));
  return f;
}

// ---------------------------------------------------------------------------
// Traces and reports.

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_trace_csv(const std::string& path, const std::vector<TraceRecord>& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "step,t_index,data_residual,tv_z,psnr,wall_ms\n";
  for (const auto& r : trace)
    out << r.step << ',' << r.t_index << ',' << format_real(r.data_residual) << ',' << format_real(r.tv_z) << ','
        << format_real(r.psnr) << ',' << format_real(r.wall_ms) << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline json report_json(const Report& r) {
  json views = json::object();
  for (const auto& v : r.views) {
    json pj = json::array(), sj = json::array();
    for (double x : v.psnr) pj.push_back(real(x));
    for (double x : v.ssim) sj.push_back(real(x));
    views[axis_name(v.axis)] = {{"slices", v.psnr.size()},
                                {"psnr_mean", real(v.psnr_mean)},
                                {"psnr_std", real(v.psnr_std)},
                                {"ssim_mean", real(v.ssim_mean)},
                                {"ssim_std", real(v.ssim_std)},
                                {"psnr", pj},
                                {"ssim", sj}};
  }
  return {{"data_range", r.data_range}, {"views", views}};
}

/// One row per view: view,slices,psnr_mean,psnr_std,ssim_mean,ssim_std.
inline void write_report_csv(const std::string& path, const Report& r) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "view,slices,psnr_mean,psnr_std,ssim_mean,ssim_std\n";
  for (const auto& v : r.views)
    out << axis_name(v.axis) << ',' << v.psnr.size() << ',' << format_real(v.psnr_mean) << ','
        << format_real(v.psnr_std) << ',' << format_real(v.ssim_mean) << ',' << format_real(v.ssim_std) << '\n';
}

// ---------------------------------------------------------------------------
// ConvDenoiser weights: raw float64 plus a JSON descriptor.

inline void write_weights(const std::string& path, const std::vector<double>& weights, const json& descriptor) {
  write_raw_f64(path, weights);
  write_json(sidecar_path(path), descriptor);
}

inline std::vector<double> read_weights(const std::string& path, std::size_t expected_count) {
  return read_raw_f64(path, expected_count);
}

}  // namespace nerd::io
