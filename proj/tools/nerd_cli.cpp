#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nerd/nerd.hpp"

namespace {

using namespace nerd;
using io::json;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct Flags {
  std::string config;
  std::string method;
  std::string seed;
  std::string out;
  std::vector<std::string> sets;
};

RunConfig load_config(const Flags& f) {
  KeyValues kv;
  if (!f.config.empty()) kv = read_key_values(f.config);
  for (const auto& s : f.sets) apply_override(kv, s);
  if (!f.method.empty()) kv["method"] = f.method;
  if (!f.seed.empty()) kv["seed"] = f.seed;
  return RunConfig::from_key_values(kv);
}

json config_echo(const RunConfig& c) {
  json j = json::object();
  for (const auto& [k, v] : c.to_key_values()) j[k] = v;
  return j;
}

json provenance(const std::string& command, const RunConfig& c) {
  return {{"command", command}, {"seed", c.seed}, {"config", config_echo(c)}};
}

ProjectionGeometry geometry_for(const RunConfig& c, std::size_t n) {
  ProjectionGeometry g = ProjectionGeometry::standard(n);
  g.n_angles_full = c.n_angles_full;
  if (c.n_detectors > 0) g.n_detectors = c.n_detectors;
  g.detector_spacing = c.detector_spacing;
  g.validate();
  return g;
}

std::string replace_extension(const std::string& path, const std::string& ext) {
  return std::filesystem::path(path).replace_extension(ext).string();
}

// ---------------------------------------------------------------------------

int generate_phantom(const RunConfig& c) {
  const Volume3D v = shepp_logan_3d(c.nx, c.ny, c.nz);
  io::write_volume(c.phantom, v, provenance("generate-phantom", c));
  std::cout << "wrote " << c.phantom << " (" << c.nx << "x" << c.ny << "x" << c.nz << ")\n";
  return kOk;
}

int simulate(const RunConfig& c) {
  const Volume3D x = io::read_volume(c.phantom);
  require(x.nx() == x.ny(), "simulate: the projector needs square axial slices, got " + std::to_string(x.nx()) +
                                "x" + std::to_string(x.ny()));
  const ProjectionGeometry g = geometry_for(c, x.nx());
  const ViewSubsampling views = ViewSubsampling::uniform(g.n_angles_full, c.n_views);
  const ProjectionOperator op(g, views, x.nx(), x.nz());
  const std::uint64_t noise_seed = measurement_noise_seed(c.seed);
  const Sinogram3D y = add_gaussian_noise(op.apply(x), c.sigma_y, noise_seed);
  json prov = provenance("simulate", c);
  prov["phantom"] = c.phantom;
  prov["noise_sigma"] = c.sigma_y;
  prov["noise_seed"] = noise_seed;
  io::write_sinogram(c.sinogram, y, g, views, x.nx(), prov);
  std::cout << "wrote " << c.sinogram << " (" << views.size() << " of " << g.n_angles_full << " views, "
            << g.n_detectors << " detectors)\n";
  return kOk;
}

std::unique_ptr<Denoiser> make_prior(const RunConfig& c) {
  if (c.prior == "gmm") return std::make_unique<GmmDenoiser>(GmmScalarPrior(c.gmm_components));
  if (c.conv_weights.empty()) throw ConfigError("prior = conv needs 'conv_weights'");
  return std::make_unique<ConvDenoiser>(io::read_weights(c.conv_weights, ConvDenoiser::parameter_count()));
}

int reconstruct(const RunConfig& c) {
  const io::SinogramFile sino = io::read_sinogram(c.sinogram);
  const std::size_t n = sino.image_size, nz = sino.data.nz();
  const ProjectionOperator op(sino.geometry, sino.views, n, nz);
  const auto prior = make_prior(c);
  const Volume3D shape(n, n, nz);

  std::unique_ptr<Volume3D> truth;
  if (std::filesystem::exists(c.phantom) && std::filesystem::exists(io::sidecar_path(c.phantom))) {
    Volume3D t = io::read_volume(c.phantom);
    if (t.same_shape(shape)) truth = std::make_unique<Volume3D>(std::move(t));
  }

  const auto on_step = [](const TraceRecord& r) {
    std::fprintf(stderr, "step %3zu  t=%4zu  residual %.6g  tv_z %.6g  psnr %.4f\n", r.step, r.t_index,
                 r.data_residual, r.tv_z, r.psnr);
  };
  RunResult result;
  try {
    result = run_sampler(c.sampler, op, sino.data, *prior, NoiseSchedule::linear(), shape, truth.get(), on_step);
  } catch (const SamplerAbort& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  if (!c.record_timing)
    for (auto& r : result.trace) r.wall_ms = std::numeric_limits<double>::quiet_NaN();

  json prov = provenance("reconstruct", c);
  prov["method"] = method_name(c.sampler.method);
  prov["sinogram"] = c.sinogram;
  prov["ground_truth"] = truth ? json(c.phantom) : json(nullptr);
  prov["cg_unconverged"] = result.cg_unconverged;
  io::write_volume(c.reconstruction, result.reconstruction, prov);
  io::write_trace_csv(c.trace_path(), result.trace);
  std::cout << "wrote " << c.reconstruction << " and " << c.trace_path() << " (" << result.trace.size()
            << " steps)\n";
  if (result.cg_unconverged > 0)
    std::cerr << "warning: " << result.cg_unconverged << " CG solves stopped at the iteration cap\n";
  return kOk;
}

int evaluate(const RunConfig& c) {
  const Volume3D est = io::read_volume(c.reconstruction);
  const Volume3D ref = io::read_volume(c.phantom);
  require(est.same_shape(ref), "evaluate: reconstruction and reference shapes differ");
  const Report r = evaluate_volume(est, ref);
  json j = io::report_json(r);
  j["reconstruction"] = c.reconstruction;
  j["reference"] = c.phantom;
  j["seed"] = c.seed;
  j["config"] = config_echo(c);
  io::write_json(c.report, j);
  io::write_report_csv(replace_extension(c.report, ".csv"), r);
  for (const auto& v : r.views)
    std::cout << axis_name(v.axis) << ": PSNR " << io::format_real(v.psnr_mean) << " +- "
              << io::format_real(v.psnr_std) << "  SSIM " << io::format_real(v.ssim_mean) << " +- "
              << io::format_real(v.ssim_std) << '\n';
  return kOk;
}

int train(const RunConfig& c) {
  const Volume3D vol = io::read_volume(c.phantom);
  double lo = vol.values()[0], hi = lo;
  for (double v : vol.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<Slice2D> training, heldout;
  for (std::size_t k = 0; k < vol.nz(); ++k) {
    Slice2D s = extract_slice(vol, Axis::axial, k);
    for (double& v : s.data) v = (v - lo) / span;
    (k % c.heldout_every == c.heldout_every - 1 ? heldout : training).push_back(std::move(s));
  }
  if (training.empty()) throw ConfigError("train-denoiser: empty training set");
  if (heldout.empty())
    throw ConfigError("train-denoiser: no held-out slices (nz = " + std::to_string(vol.nz()) +
                      ", heldout_every = " + std::to_string(c.heldout_every) + ")");

  const NoiseSchedule schedule = NoiseSchedule::linear();
  const TrainResult tr = train_denoiser(training, schedule, TrainOptions{c.train_epochs, c.train_lr, c.seed});
  const DenoisingLoss held = denoising_loss(tr.weights, heldout, schedule, c.seed ^ 0x686f6c646f7574ULL);

  json layers = json::array();
  for (const auto& l : ConvDenoiser::kLayers)
    layers.push_back({{"in_channels", l.in_channels},
                      {"out_channels", l.out_channels},
                      {"kernel", {ConvDenoiser::kKernel, ConvDenoiser::kKernel}}});
  json desc = provenance("train-denoiser", c);
  desc["kind"] = "conv_denoiser_weights";
  desc["dtype"] = "float64";
  desc["byte_order"] = "little";
  desc["parameter_count"] = ConvDenoiser::parameter_count();
  desc["layers"] = layers;
  desc["weight_layout"] = "per layer: W[out][in][ky][kx] then bias[out]";
  desc["schedule"] = {{"kind", "linear"}, {"T", schedule.T()}, {"beta_start", schedule.beta_start()},
                      {"beta_end", schedule.beta_end()}};
  desc["intensity_scaling"] = {{"offset", lo}, {"scale", 1.0 / span}};
  desc["training"] = {{"epochs", c.train_epochs},      {"lr", c.train_lr},
                      {"seed", c.seed},                {"phantom", c.phantom},
                      {"training_slices", training.size()}, {"heldout_slices", heldout.size()},
                      {"final_loss", tr.loss_history.empty() ? json(nullptr) : io::real(tr.loss_history.back())}};
  desc["heldout_loss"] = io::real(held.model);
  desc["baseline_loss"] = io::real(held.baseline);
  io::write_weights(c.weights, tr.weights, desc);
  std::cout << "wrote " << c.weights << "  held-out loss " << io::format_real(held.model) << " (baseline "
            << io::format_real(held.baseline) << ")\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D sparse-view CT reconstruction with diffusion priors and z-axis TV"};
  app.require_subcommand(1);
  Flags flags;
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
    std::string RunConfig::*out;
  };
  const std::vector<Command> commands = {
      {"generate-phantom", "Write a 3D Shepp-Logan phantom", generate_phantom, &RunConfig::phantom},
      {"simulate", "Project a volume to a sparse-view noisy sinogram", simulate, &RunConfig::sinogram},
      {"reconstruct", "Reconstruct a volume from a sinogram", reconstruct, &RunConfig::reconstruction},
      {"evaluate", "Slice-wise PSNR/SSIM of a reconstruction per view", evaluate, &RunConfig::report},
      {"train-denoiser", "Train the convolutional denoiser on phantom slices", train, &RunConfig::weights},
  };
  std::vector<CLI::App*> subs;
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", flags.config, "Key-value config file");
    sub->add_option("--method", flags.method, "sitcom | nerd-a | nerd-p | dds");
    sub->add_option("--seed", flags.seed, "Seed for every random stream");
    sub->add_option("--out", flags.out, "Output path of this command");
    sub->add_option("--set", flags.sets, "Config override key=value (repeatable)");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      RunConfig cfg = load_config(flags);
      if (!flags.out.empty()) cfg.*(commands[i].out) = flags.out;
      return commands[i].run(cfg);
    } catch (const std::invalid_argument& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kUsage;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kRuntime;
    }
  }
  return kUsage;
}
