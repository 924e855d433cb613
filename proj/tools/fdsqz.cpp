// fdsqz: command-line front end for the frequency-dependent squeezing model.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 model error,
// 4 fit did not converge (report still written).

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "fdsqz/design.hpp"
#include "fdsqz/fit.hpp"
#include "fdsqz/io.hpp"
#include "fdsqz/noise_model.hpp"
#include "fdsqz/parallel.hpp"

namespace fs = std::filesystem;
using namespace fdsqz;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitModel = 3;
constexpr int kExitNoConvergence = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GridArgs {
  double fmin = 300.0;
  double fmax = 100000.0;
  std::size_t points = 400;

  std::vector<double> grid() const {
    if (points < 2) throw UsageError("--points must be at least 2");
    if (!(fmin > 0.0 && fmax > fmin)) throw UsageError("need 0 < --fmin < --fmax");
    return log_grid(fmin, fmax, points);
  }
};

void add_grid(CLI::App* cmd, GridArgs& g) {
  cmd->add_option("--fmin", g.fmin, "Lowest frequency [Hz]")->capture_default_str();
  cmd->add_option("--fmax", g.fmax, "Highest frequency [Hz]")->capture_default_str();
  cmd->add_option("--points", g.points, "Number of log-spaced points")->capture_default_str();
}

std::string degree_label(double deg) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", deg);
  return buf;
}

std::vector<double> to_db(const std::vector<double>& linear) {
  std::vector<double> out(linear.size());
  for (std::size_t i = 0; i < linear.size(); ++i) out[i] = fdsqz::to_db(linear[i]);
  return out;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io::IoError("cannot create " + dir.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::vector<double> quadratures_deg;
  GridArgs grid;
  std::string out;
};

int run_simulate(const SimulateArgs& a) {
  const auto freqs = a.grid.grid();
  const auto bundle = io::load_config(a.config);
  ensure_directory(a.out);
  const unsigned threads = threads_from_env();
  for (double deg : a.quadratures_deg) {
    SpectrumDataset d;
    d.frequencies_hz = freqs;
    d.quadrature_rad = deg_to_rad(deg);
    d.relative_noise_db = to_db(noise_spectrum(freqs, d.quadrature_rad, bundle.params, 0.0, threads));
    const fs::path file = fs::path(a.out) / ("quadrature_" + degree_label(deg) + "deg.csv");
    io::write_spectrum(d, file, "model noise relative to shot noise");
    std::cout << file.string() << "\n";
  }
  return 0;
}

struct EnvelopeArgs {
  std::string config;
  GridArgs grid;
  std::string out;
};

int run_envelope(const EnvelopeArgs& a) {
  const auto freqs = a.grid.grid();
  const auto bundle = io::load_config(a.config);
  const auto env = to_db(lower_envelope(freqs, bundle.params, threads_from_env()));
  io::write_file_atomic(a.out, io::format_curve(freqs, env, "lower envelope over readout quadrature"));
  return 0;
}

nlohmann::json summary_json(const CavityDesignSummary& s) {
  nlohmann::json j = {
      {"length_m", s.length_m},
      {"finesse", s.finesse},
      {"half_linewidth_rad_s", s.half_linewidth_rad_s},
      {"storage_time_s", s.storage_time_s},
      {"round_trip_loss", s.round_trip_loss},
      {"decoherence_time_s", s.decoherence_unbounded() ? nlohmann::json(nullptr) : nlohmann::json(s.decoherence_time_s)},
      {"decoherence_unbounded", s.decoherence_unbounded()},
      {"rotation_frequency_hz", s.rotation_frequency_hz},
  };
  if (s.input_transmissivity) j["input_transmissivity"] = *s.input_transmissivity;
  return j;
}

struct DesignArgs {
  std::optional<double> length;
  std::optional<double> finesse;
  std::optional<double> storage;
  double round_trip_loss_ppm = 0.0;
  std::optional<double> decoherence;
};

int run_design(const DesignArgs& a) {
  if (!a.length) throw UsageError("--length is required");
  if (a.finesse.has_value() == a.storage.has_value()) throw UsageError("give exactly one of --finesse or --storage");
  if (!(a.round_trip_loss_ppm >= 0.0)) throw UsageError("--round-trip-loss must be >= 0");
  const double loss = a.round_trip_loss_ppm * 1e-6;
  try {
    const auto s = a.finesse ? summarize_design(*a.length, *a.finesse, loss) : scale_design(*a.storage, *a.length, loss);
    std::cout << summary_json(s).dump(2) << "\n";
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return 0;
}

int run_design_scale(const DesignArgs& a) {
  if (!a.length || !a.storage || !a.decoherence) {
    throw UsageError("design scale needs --storage, --length and --decoherence");
  }
  try {
    const double loss = round_trip_loss_for_decoherence(*a.length, *a.decoherence);
    std::cout << summary_json(scale_design(*a.storage, *a.length, loss)).dump(2) << "\n";
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return 0;
}

struct SynthArgs {
  std::string config;
  std::vector<double> quadratures_deg;
  std::vector<double> detuning_offsets_hz;
  GridArgs grid;
  double noise_db = 0.2;
  std::uint64_t seed = 0;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  const auto freqs = a.grid.grid();
  const auto bundle = io::load_config(a.config);
  if (!a.detuning_offsets_hz.empty() && a.detuning_offsets_hz.size() != a.quadratures_deg.size()) {
    throw UsageError("--detuning-offset-hz needs one value per quadrature");
  }
  if (!(a.noise_db >= 0.0)) throw UsageError("--noise-db must be >= 0");
  std::vector<double> quads, offsets;
  for (double q : a.quadratures_deg) quads.push_back(deg_to_rad(q));
  for (double d : a.detuning_offsets_hz) offsets.push_back(hz_to_rad_s(d));
  const auto sets = synthesize(bundle.params, quads, offsets, freqs, a.noise_db, a.seed, threads_from_env());
  ensure_directory(a.out);
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const fs::path file = fs::path(a.out) / ("dataset_" + std::to_string(k) + ".csv");
    io::write_spectrum(sets[k], file, "synthetic spectrum");
    std::cout << file.string() << "\n";
  }
  return 0;
}

struct FitArgs {
  std::string config;
  std::vector<std::string> data;
  std::string free;
  std::optional<std::uint64_t> seed;
  std::optional<int> starts;
  int max_iterations = 200;
  std::string out;
};

std::vector<FreeParameter> parse_free(const std::string& list, const std::vector<FreeParameter>& configured) {
  std::vector<FreeParameter> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    SharedParameter p;
    try {
      p = shared_parameter_from_string(name);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    ParameterBounds b = default_bounds(p);
    for (const auto& c : configured) {
      if (c.parameter == p) b = c.bounds;
    }
    for (const auto& o : out) {
      if (o.parameter == p) throw UsageError("parameter " + name + " listed twice");
    }
    out.push_back({p, b});
  }
  return out;
}

int run_fit(const FitArgs& a) {
  const auto bundle = io::load_config(a.config);
  FitProblem problem;
  problem.base = bundle.params;
  problem.shared_free = a.free.empty() ? bundle.fit.shared_free_parameters : parse_free(a.free, bundle.fit.shared_free_parameters);
  problem.min_fit_frequency_hz = bundle.fit.min_fit_frequency_hz;
  for (const auto& path : a.data) problem.datasets.push_back(io::read_spectrum(path));
  try {
    problem.validate();
  } catch (const InvalidParameter&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  FitOptions opts;
  opts.seed = a.seed.value_or(bundle.fit.seed);
  opts.n_starts = a.starts.value_or(bundle.fit.n_starts);
  if (opts.n_starts < 1) throw UsageError("--starts must be >= 1");
  if (a.max_iterations < 1) throw UsageError("--max-iterations must be >= 1");
  opts.max_iterations = a.max_iterations;
  opts.threads = threads_from_env();
  const FitReport report = fit_joint(problem, opts);
  io::write_fit_report(report, a.out);
  if (!report.converged) {
    std::cerr << "fit did not converge (" << report.termination << "); best-so-far report written to " << a.out << "\n";
    return kExitNoConvergence;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-dependent squeezing: noise model, design calculators and joint fits"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Noise spectra at fixed readout quadratures");
  simulate->add_option("--config", sim.config, "Parameter JSON")->required();
  simulate->add_option("--quadrature-deg", sim.quadratures_deg, "Readout quadratures [deg]")
      ->required()
      ->delimiter(',');
  add_grid(simulate, sim.grid);
  simulate->add_option("--out", sim.out, "Output directory")->required();

  EnvelopeArgs env;
  auto* envelope = app.add_subcommand("envelope", "Lower envelope over readout quadratures");
  envelope->add_option("--config", env.config, "Parameter JSON")->required();
  add_grid(envelope, env.grid);
  envelope->add_option("--out", env.out, "Output CSV")->required();

  DesignArgs des;
  auto* design = app.add_subcommand("design", "Cavity design summary");
  design->add_option("--length", des.length, "Cavity length [m]");
  auto* finesse_opt = design->add_option("--finesse", des.finesse, "Finesse");
  auto* storage_opt = design->add_option("--storage", des.storage, "Storage time [s]");
  finesse_opt->excludes(storage_opt);
  design->add_option("--round-trip-loss", des.round_trip_loss_ppm, "Round-trip loss [ppm]");
  DesignArgs scale_args;
  auto* scale = design->add_subcommand("scale", "Finesse and loss for target storage and decoherence times");
  scale->add_option("--storage", scale_args.storage, "Target storage time [s]")->required();
  scale->add_option("--length", scale_args.length, "Cavity length [m]")->required();
  scale->add_option("--decoherence", scale_args.decoherence, "Target decoherence time [s]")->required();

  SynthArgs syn;
  auto* synth = app.add_subcommand("synth", "Synthetic spectra with Gaussian dB noise");
  synth->add_option("--config", syn.config, "Parameter JSON")->required();
  synth->add_option("--quadrature-deg", syn.quadratures_deg, "Readout quadratures [deg]")->required()->delimiter(',');
  synth->add_option("--detuning-offset-hz", syn.detuning_offsets_hz, "Per-dataset detuning offsets [Hz]")
      ->delimiter(',');
  add_grid(synth, syn.grid);
  synth->add_option("--noise-db", syn.noise_db, "RMS noise [dB]")->capture_default_str();
  synth->add_option("--seed", syn.seed, "Random seed")->capture_default_str();
  synth->add_option("--out", syn.out, "Output directory")->required();

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Joint fit of shared parameters to several spectra");
  fit->add_option("--config", fa.config, "Parameter JSON")->required();
  fit->add_option("--data", fa.data, "Spectrum CSV files")->required();
  fit->add_option("--free", fa.free, "Comma-separated shared parameters to fit");
  fit->add_option("--seed", fa.seed, "Multi-start seed");
  fit->add_option("--starts", fa.starts, "Number of starts");
  fit->add_option("--max-iterations", fa.max_iterations, "Iteration limit per start")->capture_default_str();
  fit->add_option("--out", fa.out, "Report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (envelope->parsed()) return run_envelope(env);
    if (scale->parsed()) return run_design_scale(scale_args);
    if (design->parsed()) return run_design(des);
    if (synth->parsed()) return run_synth(syn);
    if (fit->parsed()) return run_fit(fa);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const io::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const io::SpectrumFormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const io::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return kExitModel;
  }
  return kExitUsage;
}
