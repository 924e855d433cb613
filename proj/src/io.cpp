#include "fdsqz/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace fdsqz::io {

using nlohmann::json;
using Kind = ConfigError::Kind;

// ---------------------------------------------------------------------------
// Files

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename onto " + path.string() + ": " + ec.message());
  }
}

std::string format_exact(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::string format_15(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", value);
  std::string s(buf);
  return s == "-0" ? "0" : s;
}

bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size() && std::isfinite(out);
}

// ---------------------------------------------------------------------------
// Config sections

class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (!doc.is_object()) throw ConfigError(Kind::wrong_type, name_, "expected an object");
    obj_ = &doc;
  }

  double number(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_number()) throw ConfigError(Kind::wrong_type, path(key), "expected a number");
    return v.get<double>();
  }

  double number_or(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  bool has(const std::string& key) const { return obj_->contains(key); }

  const json& at(const std::string& key) const {
    used_.insert(key);
    if (!obj_->contains(key)) throw ConfigError(Kind::missing_key, path(key), "required key is missing");
    return (*obj_)[key];
  }

  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  // Must be called after every expected key has been read.
  void reject_unknown() const {
    for (const auto& item : obj_->items()) {
      if (!used_.count(item.key())) throw ConfigError(Kind::unknown_key, path(item.key()), "unknown key");
    }
  }

  void mark(const std::string& key) const { used_.insert(key); }

 private:
  std::string name_;
  const json* obj_ = nullptr;
  mutable std::set<std::string> used_;
};

template <typename Fn>
void translate_invalid(Fn&& fn) {
  try {
    fn();
  } catch (const InvalidParameter& e) {
    throw ConfigError(Kind::out_of_range, e.field(), e.what());
  }
}

}  // namespace

ConfigBundle parse_config(const json& doc) {
  Section root(doc, "");
  {
    const json& v = root.at("schema_version");
    if (!v.is_number_integer()) throw ConfigError(Kind::wrong_type, "schema_version", "expected an integer");
    if (v.get<long long>() != kSchemaVersion) {
      throw ConfigError(Kind::version_mismatch, "schema_version",
                        "unsupported version " + v.dump() + " (expected " + std::to_string(kSchemaVersion) + ")");
    }
  }

  ConfigBundle b;
  {
    Section s(root.at("cavity"), "cavity");
    b.params.cavity.length_m = s.number("length_m");
    b.params.cavity.input_transmissivity = s.number("input_transmissivity");
    b.params.cavity.round_trip_loss = s.number("round_trip_loss");
    b.params.cavity.detuning_rad_s = s.number("detuning_rad_s");
    b.params.cavity.wavelength_m = s.number_or("wavelength_m", kDefaultWavelength);
    s.mark("wavelength_m");
    s.reject_unknown();
  }
  {
    Section s(root.at("squeezer"), "squeezer");
    b.params.squeezer.nonlinear_gain = s.number("nonlinear_gain");
    b.params.squeezer.escape_efficiency = s.number("escape_efficiency");
    b.params.squeezer.squeeze_angle_rad = s.number("squeeze_angle_rad");
    s.reject_unknown();
  }
  {
    Section s(root.at("budget"), "budget");
    auto& bd = b.params.budget;
    bd.propagation_loss = s.number("propagation_loss");
    bd.homodyne_visibility = s.number("homodyne_visibility");
    bd.quantum_efficiency = s.number("quantum_efficiency");
    bd.mode_coupling = s.number("mode_coupling");
    bd.phase_noise_rms_rad = s.number("phase_noise_rms_rad");
    bd.length_noise_rms_m = s.number("length_noise_rms_m");
    bd.mismatch_phase_rad = s.number_or("mismatch_phase_rad", 0.0);
    s.mark("mismatch_phase_rad");
    s.reject_unknown();
  }
  if (root.has("model")) {
    Section s(root.at("model"), "model");
    if (s.has("quadrature_nodes")) {
      const json& v = s.at("quadrature_nodes");
      if (!v.is_number_integer()) throw ConfigError(Kind::wrong_type, "model.quadrature_nodes", "expected an integer");
      b.params.options.quadrature_nodes = v.get<int>();
    }
    s.reject_unknown();
  }
  translate_invalid([&] { b.params.validate(); });

  if (root.has("fit")) {
    Section s(root.at("fit"), "fit");
    if (s.has("shared_free_parameters")) {
      Section free(s.at("shared_free_parameters"), "fit.shared_free_parameters");
      b.fit.shared_free_parameters.clear();
      // Canonical parameter order, independent of document order.
      for (SharedParameter p : all_shared_parameters()) {
        const std::string name = to_string(p);
        if (!free.has(name)) continue;
        Section range(free.at(name), free.path(name));
        FreeParameter fp{p, {range.number("lower"), range.number("upper")}};
        range.reject_unknown();
        if (!(fp.bounds.lower < fp.bounds.upper)) {
          throw ConfigError(Kind::out_of_range, free.path(name), "lower bound must be below upper bound");
        }
        const double start = get(b.params, p);
        if (start < fp.bounds.lower || start > fp.bounds.upper) {
          throw ConfigError(Kind::out_of_range, free.path(name), "starting value lies outside the bounds");
        }
        b.fit.shared_free_parameters.push_back(fp);
      }
      free.reject_unknown();
    }
    b.fit.min_fit_frequency_hz = s.number_or("min_fit_frequency_hz", 300.0);
    s.mark("min_fit_frequency_hz");
    if (!(b.fit.min_fit_frequency_hz >= 0.0)) {
      throw ConfigError(Kind::out_of_range, "fit.min_fit_frequency_hz", "must be >= 0");
    }
    if (s.has("n_starts")) {
      const json& v = s.at("n_starts");
      if (!v.is_number_integer()) throw ConfigError(Kind::wrong_type, "fit.n_starts", "expected an integer");
      b.fit.n_starts = v.get<int>();
      if (b.fit.n_starts < 1) throw ConfigError(Kind::out_of_range, "fit.n_starts", "must be >= 1");
    }
    if (s.has("seed")) {
      const json& v = s.at("seed");
      if (!v.is_number_unsigned()) throw ConfigError(Kind::wrong_type, "fit.seed", "expected a non-negative integer");
      b.fit.seed = v.get<std::uint64_t>();
    }
    s.reject_unknown();
  }
  root.mark("model");
  root.mark("fit");
  root.reject_unknown();
  return b;
}

ConfigBundle parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(Kind::parse, "", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

ConfigBundle load_config(const std::filesystem::path& path) { return parse_config_text(read_file(path)); }

json to_json(const ConfigBundle& b) {
  const auto& c = b.params.cavity;
  const auto& s = b.params.squeezer;
  const auto& d = b.params.budget;
  json free = json::object();
  for (const auto& fp : b.fit.shared_free_parameters) {
    free[to_string(fp.parameter)] = {{"lower", fp.bounds.lower}, {"upper", fp.bounds.upper}};
  }
  return json{
      {"schema_version", kSchemaVersion},
      {"cavity",
       {{"length_m", c.length_m},
        {"input_transmissivity", c.input_transmissivity},
        {"round_trip_loss", c.round_trip_loss},
        {"detuning_rad_s", c.detuning_rad_s},
        {"wavelength_m", c.wavelength_m}}},
      {"squeezer",
       {{"nonlinear_gain", s.nonlinear_gain},
        {"escape_efficiency", s.escape_efficiency},
        {"squeeze_angle_rad", s.squeeze_angle_rad}}},
      {"budget",
       {{"propagation_loss", d.propagation_loss},
        {"homodyne_visibility", d.homodyne_visibility},
        {"quantum_efficiency", d.quantum_efficiency},
        {"mode_coupling", d.mode_coupling},
        {"phase_noise_rms_rad", d.phase_noise_rms_rad},
        {"length_noise_rms_m", d.length_noise_rms_m},
        {"mismatch_phase_rad", d.mismatch_phase_rad}}},
      {"model", {{"quadrature_nodes", b.params.options.quadrature_nodes}}},
      {"fit",
       {{"shared_free_parameters", free},
        {"min_fit_frequency_hz", b.fit.min_fit_frequency_hz},
        {"n_starts", b.fit.n_starts},
        {"seed", b.fit.seed}}},
  };
}

void save_config(const ConfigBundle& bundle, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(bundle).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Spectra

SpectrumDataset parse_spectrum(const std::string& text) {
  SpectrumDataset d;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  std::set<std::string> seen_keys;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::string body = line.substr(1);
      body.erase(0, body.find_first_not_of(' '));
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = body.substr(0, eq);
      if (key != "quadrature_deg" && key != "detuning_offset_hz" && key != "sigma_db") continue;
      if (!seen_keys.insert(key).second) throw SpectrumFormatError(where + "duplicate metadata key " + key);
      double v = 0.0;
      if (!parse_double(std::string_view(body).substr(eq + 1), v)) {
        throw SpectrumFormatError(where + "metadata " + key + " is not a finite number");
      }
      if (key == "quadrature_deg") d.quadrature_rad = deg_to_rad(v);
      else if (key == "detuning_offset_hz") d.detuning_offset_rad_s = hz_to_rad_s(v);
      else d.sigma_db = v;
      continue;
    }
    if (!header_seen) {
      if (line != kSpectrumHeader) {
        throw SpectrumFormatError(where + "expected header '" + std::string(kSpectrumHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw SpectrumFormatError(where + "expected exactly two fields");
    }
    double f = 0.0;
    double n = 0.0;
    if (!parse_double(std::string_view(line).substr(0, comma), f) ||
        !parse_double(std::string_view(line).substr(comma + 1), n)) {
      throw SpectrumFormatError(where + "fields must be finite decimals");
    }
    d.frequencies_hz.push_back(f);
    d.relative_noise_db.push_back(n);
  }
  if (!header_seen) throw SpectrumFormatError("missing header '" + std::string(kSpectrumHeader) + "'");
  // The readout angle has no sensible default; a missing offset means nominal detuning.
  if (!seen_keys.contains("quadrature_deg")) throw SpectrumFormatError("missing metadata quadrature_deg");
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw SpectrumFormatError(e.what());
  }
  return d;
}

SpectrumDataset read_spectrum(const std::filesystem::path& path) {
  try {
    return parse_spectrum(read_file(path));
  } catch (const SpectrumFormatError& e) {
    throw SpectrumFormatError(path.string() + ": " + e.what());
  }
}

std::string format_spectrum(const SpectrumDataset& d, const std::string& comment) {
  d.validate();
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  out += "# quadrature_deg=" + format_15(rad_to_deg(d.quadrature_rad)) + "\n";
  out += "# detuning_offset_hz=" + format_15(rad_s_to_hz(d.detuning_offset_rad_s)) + "\n";
  if (d.sigma_db) out += "# sigma_db=" + format_15(*d.sigma_db) + "\n";
  out += kSpectrumHeader;
  out += "\n";
  for (std::size_t i = 0; i < d.frequencies_hz.size(); ++i) {
    out += format_exact(d.frequencies_hz[i]) + "," + format_exact(d.relative_noise_db[i]) + "\n";
  }
  return out;
}

void write_spectrum(const SpectrumDataset& dataset, const std::filesystem::path& path, const std::string& comment) {
  write_file_atomic(path, format_spectrum(dataset, comment));
}

std::string format_curve(std::span<const double> freqs_hz, std::span<const double> noise_db,
                         const std::string& comment) {
  if (freqs_hz.size() != noise_db.size()) throw std::invalid_argument("curve columns differ in length");
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  out += kSpectrumHeader;
  out += "\n";
  for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
    out += format_exact(freqs_hz[i]) + "," + format_exact(noise_db[i]) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fit reports

namespace {

// JSON has no infinity; unconstrained standard errors are written as null.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& v) {
  return v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
}

}  // namespace

json to_json(const FitReport& r) {
  json estimates = json::array();
  for (const auto& e : r.estimates) {
    estimates.push_back({{"name", e.name},
                         {"value", e.value},
                         {"standard_error", finite_or_null(e.standard_error)},
                         {"ci95_low", finite_or_null(e.ci95_low())},
                         {"ci95_high", finite_or_null(e.ci95_high())},
                         {"lower_bound", e.lower_bound},
                         {"upper_bound", e.upper_bound}});
  }
  json datasets = json::array();
  for (const auto& d : r.datasets) {
    datasets.push_back({{"quadrature_rad", d.quadrature_rad},
                        {"quadrature_stderr_rad", finite_or_null(d.quadrature_stderr_rad)},
                        {"quadrature_deg", rad_to_deg(d.quadrature_rad)},
                        {"detuning_offset_rad_s", d.detuning_offset_rad_s},
                        {"detuning_stderr_rad_s", finite_or_null(d.detuning_stderr_rad_s)},
                        {"detuning_offset_hz", rad_s_to_hz(d.detuning_offset_rad_s)},
                        {"residual_rms_db", d.residual_rms_db},
                        {"points", d.points}});
  }
  json starts = json::array();
  for (const auto& s : r.starts) {
    starts.push_back({{"chi_square", s.chi_square}, {"iterations", s.iterations}, {"termination", s.termination}});
  }
  return json{{"schema_version", kSchemaVersion},
              {"seed", r.seed},
              {"n_starts", r.n_starts},
              {"best_start", r.best_start},
              {"converged", r.converged},
              {"termination", r.termination},
              {"iterations", r.iterations},
              {"chi_square", r.chi_square},
              {"points", r.points},
              {"degrees_of_freedom", r.degrees_of_freedom},
              {"penalized_evaluations", r.penalized_evaluations},
              {"estimates", estimates},
              {"datasets", datasets},
              {"starts", starts}};
}

FitReport fit_report_from_json(const json& doc) {
  try {
    if (doc.at("schema_version").get<int>() != kSchemaVersion) {
      throw ConfigError(Kind::version_mismatch, "schema_version", "unsupported fit report version");
    }
    FitReport r;
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.n_starts = doc.at("n_starts").get<int>();
    r.best_start = doc.at("best_start").get<int>();
    r.converged = doc.at("converged").get<bool>();
    r.termination = doc.at("termination").get<std::string>();
    r.iterations = doc.at("iterations").get<int>();
    r.chi_square = doc.at("chi_square").get<double>();
    r.points = doc.at("points").get<std::size_t>();
    r.degrees_of_freedom = doc.at("degrees_of_freedom").get<std::size_t>();
    r.penalized_evaluations = doc.at("penalized_evaluations").get<int>();
    for (const auto& e : doc.at("estimates")) {
      r.estimates.push_back({e.at("name").get<std::string>(), e.at("value").get<double>(),
                             number_or_inf(e.at("standard_error")), e.at("lower_bound").get<double>(),
                             e.at("upper_bound").get<double>()});
    }
    for (const auto& d : doc.at("datasets")) {
      DatasetFit f;
      f.quadrature_rad = d.at("quadrature_rad").get<double>();
      f.quadrature_stderr_rad = number_or_inf(d.at("quadrature_stderr_rad"));
      f.detuning_offset_rad_s = d.at("detuning_offset_rad_s").get<double>();
      f.detuning_stderr_rad_s = number_or_inf(d.at("detuning_stderr_rad_s"));
      f.residual_rms_db = d.at("residual_rms_db").get<double>();
      f.points = d.at("points").get<std::size_t>();
      r.datasets.push_back(f);
    }
    for (const auto& s : doc.at("starts")) {
      r.starts.push_back(
          {s.at("chi_square").get<double>(), s.at("iterations").get<int>(), s.at("termination").get<std::string>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(Kind::parse, "", std::string("malformed fit report: ") + e.what());
  }
}

void write_fit_report(const FitReport& report, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(report).dump(2) + "\n");
}

FitReport read_fit_report(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(Kind::parse, "", std::string("invalid JSON: ") + e.what());
  }
  return fit_report_from_json(doc);
}

}  // namespace fdsqz::io
