#pragma once

// File formats: JSON parameter bundles and fit reports, CSV spectra.
//
// Spectrum CSV (canonical form):
//   # quadrature_deg=<deg>      (required)
//   # detuning_offset_hz=<Hz>   (optional on read, defaults to 0)
//   # sigma_db=<dB>            (only when present)
//   frequency_hz,relative_noise_db
//   <f>,<dB>
//   ...

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <span>
#include <stdexcept>
#include <string>

#include "fdsqz/fit.hpp"
#include "fdsqz/types.hpp"

namespace fdsqz::io {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kSpectrumHeader = "frequency_hz,relative_noise_db";

class ConfigError : public std::runtime_error {
 public:
  enum class Kind { parse, missing_key, unknown_key, wrong_type, out_of_range, version_mismatch };

  ConfigError(Kind kind, std::string key, const std::string& message)
      : std::runtime_error(key.empty() ? message : key + ": " + message), kind_(kind), key_(std::move(key)) {}

  Kind kind() const noexcept { return kind_; }
  /// Dotted path of the offending key, e.g. "squeezer.escape_efficiency".
  const std::string& key() const noexcept { return key_; }

 private:
  Kind kind_;
  std::string key_;
};

class SpectrumFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Settings of the `fit` section.
struct FitSettings {
  std::vector<FreeParameter> shared_free_parameters = default_free_parameters();
  double min_fit_frequency_hz = 300.0;
  int n_starts = 8;
  std::uint64_t seed = 0;
};

struct ConfigBundle {
  SystemParams params;
  FitSettings fit;
};

ConfigBundle parse_config(const nlohmann::json& doc);
ConfigBundle parse_config_text(const std::string& text);
ConfigBundle load_config(const std::filesystem::path& path);

/// Canonical document: every field written, schema_version included.
nlohmann::json to_json(const ConfigBundle& bundle);
void save_config(const ConfigBundle& bundle, const std::filesystem::path& path);

SpectrumDataset parse_spectrum(const std::string& text);
SpectrumDataset read_spectrum(const std::filesystem::path& path);

/// Canonical text. Data columns use shortest round-trip decimals; metadata
/// uses 15 significant digits. `comment`, if non-empty, is written as a
/// leading free-text line.
std::string format_spectrum(const SpectrumDataset& dataset, const std::string& comment = {});
void write_spectrum(const SpectrumDataset& dataset, const std::filesystem::path& path,
                    const std::string& comment = {});

/// Noise-only CSV with the spectrum header and no quadrature metadata.
std::string format_curve(std::span<const double> freqs_hz, std::span<const double> noise_db,
                         const std::string& comment);

nlohmann::json to_json(const FitReport& report);
FitReport fit_report_from_json(const nlohmann::json& doc);
void write_fit_report(const FitReport& report, const std::filesystem::path& path);
FitReport read_fit_report(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// Shortest decimal that parses back to exactly `value`.
std::string format_exact(double value);

}  // namespace fdsqz::io
