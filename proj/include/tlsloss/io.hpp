#pragma once

#include "tlsloss/calibration.hpp"
#include "tlsloss/fieldsolver.hpp"
#include "tlsloss/lossmodel.hpp"
#include "tlsloss/resonance.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tlsloss::io {

/// Sectioned `key = value` text. `#` and `;` start comments; keys outside any section
/// belong to the section "". Duplicate keys in a section are rejected.
class ConfigDocument {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };
  using Section = std::map<std::string, Entry>;

  static ConfigDocument parse(const std::string& text, const std::string& source);
  static ConfigDocument load(const std::filesystem::path& path);

  const std::string& source() const noexcept { return source_; }
  const std::map<std::string, Section>& sections() const noexcept { return sections_; }
  bool has_section(const std::string& name) const { return sections_.count(name) != 0; }
  const Section* section(const std::string& name) const;

  std::optional<std::string> get_string(const std::string& section, const std::string& key) const;
  /// Throws ParseError naming the line when the value is not a finite number.
  std::optional<double> get_double(const std::string& section, const std::string& key) const;
  std::optional<long long> get_int(const std::string& section, const std::string& key) const;
  double require_double(const std::string& section, const std::string& key) const;

  /// Throws ParseError on the first key of `section` outside `allowed`.
  void reject_unknown_keys(const std::string& section, const std::vector<std::string>& allowed) const;

 private:
  std::string source_;
  std::map<std::string, Section> sections_;
};

/// CSV with a header naming `frequency_hz` plus either `s21_real,s21_imag` or
/// `s21_db,s21_phase_deg`. Rows may come in any frequency order.
resonance::ComplexTrace read_trace_csv(const std::filesystem::path& path);
resonance::ComplexTrace parse_trace_csv(const std::string& text, const std::string& source);
void write_trace_csv(std::ostream& out, const resonance::ComplexTrace& trace);

/// `key = value` metadata next to a trace: drive_power_dbm, line_attenuation_db, label.
struct TraceMetadata {
  std::optional<double> drive_power_dbm;
  std::optional<double> line_attenuation_db;
  std::optional<std::string> label;
};
TraceMetadata read_trace_metadata(const std::filesystem::path& path);
/// `<trace>.meta` if it exists.
std::filesystem::path metadata_path_for(const std::filesystem::path& trace_path);

/// `[calibration]` keys z0_ohm, c_per_length_f_per_m, resonator_length_m,
/// line_attenuation_db; missing keys keep the built-in defaults.
calibration::LineCalibration calibration_from(const ConfigDocument& doc);

/// `[background] q0` and one `[channel.<label>]` per channel with participation and
/// loss_tangent.
lossmodel::LossBudget budget_from(const ConfigDocument& doc);

/// CSV `n_sites,inverse_qi[,sigma]`.
std::vector<lossmodel::SitePoint> read_site_points(const std::filesystem::path& path);
std::vector<lossmodel::SitePoint> parse_site_points(const std::string& text, const std::string& source);

/// `[cpw]` (+ `[layers.*]`, `[domain]`) or `[parallel_plate]` (+ `[layers.sm]`).
using Geometry = std::variant<fieldsolver::CpwGeometry, fieldsolver::ParallelPlateGeometry>;
Geometry geometry_from(const ConfigDocument& doc);
fieldsolver::CrossSection cross_section_of(const Geometry& geometry);

/// Lower-case hex SHA-256 of the file contents.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

/// Numeric table with a header row. Values are written with 17 significant digits so
/// that reading the file back reproduces them exactly; empty cells become NaN.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};
void write_csv(std::ostream& out, const CsvTable& table);
CsvTable parse_csv_table(const std::string& text, const std::string& source);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
};
/// Log-log scatter plot. Points with non-positive coordinates are dropped.
void write_loglog_svg(std::ostream& out, const std::vector<ScatterPoint>& points, const std::string& x_label,
                      const std::string& y_label, const std::string& title);

}  // namespace tlsloss::io
