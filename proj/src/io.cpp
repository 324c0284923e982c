#include "tlsloss/io.hpp"

#include "tlsloss/errors.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace tlsloss::io {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string strip_comment(const std::string& line) {
  const auto pos = line.find_first_of("#;");
  return pos == std::string::npos ? line : line.substr(0, pos);
}

std::optional<double> to_double(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Data lines of a CSV file with their 1-based line numbers; blank and # lines skipped.
std::vector<std::pair<std::size_t, std::string>> csv_lines(const std::string& text) {
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    lines.emplace_back(n, t);
  }
  return lines;
}

double finite_value(const ConfigDocument& doc, const ConfigDocument::Entry& e, const std::string& key) {
  const auto v = to_double(e.value);
  if (!v || !std::isfinite(*v)) throw ParseError(doc.source(), e.line, "'" + key + "' must be a finite number");
  return *v;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ConfigDocument ConfigDocument::parse(const std::string& text, const std::string& source) {
  ConfigDocument doc;
  doc.source_ = source;
  std::string current;
  doc.sections_[current];
  std::istringstream in(text);
  std::string raw;
  std::size_t n = 0;
  while (std::getline(in, raw)) {
    ++n;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(source, n, "unterminated section header");
      current = trim(line.substr(1, line.size() - 2));
      if (current.empty()) throw ParseError(source, n, "empty section name");
      if (doc.sections_.count(current)) throw ParseError(source, n, "duplicate section [" + current + "]");
      doc.sections_[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, n, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(source, n, "missing key before '='");
    auto& sec = doc.sections_[current];
    if (sec.count(key)) throw ParseError(source, n, "duplicate key '" + key + "'");
    sec[key] = Entry{trim(line.substr(eq + 1)), n};
  }
  if (doc.sections_[""].empty()) doc.sections_.erase("");
  return doc;
}

ConfigDocument ConfigDocument::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

const ConfigDocument::Section* ConfigDocument::section(const std::string& name) const {
  const auto it = sections_.find(name);
  return it == sections_.end() ? nullptr : &it->second;
}

std::optional<std::string> ConfigDocument::get_string(const std::string& sec, const std::string& key) const {
  const Section* s = section(sec);
  if (!s) return std::nullopt;
  const auto it = s->find(key);
  if (it == s->end()) return std::nullopt;
  return it->second.value;
}

std::optional<double> ConfigDocument::get_double(const std::string& sec, const std::string& key) const {
  const Section* s = section(sec);
  if (!s) return std::nullopt;
  const auto it = s->find(key);
  if (it == s->end()) return std::nullopt;
  return finite_value(*this, it->second, key);
}

std::optional<long long> ConfigDocument::get_int(const std::string& sec, const std::string& key) const {
  const Section* s = section(sec);
  if (!s) return std::nullopt;
  const auto it = s->find(key);
  if (it == s->end()) return std::nullopt;
  const std::string& t = it->second.value;
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ParseError(source_, it->second.line, "'" + key + "' must be an integer");
  }
  return v;
}

double ConfigDocument::require_double(const std::string& sec, const std::string& key) const {
  const auto v = get_double(sec, key);
  if (!v) {
    const Section* s = section(sec);
    const std::size_t line = s && !s->empty() ? s->begin()->second.line : 0;
    throw ParseError(source_, line, "missing key '" + key + "' in [" + sec + "]");
  }
  return *v;
}

void ConfigDocument::reject_unknown_keys(const std::string& sec, const std::vector<std::string>& allowed) const {
  const Section* s = section(sec);
  if (!s) return;
  for (const auto& [key, entry] : *s) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ParseError(source_, entry.line, "unknown key '" + key + "' in [" + sec + "]");
    }
  }
}

resonance::ComplexTrace parse_trace_csv(const std::string& text, const std::string& source) {
  const auto lines = csv_lines(text);
  if (lines.empty()) throw ParseError(source, 0, "empty trace file");
  const auto header = split_csv(lower(lines.front().second));
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto cf = column("frequency_hz");
  const auto cre = column("s21_real"), cim = column("s21_imag");
  const auto cdb = column("s21_db"), cph = column("s21_phase_deg");
  const bool cartesian = cre && cim;
  if (!cf || !(cartesian || (cdb && cph))) {
    throw ParseError(source, lines.front().first,
                     "header must name frequency_hz and either s21_real,s21_imag or s21_db,s21_phase_deg");
  }
  std::vector<double> f;
  std::vector<resonance::Complex> s;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto& [n, line] = lines[k];
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw ParseError(source, n, "expected " + std::to_string(header.size()) + " columns, found " +
                                      std::to_string(cells.size()));
    }
    auto num = [&](std::size_t c) {
      const auto v = to_double(cells[c]);
      if (!v || !std::isfinite(*v)) throw ParseError(source, n, "'" + cells[c] + "' is not a finite number");
      return *v;
    };
    f.push_back(num(*cf));
    if (cartesian) {
      s.emplace_back(num(*cre), num(*cim));
    } else {
      const double mag = std::pow(10.0, num(*cdb) / 20.0);
      s.push_back(std::polar(mag, num(*cph) * std::numbers::pi / 180.0));
    }
  }
  if (f.size() < 2) throw ParseError(source, lines.back().first, "trace needs at least two samples");
  try {
    return resonance::ComplexTrace::from_unordered(std::move(f), std::move(s));
  } catch (const std::invalid_argument& e) {
    throw ParseError(source, 0, e.what());
  }
}

resonance::ComplexTrace read_trace_csv(const std::filesystem::path& path) {
  auto trace = parse_trace_csv(read_file(path), path.string());
  trace.set_label(path.stem().string());
  return trace;
}

void write_trace_csv(std::ostream& out, const resonance::ComplexTrace& trace) {
  out << "frequency_hz,s21_real,s21_imag\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    out << format_double(trace.frequencies()[k]) << ',' << format_double(trace.s21()[k].real()) << ','
        << format_double(trace.s21()[k].imag()) << '\n';
  }
}

std::filesystem::path metadata_path_for(const std::filesystem::path& trace_path) {
  auto p = trace_path;
  p += ".meta";
  return p;
}

TraceMetadata read_trace_metadata(const std::filesystem::path& path) {
  const auto doc = ConfigDocument::load(path);
  doc.reject_unknown_keys("", {"drive_power_dbm", "line_attenuation_db", "label"});
  TraceMetadata meta;
  meta.drive_power_dbm = doc.get_double("", "drive_power_dbm");
  meta.line_attenuation_db = doc.get_double("", "line_attenuation_db");
  meta.label = doc.get_string("", "label");
  if (meta.line_attenuation_db && *meta.line_attenuation_db < 0.0) {
    throw ParseError(path.string(), doc.section("")->at("line_attenuation_db").line,
                     "line_attenuation_db must be >= 0");
  }
  return meta;
}

calibration::LineCalibration calibration_from(const ConfigDocument& doc) {
  doc.reject_unknown_keys("calibration", {"z0_ohm", "c_per_length_f_per_m", "resonator_length_m", "line_attenuation_db"});
  calibration::LineCalibration cal;
  cal.z0_ohm = doc.get_double("calibration", "z0_ohm").value_or(cal.z0_ohm);
  cal.c_per_length_f_per_m = doc.get_double("calibration", "c_per_length_f_per_m").value_or(cal.c_per_length_f_per_m);
  cal.resonator_length_m = doc.get_double("calibration", "resonator_length_m").value_or(cal.resonator_length_m);
  cal.line_attenuation_db = doc.get_double("calibration", "line_attenuation_db").value_or(cal.line_attenuation_db);
  try {
    cal.validate();
  } catch (const std::exception& e) {
    throw ParseError(doc.source(), 0, e.what());
  }
  return cal;
}

lossmodel::LossBudget budget_from(const ConfigDocument& doc) {
  lossmodel::LossBudget budget;
  if (!doc.has_section("background")) throw ParseError(doc.source(), 0, "missing [background] section");
  doc.reject_unknown_keys("background", {"q0"});
  budget.q0 = doc.require_double("background", "q0");
  const std::string prefix = "channel.";
  std::vector<std::pair<std::size_t, lossmodel::LossChannel>> channels;
  for (const auto& [name, section] : doc.sections()) {
    if (name == "background") continue;
    if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) {
      const std::size_t line = section.empty() ? 0 : section.begin()->second.line;
      throw ParseError(doc.source(), line, "unexpected section [" + name + "]");
    }
    doc.reject_unknown_keys(name, {"participation", "loss_tangent"});
    lossmodel::LossChannel ch;
    ch.label = name.substr(prefix.size());
    ch.participation = doc.require_double(name, "participation");
    ch.loss_tangent = doc.require_double(name, "loss_tangent");
    std::size_t first_line = std::numeric_limits<std::size_t>::max();
    for (const auto& [k, e] : section) first_line = std::min(first_line, e.line);
    channels.emplace_back(first_line, std::move(ch));
  }
  // Keep file order so ties in the loss ranking stay stable.
  std::stable_sort(channels.begin(), channels.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [line, ch] : channels) budget.channels.push_back(std::move(ch));
  try {
    budget.validate();
  } catch (const std::exception& e) {
    throw ParseError(doc.source(), 0, e.what());
  }
  return budget;
}

std::vector<lossmodel::SitePoint> parse_site_points(const std::string& text, const std::string& source) {
  const auto lines = csv_lines(text);
  if (lines.empty()) throw ParseError(source, 0, "empty regression file");
  const auto header = split_csv(lower(lines.front().second));
  const bool with_sigma = header.size() == 3 && header[2] == "sigma";
  if (header.size() < 2 || header[0] != "n_sites" || header[1] != "inverse_qi" || (header.size() == 3 && !with_sigma) ||
      header.size() > 3) {
    throw ParseError(source, lines.front().first, "header must be n_sites,inverse_qi[,sigma]");
  }
  std::vector<lossmodel::SitePoint> points;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto& [n, line] = lines[k];
    const auto cells = split_csv(line);
    if (cells.size() != header.size() && !(with_sigma && cells.size() == 2)) {
      throw ParseError(source, n, "wrong number of columns");
    }
    const auto sites = to_double(cells[0]);
    if (!sites || *sites < 0 || *sites != std::floor(*sites) || *sites > 1e9) {
      throw ParseError(source, n, "n_sites must be a non-negative integer");
    }
    const auto inv = to_double(cells[1]);
    if (!inv || !std::isfinite(*inv)) throw ParseError(source, n, "inverse_qi must be a finite number");
    lossmodel::SitePoint p{static_cast<unsigned>(*sites), *inv, std::nullopt};
    if (with_sigma && cells.size() == 3 && !cells[2].empty()) {
      const auto s = to_double(cells[2]);
      if (!s || !(*s > 0.0) || !std::isfinite(*s)) throw ParseError(source, n, "sigma must be positive");
      p.sigma = *s;
    }
    points.push_back(p);
  }
  return points;
}

std::vector<lossmodel::SitePoint> read_site_points(const std::filesystem::path& path) {
  return parse_site_points(read_file(path), path.string());
}

Geometry geometry_from(const ConfigDocument& doc) {
  using namespace fieldsolver;
  auto layer = [&](const std::string& sec, InterfaceLayer base) {
    doc.reject_unknown_keys(sec, {"thickness_m", "epsilon"});
    base.thickness_m = doc.get_double(sec, "thickness_m").value_or(base.thickness_m);
    base.epsilon = doc.get_double(sec, "epsilon").value_or(base.epsilon);
    return base;
  };
  auto wrap = [&](auto&& build) -> Geometry {
    try {
      return build();
    } catch (const PreconditionError& e) {
      throw ParseError(doc.source(), 0, e.what());
    }
  };
  const bool cpw = doc.has_section("cpw");
  const bool plate = doc.has_section("parallel_plate");
  if (cpw == plate) throw ParseError(doc.source(), 0, "geometry needs exactly one of [cpw] or [parallel_plate]");
  for (const auto& [name, sec] : doc.sections()) {
    static const std::vector<std::string> known{"cpw", "parallel_plate", "layers.sm", "layers.sv", "layers.mv", "domain"};
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw ParseError(doc.source(), sec.empty() ? 0 : sec.begin()->second.line, "unexpected section [" + name + "]");
    }
  }
  if (cpw) {
    return wrap([&] {
      doc.reject_unknown_keys("cpw", {"w_m", "g_m", "metal_thickness_m", "substrate_epsilon"});
      doc.reject_unknown_keys("domain", {"half_width_m", "height_m", "cells_per_gap"});
      CpwGeometry g;
      g.center_width_m = doc.get_double("cpw", "w_m").value_or(g.center_width_m);
      g.gap_m = doc.get_double("cpw", "g_m").value_or(g.gap_m);
      g.metal_thickness_m = doc.get_double("cpw", "metal_thickness_m").value_or(g.metal_thickness_m);
      g.substrate_epsilon = doc.get_double("cpw", "substrate_epsilon").value_or(g.substrate_epsilon);
      g.domain_half_width_m = doc.get_double("domain", "half_width_m");
      g.domain_height_m = doc.get_double("domain", "height_m");
      if (const auto c = doc.get_int("domain", "cells_per_gap")) g.cells_per_gap = static_cast<int>(*c);
      for (const auto kind : kAllInterfaces) {
        const std::string sec = "layers." + std::string(to_string(kind));
        g.layers[kind] = layer(sec, g.layers[kind]);
      }
      g.validate();
      return Geometry{g};
    });
  }
  if (doc.has_section("layers.sv") || doc.has_section("layers.mv") || doc.has_section("domain")) {
    throw ParseError(doc.source(), 0, "[parallel_plate] takes only a [layers.sm] film section");
  }
  return wrap([&] {
    doc.reject_unknown_keys("parallel_plate", {"separation_m", "width_m", "plate_thickness_m", "epsilon", "cells_across_gap"});
    ParallelPlateGeometry g;
    g.separation_m = doc.get_double("parallel_plate", "separation_m").value_or(g.separation_m);
    g.width_m = doc.get_double("parallel_plate", "width_m").value_or(g.width_m);
    g.plate_thickness_m = doc.get_double("parallel_plate", "plate_thickness_m").value_or(g.plate_thickness_m);
    g.epsilon = doc.get_double("parallel_plate", "epsilon").value_or(g.epsilon);
    if (const auto c = doc.get_int("parallel_plate", "cells_across_gap")) g.cells_across_gap = static_cast<int>(*c);
    if (doc.has_section("layers.sm")) g.bottom_layer = layer("layers.sm", *g.bottom_layer);
    g.validate();
    return Geometry{g};
  });
}

fieldsolver::CrossSection cross_section_of(const Geometry& geometry) {
  return std::visit([](const auto& g) { return g.cross_section(); }, geometry);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream out;
  for (unsigned int k = 0; k < len; ++k) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[k]);
  return out.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const CsvTable& table) {
  for (std::size_t c = 0; c < table.columns.size(); ++c) out << (c ? "," : "") << table.columns[c];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << (c ? "," : "");
      if (!std::isnan(row[c])) out << format_double(row[c]);
    }
    out << '\n';
  }
}

CsvTable parse_csv_table(const std::string& text, const std::string& source) {
  const auto lines = csv_lines(text);
  if (lines.empty()) throw ParseError(source, 0, "empty CSV file");
  CsvTable table;
  table.columns = split_csv(lines.front().second);
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto& [n, line] = lines[k];
    const auto cells = split_csv(line);
    if (cells.size() != table.columns.size()) throw ParseError(source, n, "wrong number of columns");
    std::vector<double> row;
    for (const auto& c : cells) {
      if (c.empty() || lower(c) == "nan") {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const auto v = to_double(c);
      if (!v) throw ParseError(source, n, "'" + c + "' is not a number");
      row.push_back(*v);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_loglog_svg(std::ostream& out, const std::vector<ScatterPoint>& points, const std::string& x_label,
                      const std::string& y_label, const std::string& title) {
  constexpr double width = 640, height = 480, left = 80, right = 20, top = 40, bottom = 60;
  std::vector<ScatterPoint> pts;
  for (const auto& p : points) {
    if (p.x > 0 && p.y > 0 && std::isfinite(p.x) && std::isfinite(p.y)) pts.push_back(p);
  }
  double x0 = 1, x1 = 10, y0 = 1, y1 = 10;
  if (!pts.empty()) {
    auto [xmin, xmax] = std::minmax_element(pts.begin(), pts.end(), [](auto a, auto b) { return a.x < b.x; });
    auto [ymin, ymax] = std::minmax_element(pts.begin(), pts.end(), [](auto a, auto b) { return a.y < b.y; });
    x0 = std::pow(10.0, std::floor(std::log10(xmin->x)));
    x1 = std::pow(10.0, std::ceil(std::log10(xmax->x) + 1e-12));
    y0 = std::pow(10.0, std::floor(std::log10(ymin->y)));
    y1 = std::pow(10.0, std::ceil(std::log10(ymax->y) + 1e-12));
  }
  auto px = [&](double x) { return left + (width - left - right) * std::log10(x / x0) / std::log10(x1 / x0); };
  auto py = [&](double y) { return height - bottom - (height - top - bottom) * std::log10(y / y0) / std::log10(y1 / y0); };
  auto esc = [](const std::string& s) {
    std::string r;
    for (char c : s) {
      if (c == '<') r += "&lt;";
      else if (c == '>') r += "&gt;";
      else if (c == '&') r += "&amp;";
      else r += c;
    }
    return r;
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << esc(title) << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << width - left - right << "\" height=\""
      << height - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double d = x0; d <= x1 * 1.0001; d *= 10) {
    out << "<line x1=\"" << px(d) << "\" y1=\"" << height - bottom << "\" x2=\"" << px(d) << "\" y2=\"" << top
        << "\" stroke=\"#ddd\"/>\n<text x=\"" << px(d) << "\" y=\"" << height - bottom + 18
        << "\" text-anchor=\"middle\" font-size=\"12\">1e" << std::lround(std::log10(d)) << "</text>\n";
  }
  for (double d = y0; d <= y1 * 1.0001; d *= 10) {
    out << "<line x1=\"" << left << "\" y1=\"" << py(d) << "\" x2=\"" << width - right << "\" y2=\"" << py(d)
        << "\" stroke=\"#ddd\"/>\n<text x=\"" << left - 6 << "\" y=\"" << py(d) + 4
        << "\" text-anchor=\"end\" font-size=\"12\">1e" << std::lround(std::log10(d)) << "</text>\n";
  }
  for (const auto& p : pts) {
    out << "<circle cx=\"" << px(p.x) << "\" cy=\"" << py(p.y) << "\" r=\"4\" fill=\"steelblue\"/>\n";
  }
  out << "<text x=\"" << width / 2 << "\" y=\"" << height - 16 << "\" text-anchor=\"middle\" font-size=\"14\">"
      << esc(x_label) << "</text>\n";
  out << "<text transform=\"translate(20," << height / 2 << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"14\">"
      << esc(y_label) << "</text>\n</svg>\n";
}

}  // namespace tlsloss::io
