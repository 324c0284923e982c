#include "tlsloss/cli.hpp"

#include "tlsloss/calibration.hpp"
#include "tlsloss/errors.hpp"
#include "tlsloss/fieldsolver.hpp"
#include "tlsloss/io.hpp"
#include "tlsloss/lossmodel.hpp"
#include "tlsloss/resonance.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

namespace tlsloss::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// Carries an exit code out of a command body.
struct CommandFailure : std::runtime_error {
  CommandFailure(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

struct Globals {
  std::optional<std::string> config;
  std::optional<std::string> out;
  bool plot = false;
  std::uint64_t seed = 0;
  bool seed_given = false;
  unsigned threads = 0;
};

// Line-delimited JSON report: a header record naming the command and the input digests,
// then one record per result.
class Report {
 public:
  Report(std::string command, const Globals& g) {
    header_["record"] = "report";
    header_["tool"] = "tlsloss";
    header_["tool_version"] = kToolVersion;
    header_["command"] = std::move(command);
    header_["inputs"] = ordered_json::array();
    if (g.seed_given) header_["seed"] = g.seed;
  }

  void add_input(const fs::path& path) {
    header_["inputs"].push_back({{"path", path.string()}, {"sha256", io::sha256_file(path)}});
  }

  void add(ordered_json record) { records_.push_back(std::move(record)); }

  void warn(const std::string& text) {
    warnings_.push_back(text);
    add({{"record", "warning"}, {"message", text}});
  }
  const std::vector<std::string>& warnings() const { return warnings_; }

  void emit(const Globals& g, std::ostream& out, std::ostream& err) const {
    std::ostringstream buf;
    buf << header_.dump() << '\n';
    for (const auto& r : records_) buf << r.dump() << '\n';
    for (const auto& w : warnings_) err << "warning: " << w << '\n';
    if (g.out) {
      std::ofstream f(*g.out, std::ios::binary);
      if (!f) throw CommandFailure(kInputError, "cannot write " + *g.out);
      f << buf.str();
    } else {
      out << buf.str();
    }
  }

 private:
  ordered_json header_;
  std::vector<ordered_json> records_;
  std::vector<std::string> warnings_;
};

std::optional<io::ConfigDocument> load_config(const Globals& g, Report& report) {
  if (!g.config) return std::nullopt;
  report.add_input(*g.config);
  return io::ConfigDocument::load(*g.config);
}

ordered_json fit_record(const resonance::ResonanceFit& fit) {
  ordered_json r;
  r["f0_hz"] = number(fit.f0);
  r["f0_stderr_hz"] = number(fit.f0_stderr());
  r["qi_unitless"] = number(fit.qi);
  r["qi_stderr_unitless"] = number(fit.qi_stderr());
  r["qc_star_unitless"] = number(fit.qc_star);
  r["qc_star_stderr_unitless"] = number(fit.qc_star_stderr());
  r["phi_rad"] = number(fit.phi);
  r["phi_stderr_rad"] = number(fit.phi_stderr());
  r["ql_unitless"] = number(fit.loaded_q());
  r["env_amplitude_unitless"] = number(fit.env_amplitude);
  r["env_phase_rad"] = number(fit.env_phase);
  r["env_delay_s"] = number(fit.env_delay);
  r["residual_rms_unitless"] = number(fit.residual_rms);
  r["iterations_count"] = fit.n_iterations;
  r["degenerate"] = fit.degenerate;
  r["warnings"] = fit.warnings;
  return r;
}

// Attenuation precedence: command-line flag, then the trace sidecar, then the config file.
double effective_attenuation(const std::optional<double>& flag, const io::TraceMetadata& meta,
                             const calibration::LineCalibration& cal) {
  if (flag) return *flag;
  if (meta.line_attenuation_db) return *meta.line_attenuation_db;
  return cal.line_attenuation_db;
}

io::TraceMetadata metadata_for(const fs::path& trace, Report* report) {
  const auto meta_path = io::metadata_path_for(trace);
  if (!fs::exists(meta_path)) return {};
  if (report) report->add_input(meta_path);
  return io::read_trace_metadata(meta_path);
}

// ---- fit ----

struct FitArgs {
  std::string trace;
  std::optional<double> attenuation_db;
  std::optional<double> power_dbm;
};

void cmd_fit(const FitArgs& a, const Globals& g, Report& report) {
  const auto config = load_config(g, report);
  const auto cal = config ? io::calibration_from(*config) : calibration::LineCalibration{};
  report.add_input(a.trace);
  auto trace = io::read_trace_csv(a.trace);
  const auto meta = metadata_for(a.trace, &report);
  const std::optional<double> power = a.power_dbm ? a.power_dbm : meta.drive_power_dbm;
  const double att = effective_attenuation(a.attenuation_db, meta, cal);

  resonance::ResonanceFit fit;
  try {
    fit = resonance::fit_trace(trace);
  } catch (const resonance::FitDivergedError& e) {
    report.add({{"record", "fit_failure"}, {"reason", e.what()}, {"last_iterate", fit_record(e.last_iterate())}});
    throw CommandFailure(kFitFailure, e.what());
  } catch (const resonance::NoResonanceError& e) {
    throw CommandFailure(kFitFailure, e.what());
  } catch (const resonance::UnidentifiableError& e) {
    throw CommandFailure(kFitFailure, e.what());
  }
  ordered_json r{{"record", "fit"}, {"trace", meta.label.value_or(trace.label())}, {"points_count", trace.size()}};
  r.update(fit_record(fit));
  if (power) {
    auto c = cal;
    c.line_attenuation_db = att;
    r["drive_power_dbm"] = *power;
    r["line_attenuation_db"] = att;
    r["photon_number_unitless"] = number(calibration::mean_photon_number(fit, c, *power));
  }
  report.add(std::move(r));
  for (const auto& w : fit.warnings) report.warn(w);
}

// ---- sweep ----

struct SweepArgs {
  std::string dir;
  std::optional<double> attenuation_db;
  std::optional<std::string> curve;
  double single_photon_cutoff = 10.0;
};

struct SweepRow {
  fs::path path;
  std::optional<double> power_dbm;
  std::optional<std::string> label;
  double attenuation_db = 0.0;
  std::optional<resonance::ResonanceFit> fit;
  double photon_number = std::nan("");
  std::string error;
};

fs::path sibling(const fs::path& base, const std::string& suffix) {
  fs::path p = base;
  p.replace_extension();
  p += suffix;
  return p;
}

void cmd_sweep(const SweepArgs& a, const Globals& g, Report& report) {
  const auto config = load_config(g, report);
  const auto cal = config ? io::calibration_from(*config) : calibration::LineCalibration{};
  if (!fs::is_directory(a.dir)) throw CommandFailure(kInputError, "not a directory: " + a.dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw CommandFailure(kInputError, "no .csv traces in " + a.dir);

  std::vector<SweepRow> rows(files.size());
  for (std::size_t k = 0; k < files.size(); ++k) {
    rows[k].path = files[k];
    report.add_input(files[k]);
    // Sidecar problems are input errors for the whole sweep: they define the sweep itself.
    const auto meta = metadata_for(files[k], &report);
    rows[k].power_dbm = meta.drive_power_dbm;
    rows[k].label = meta.label;
    rows[k].attenuation_db = effective_attenuation(a.attenuation_db, meta, cal);
  }
  std::optional<std::string> label;
  std::map<double, fs::path> powers;
  for (const auto& row : rows) {
    if (row.label) {
      if (label && *label != *row.label) {
        throw CommandFailure(kInputError, "sweep mixes resonators '" + *label + "' and '" + *row.label + "'");
      }
      label = row.label;
    }
    if (row.power_dbm) {
      const auto [it, fresh] = powers.emplace(*row.power_dbm, row.path);
      if (!fresh) {
        throw CommandFailure(kInputError, "drive power " + io::format_double(*row.power_dbm) + " dBm appears in both " +
                                              it->second.string() + " and " + row.path.string());
      }
    }
  }

  unsigned threads = g.threads ? g.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(rows.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < rows.size(); k = next++) {
      SweepRow& row = rows[k];
      try {
        if (!row.power_dbm) throw std::runtime_error("no drive_power_dbm in sidecar metadata");
        const auto trace = io::read_trace_csv(row.path);
        row.fit = resonance::fit_trace(trace);
        auto c = cal;
        c.line_attenuation_db = row.attenuation_db;
        row.photon_number = calibration::mean_photon_number(*row.fit, c, *row.power_dbm);
      } catch (const std::exception& e) {
        row.fit.reset();
        row.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // Ascending power; rows without a power go last in file order.
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& x, const SweepRow& y) {
    if (!x.power_dbm || !y.power_dbm) return x.power_dbm.has_value() && !y.power_dbm.has_value();
    return *x.power_dbm < *y.power_dbm;
  });

  io::CsvTable curve{{"drive_power_dbm", "photon_number_unitless", "qi_unitless", "qi_stderr_unitless",
                      "qc_star_unitless", "f0_hz"},
                     {}};
  std::vector<io::ScatterPoint> scatter;
  double plateau_sum = 0.0;
  std::size_t plateau_n = 0;
  for (const auto& row : rows) {
    ordered_json r{{"record", "sweep_row"}, {"trace", row.path.filename().string()}};
    r["drive_power_dbm"] = row.power_dbm ? json(*row.power_dbm) : json(nullptr);
    r["line_attenuation_db"] = row.attenuation_db;
    if (!row.fit) {
      r["ok"] = false;
      r["error"] = row.error;
      report.add(std::move(r));
      report.warn(row.path.filename().string() + ": " + row.error);
      continue;
    }
    r["ok"] = true;
    r["photon_number_unitless"] = number(row.photon_number);
    r.update(fit_record(*row.fit));
    report.add(std::move(r));
    curve.rows.push_back({*row.power_dbm, row.photon_number, row.fit->qi, row.fit->qi_stderr(), row.fit->qc_star,
                          row.fit->f0});
    scatter.push_back({row.photon_number, row.fit->qi});
    if (row.photon_number < a.single_photon_cutoff) {
      plateau_sum += row.fit->qi;
      ++plateau_n;
    }
  }
  ordered_json summary{{"record", "sweep_summary"},
                       {"resonator", label ? json(*label) : json(nullptr)},
                       {"traces_count", rows.size()},
                       {"fitted_count", curve.rows.size()},
                       {"single_photon_cutoff_photons", a.single_photon_cutoff},
                       {"single_photon_points_count", plateau_n}};
  summary["qi_single_photon_unitless"] = plateau_n ? json(plateau_sum / static_cast<double>(plateau_n)) : json(nullptr);
  report.add(std::move(summary));
  if (!plateau_n) report.warn("no fitted trace below " + io::format_double(a.single_photon_cutoff) + " photons");

  std::optional<fs::path> curve_path;
  if (a.curve) curve_path = *a.curve;
  else if (g.out) curve_path = sibling(*g.out, ".curve.csv");
  if (curve_path) {
    std::ofstream f(*curve_path, std::ios::binary);
    if (!f) throw CommandFailure(kInputError, "cannot write " + curve_path->string());
    io::write_csv(f, curve);
  }
  if (g.plot) {
    if (!curve_path) throw CommandFailure(kInputError, "--plot needs --out or --curve to place the SVG");
    const auto svg = sibling(*curve_path, ".svg");
    std::ofstream f(svg, std::ios::binary);
    if (!f) throw CommandFailure(kInputError, "cannot write " + svg.string());
    io::write_loglog_svg(f, scatter, "mean photon number", "Qi", label.value_or("power sweep"));
  }
}

// ---- regress-sites ----

void cmd_regress(const std::string& csv, const Globals&, Report& report) {
  report.add_input(csv);
  const auto points = io::read_site_points(csv);
  lossmodel::SiteLossFit fit;
  try {
    fit = lossmodel::fit_loss_per_site(points);
  } catch (const PreconditionError& e) {
    throw CommandFailure(kInputError, e.what());
  }
  report.add({{"record", "site_regression"},
              {"slope_inverse_q_per_site", number(fit.slope)},
              {"slope_stderr_inverse_q_per_site", number(fit.slope_stderr)},
              {"intercept_inverse_q", number(fit.intercept)},
              {"intercept_stderr_inverse_q", number(fit.intercept_stderr)},
              {"r_squared_unitless", number(fit.r_squared)},
              {"weighted", fit.weighted},
              {"points_count", fit.n_points}});
}

// ---- participation ----

struct ParticipationArgs {
  std::string geometry;
  double tolerance = 0.01;
  int max_level = fieldsolver::RefineOptions{}.max_level;
  std::size_t max_unknowns = fieldsolver::RefineOptions{}.max_unknowns;
  std::optional<std::string> field_dump;
};

ordered_json participation_record(const fieldsolver::ParticipationSet& p) {
  ordered_json r;
  for (const auto& [kind, ip] : p.interfaces) {
    const std::string k(fieldsolver::to_string(kind));
    r["p_" + k + "_unitless"] = number(ip.total);
    ordered_json per = ordered_json::object();
    for (const auto& [label, v] : ip.per_conductor) per[label + "_unitless"] = number(v);
    r["p_" + k + "_per_conductor"] = per;
  }
  r["p_sum_unitless"] = number(p.sum());
  r["refinement_level_count"] = p.refinement_level;
  r["unknowns_count"] = p.unknowns;
  r["min_step_m"] = number(p.min_step);
  r["error_estimate_relative"] = number(p.error_estimate);
  return r;
}

void add_trajectory(Report& report, const std::vector<fieldsolver::ConvergenceStep>& steps) {
  for (const auto& s : steps) {
    ordered_json r{{"record", "mesh_level"},
                   {"level_count", s.level},
                   {"unknowns_count", s.unknowns},
                   {"min_step_m", number(s.min_step)},
                   {"max_relative_change_relative", number(s.max_relative_change)}};
    r.update(participation_record(s.participations));
    report.add(std::move(r));
  }
}

void cmd_participation(const ParticipationArgs& a, const Globals&, Report& report) {
  if (!(a.tolerance > 0.0 && a.tolerance <= 0.1)) {
    throw CommandFailure(kInputError, "tolerance must lie in (0, 0.1], got " + io::format_double(a.tolerance));
  }
  report.add_input(a.geometry);
  const auto geometry = io::geometry_from(io::ConfigDocument::load(a.geometry));
  const auto section = io::cross_section_of(geometry);
  fieldsolver::RefinementResult result;
  try {
    result = fieldsolver::refine_until_converged(section, a.tolerance, {a.max_level, a.max_unknowns});
  } catch (const fieldsolver::ConvergenceError& e) {
    add_trajectory(report, e.trajectory());
    throw CommandFailure(kSolverNonConvergence, e.what());
  } catch (const fieldsolver::LinearSolveError& e) {
    throw CommandFailure(kSolverNonConvergence, e.what());
  }
  add_trajectory(report, result.trajectory);
  ordered_json r{{"record", "participation"},
                 {"geometry", std::holds_alternative<fieldsolver::CpwGeometry>(geometry) ? "cpw" : "parallel_plate"},
                 {"tolerance_relative", a.tolerance}};
  r.update(participation_record(result.participations));
  r["capacitance_energy_f_per_m"] = number(result.finest.capacitance_energy);
  r["capacitance_charge_f_per_m"] =
      result.finest.capacitance_charge ? number(*result.finest.capacitance_charge) : json(nullptr);
  r["energy_j_per_m"] = number(result.finest.total_energy);
  report.add(std::move(r));
  if (a.field_dump) {
    std::ofstream f(*a.field_dump, std::ios::binary);
    if (!f) throw CommandFailure(kInputError, "cannot write " + *a.field_dump);
    io::CsvTable t{{"x_m", "y_m", "potential_v", "ex_v_per_m", "ey_v_per_m"}, {}};
    const auto& s = result.finest;
    for (std::size_t j = 0; j < s.ny(); ++j) {
      for (std::size_t i = 0; i < s.nx(); ++i) {
        const auto& e = s.e_field[i + s.nx() * j];
        t.rows.push_back({s.x[i], s.y[j], s.phi(i, j), e[0], e[1]});
      }
    }
    io::write_csv(f, t);
  }
}

// ---- budget ----

void cmd_budget(const std::string& path, const Globals&, Report& report) {
  report.add_input(path);
  const auto budget = io::budget_from(io::ConfigDocument::load(path));
  const double total = lossmodel::total_quality(budget);
  const auto losses = lossmodel::channel_losses(budget);
  double channel_sum = 0.0;
  for (const auto& [label, l] : losses) channel_sum += l;
  report.add({{"record", "budget"},
              {"q0_unitless", budget.q0},
              {"total_quality_unitless", number(total)},
              {"total_inverse_q", number(1.0 / total)},
              {"channel_inverse_q", number(channel_sum)},
              {"channels_count", losses.size()}});
  for (const auto& [label, l] : losses) {
    report.add({{"record", "budget_channel"},
                {"label", label},
                {"loss_inverse_q", number(l)},
                {"fraction_of_channel_loss_unitless", channel_sum > 0 ? number(l / channel_sum) : json(nullptr)}});
  }
}

// ---- ratio ----

struct RatioArgs {
  std::optional<double> l_qubit_m;
  std::optional<double> l_resonator_m;
  std::optional<unsigned> sites;
  unsigned electrodes = 2;
  std::string qubit_capacitance = "xmon_cross";
};

void cmd_ratio(const RatioArgs& a, const Globals& g, Report& report) {
  const auto config = load_config(g, report);
  bool any = false;
  if (a.l_qubit_m || a.l_resonator_m) {
    if (!a.l_qubit_m || !a.l_resonator_m) {
      throw CommandFailure(kInputError, "--l-qubit-m and --l-resonator-m go together");
    }
    report.add({{"record", "voltage_ratio"},
                {"l_qubit_m", *a.l_qubit_m},
                {"l_resonator_m", *a.l_resonator_m},
                {"voltage_ratio_squared_unitless", lossmodel::voltage_ratio_squared(*a.l_qubit_m, *a.l_resonator_m)},
                {"qubit_sensitivity_factor_unitless",
                 lossmodel::qubit_sensitivity_factor(*a.l_qubit_m, *a.l_resonator_m)}});
    any = true;
  }
  if (a.sites) {
    auto caps = lossmodel::CircuitCapacitances::defaults();
    if (config && config->section("capacitances")) {
      for (const auto& [key, entry] : *config->section("capacitances")) {
        caps.set(key, config->require_double("capacitances", key));
      }
    }
    report.add({{"record", "participation_equivalence"},
                {"sites_count", *a.sites},
                {"qubit_electrodes_count", a.electrodes},
                {"resonator_capacitance_f", caps.at("resonator")},
                {"qubit_capacitance_f", caps.at(a.qubit_capacitance)},
                {"ratio_unitless", lossmodel::participation_equivalence(*a.sites, caps, a.electrodes)}});
    any = true;
  }
  if (!any) throw CommandFailure(kInputError, "ratio needs --l-qubit-m/--l-resonator-m or --sites");
}

// ---- synth ----

struct SynthArgs {
  double f0_hz = 6e9;
  double qi = 1e6;
  double qc_star = 5e5;
  double phi = 0.0;
  double env_amplitude = 1.0;
  double env_phase = 0.0;
  double env_delay = 0.0;
  double noise = 0.0;
  std::size_t points = 401;
  double span_linewidths = 5.0;
  std::optional<double> power_dbm;
  std::optional<std::string> label;
};

void cmd_synth(const SynthArgs& a, const Globals& g, std::ostream& out) {
  resonance::ResonanceFit p;
  p.f0 = a.f0_hz;
  p.qi = a.qi;
  p.qc_star = a.qc_star;
  p.phi = a.phi;
  p.env_amplitude = a.env_amplitude;
  p.env_phase = a.env_phase;
  p.env_delay = a.env_delay;
  try {
    p.validate();
    if (!(a.noise >= 0.0)) throw DomainError("noise must be >= 0");
  } catch (const std::exception& e) {
    throw CommandFailure(kInputError, e.what());
  }
  const auto f = resonance::linewidth_grid(p.f0, p.loaded_q(), a.points, a.span_linewidths);
  const auto trace = resonance::synthesize_trace(p, f, a.noise, g.seed);
  if (!g.out) {
    io::write_trace_csv(out, trace);
    return;
  }
  std::ofstream file(*g.out, std::ios::binary);
  if (!file) throw CommandFailure(kInputError, "cannot write " + *g.out);
  io::write_trace_csv(file, trace);
  if (a.power_dbm || a.label) {
    std::ofstream meta(io::metadata_path_for(*g.out), std::ios::binary);
    if (a.power_dbm) meta << "drive_power_dbm = " << io::format_double(*a.power_dbm) << '\n';
    if (a.label) meta << "label = " << *a.label << '\n';
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Resonator loss analysis: trace fits, power sweeps, loss budgets and interface participations.",
               "tlsloss"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kToolVersion);

  Globals g;
  app.add_option("--config", g.config, "Sectioned key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Write the report to this file instead of stdout");
  app.add_flag("--plot", g.plot, "Also write an SVG plot (sweep)");
  auto* seed_opt = app.add_option("--seed", g.seed, "Random seed for synthetic data");
  app.add_option("--threads", g.threads, "Worker threads for sweeps (0 = all cores)");

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit one S21 trace");
  fit->add_option("trace", fit_args.trace, "Trace CSV")->required();
  fit->add_option("--attenuation-db", fit_args.attenuation_db, "Line attenuation, overrides sidecar and config");
  fit->add_option("--power-dbm", fit_args.power_dbm, "Drive power, overrides the sidecar");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Fit every trace of a power sweep directory");
  sweep->add_option("dir", sweep_args.dir, "Directory of <name>.csv traces with <name>.csv.meta sidecars")->required();
  sweep->add_option("--attenuation-db", sweep_args.attenuation_db, "Line attenuation for every trace");
  sweep->add_option("--curve", sweep_args.curve, "Qi versus photon number CSV output");
  sweep->add_option("--single-photon-cutoff", sweep_args.single_photon_cutoff,
                    "Photon number below which Qi enters qi_single_photon");

  std::string regress_path;
  auto* regress = app.add_subcommand("regress-sites", "Fit loss per lift-off site");
  regress->add_option("csv", regress_path, "CSV n_sites,inverse_qi[,sigma]")->required();

  ParticipationArgs part_args;
  auto* part = app.add_subcommand("participation", "Interface participations of a cross-section");
  part->add_option("geometry", part_args.geometry, "Geometry file")->required();
  part->add_option("--tolerance", part_args.tolerance, "Relative convergence tolerance in (0, 0.1]");
  part->add_option("--max-level", part_args.max_level, "Largest refinement level");
  part->add_option("--max-unknowns", part_args.max_unknowns, "Mesh size cap");
  part->add_option("--field-dump", part_args.field_dump, "Write the finest potential and field as CSV");

  std::string budget_path;
  auto* budget = app.add_subcommand("budget", "Evaluate a loss budget");
  budget->add_option("budget", budget_path, "Budget file")->required();

  RatioArgs ratio_args;
  auto* ratio = app.add_subcommand("ratio", "Voltage ratio and site/qubit participation equivalence");
  ratio->add_option("--l-qubit-m", ratio_args.l_qubit_m, "Qubit capacitor length");
  ratio->add_option("--l-resonator-m", ratio_args.l_resonator_m, "Resonator length");
  ratio->add_option("--sites", ratio_args.sites, "Lift-off sites on the resonator");
  ratio->add_option("--electrodes", ratio_args.electrodes, "Junction electrodes on the qubit (SQUID: 2)");
  ratio->add_option("--qubit-capacitance", ratio_args.qubit_capacitance, "Capacitance label of the qubit");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Write a synthetic trace (uses --seed)");
  synth->add_option("--f0-hz", synth_args.f0_hz);
  synth->add_option("--qi", synth_args.qi);
  synth->add_option("--qc-star", synth_args.qc_star);
  synth->add_option("--phi-rad", synth_args.phi);
  synth->add_option("--env-amplitude", synth_args.env_amplitude);
  synth->add_option("--env-phase-rad", synth_args.env_phase);
  synth->add_option("--env-delay-s", synth_args.env_delay);
  synth->add_option("--noise", synth_args.noise, "Gaussian sigma per quadrature");
  synth->add_option("--points", synth_args.points);
  synth->add_option("--span-linewidths", synth_args.span_linewidths);
  synth->add_option("--power-dbm", synth_args.power_dbm, "Written to the sidecar with --out");
  synth->add_option("--label", synth_args.label, "Written to the sidecar with --out");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }
  g.seed_given = seed_opt->count() > 0;

  std::string name = app.get_subcommands().front()->get_name();
  Report report(name, g);
  try {
    if (fit->parsed()) cmd_fit(fit_args, g, report);
    else if (sweep->parsed()) cmd_sweep(sweep_args, g, report);
    else if (regress->parsed()) cmd_regress(regress_path, g, report);
    else if (part->parsed()) cmd_participation(part_args, g, report);
    else if (budget->parsed()) cmd_budget(budget_path, g, report);
    else if (ratio->parsed()) cmd_ratio(ratio_args, g, report);
    else if (synth->parsed()) {
      cmd_synth(synth_args, g, out);
      return kOk;
    }
    report.emit(g, out, err);
    return kOk;
  } catch (const CommandFailure& e) {
    err << "error: " << e.what() << '\n';
    if (e.code == kFitFailure || e.code == kSolverNonConvergence) {
      try {
        report.emit(g, out, err);
      } catch (...) {
      }
    }
    return e.code;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
}

}  // namespace tlsloss::cli
