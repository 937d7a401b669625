#include "opcomp/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <numbers>
#include <sstream>
#include <thread>

#include "opcomp/error.hpp"
#include "opcomp/parallel.hpp"

namespace opcomp::cli {

namespace {

using Defaults = std::map<std::string, std::string>;

// outdir and threads change where and how fast, never what
bool affects_results(const std::string& key) { return key != "outdir" && key != "threads"; }

Defaults with_common(Defaults d) {
  d.emplace("outdir", "opcomp-out");
  d.emplace("threads", "auto");
  return d;
}

const std::map<std::string, Defaults>& all_defaults() {
  static const std::map<std::string, Defaults> table{
      {"compress-kernel", with_common({{"rho", "1"},
                                       {"sigma", "1"},
                                       {"grid", "4096"},
                                       {"fem-cells", "4096"},
                                       {"levels", "0..7"},
                                       {"schedule", "global"},
                                       {"eigen-check", "false"},
                                       {"global-factor", "4"},
                                       {"slope-lower", "1.7"},
                                       {"slope-upper", "2.3"},
                                       {"linear-upper", "1.5"},
                                       {"linear-finest", "3"}})},
      {"msfem-beam", with_common({{"seed", "7"},
                                  {"load-seed", "8"},
                                  {"phi-degree", "1"},
                                  {"levels", "3..6"},
                                  {"fine", "512"},
                                  {"schedule", "global"},
                                  {"slope-lower", "auto"},
                                  {"slope-upper", "auto"}})},
      {"decay-plate", with_common({{"problem", "plate-2d"},
                                   {"seed", "11"},
                                   {"coarse", "8"},
                                   {"fine", "32"},
                                   {"r2-min", "0.9"},
                                   {"monotone", "true"}})},
      {"scaling-constant", with_common({{"k", "1"},
                                        {"s", "1"},
                                        {"d", "1"},
                                        {"delta", "1"},
                                        {"shape", "ball"},
                                        {"resolution", "4096"},
                                        {"rings", "64"},
                                        {"tolerance", "auto"}})},
      {"poincare-rates", with_common({{"pairs", "1:0,2:0,2:1"}, {"levels", "3..6"}, {"tolerance", "0.2"}})},
      {"basis-export", with_common({{"problem", "beam-1d"},
                                    {"seed", "7"},
                                    {"coarse", "auto"},
                                    {"k", "auto"},
                                    {"fine", "auto"},
                                    {"schedule", "global"},
                                    {"samples", "auto"}})},
  };
  return table;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) return parts;
    start = pos + 1;
  }
}

template <typename T>
T parse_number(std::string_view text, const std::string& what) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty())
    throw Error(ErrorKind::InvalidArgument, what + ": cannot parse '" + std::string(text) + "' as a number");
  return value;
}

std::string number_text(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------- outputs

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct Plot {
  std::string name;
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool logx = true;
  bool logy = true;
  std::vector<Series> series;
};

struct Outcome {
  StudyReport report;
  std::function<void(std::ostream&, const std::string&)> write_csv;
  std::vector<Plot> plots;
  std::vector<std::pair<std::string, std::string>> extra_files;  // name, content
  std::vector<std::string> lines;                                // extra console output
};

std::string file_stem(std::string_view label) {
  std::string out;
  for (char c : label) out += std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ? c : '_';
  return out;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_svg(std::ostream& out, const Plot& plot) {
  constexpr double W = 640, H = 420, left = 80, right = 170, top = 40, bottom = 60;
  auto tx = [&](double v) { return plot.logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return plot.logy ? std::log10(v) : v; };
  auto usable = [&](const std::pair<double, double>& p) {
    return std::isfinite(p.first) && std::isfinite(p.second) && (!plot.logx || p.first > 0) &&
           (!plot.logy || p.second > 0);
  };
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const Series& s : plot.series)
    for (const auto& p : s.points)
      if (usable(p)) {
        x0 = std::min(x0, tx(p.first));
        x1 = std::max(x1, tx(p.first));
        y0 = std::min(y0, ty(p.second));
        y1 = std::max(y1, ty(p.second));
      }
  if (!(x0 <= x1)) x0 = 0, x1 = 1;
  if (!(y0 <= y1)) y0 = 0, y1 = 1;
  if (plot.logx) x0 = std::floor(x0), x1 = std::ceil(x1);
  if (plot.logy) y0 = std::floor(y0), y1 = std::ceil(y1);
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double v) { return left + (tx(v) - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return top + ph - (ty(v) - y0) / (y1 - y0) * ph; };
  auto label = [](double t, bool log) {
    std::ostringstream s;
    if (log) {
      s << "1e" << static_cast<int>(std::lround(t));
    } else {
      s << std::setprecision(3) << t;
    }
    return s.str();
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(plot.title) << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  auto ticks = [](double a, double b, bool log) {
    std::vector<double> t;
    if (log) {
      const int step = std::max(1, static_cast<int>(std::ceil((b - a) / 8)));
      for (double v = a; v <= b + 1e-9; v += step) t.push_back(v);
    } else {
      for (int j = 0; j <= 5; ++j) t.push_back(a + (b - a) * j / 5);
    }
    return t;
  };
  for (double t : ticks(x0, x1, plot.logx)) {
    const double x = left + (t - x0) / (x1 - x0) * pw;
    out << "<line x1=\"" << x << "\" y1=\"" << top + ph << "\" x2=\"" << x << "\" y2=\"" << top + ph + 5
        << "\" stroke=\"black\"/><text x=\"" << x << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
        << label(t, plot.logx) << "</text>\n";
  }
  for (double t : ticks(y0, y1, plot.logy)) {
    const double y = top + ph - (t - y0) / (y1 - y0) * ph;
    out << "<line x1=\"" << left - 5 << "\" y1=\"" << y << "\" x2=\"" << left << "\" y2=\"" << y
        << "\" stroke=\"black\"/><text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
        << label(t, plot.logy) << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">"
      << xml_escape(plot.xlabel) << "</text>\n";
  out << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << top + ph / 2 << ")\">" << xml_escape(plot.ylabel) << "</text>\n";

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const Series& s = plot.series[k];
    const char* color = palette[k % std::size(palette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : s.points)
      if (usable(p)) out << px(p.first) << ',' << py(p.second) << ' ';
    out << "\"/>\n";
    if (s.points.size() <= 40)
      for (const auto& p : s.points)
        if (usable(p))
          out << "<circle cx=\"" << px(p.first) << "\" cy=\"" << py(p.second) << "\" r=\"3\" fill=\"" << color
              << "\"/>\n";
    const double ly = top + 10 + 18 * static_cast<double>(k);
    out << "<line x1=\"" << W - right + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - right + 32 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\"" << W - right + 38 << "\" y=\"" << ly + 4
        << "\">" << xml_escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
}

void write_dat(std::ostream& out, const Series& s, const Plot& plot, const std::string& hash) {
  out << "# config_hash " << hash << "\n# " << plot.xlabel << " | " << plot.ylabel << " (" << s.label << ")\n";
  out.precision(17);
  for (const auto& [x, y] : s.points) out << x << ' ' << y << '\n';
}

Plot study_plot(const StudyReport& report, const std::string& name, const std::string& title,
                const std::string& ylabel, bool with_reference) {
  Plot plot{name, title, "h", ylabel, true, true, {}};
  std::vector<std::string> order;
  for (const StudyRow& r : report.rows)
    if (std::find(order.begin(), order.end(), r.series) == order.end()) order.push_back(r.series);
  for (const std::string& s : order) {
    Series series{s, {}};
    for (const StudyRow& r : report.series(s))
      if (r.status == "ok") series.points.emplace_back(r.h, r.value);
    plot.series.push_back(std::move(series));
  }
  if (with_reference && !order.empty()) {
    Series ref{"lambda_{n+1}", {}};
    for (const StudyRow& r : report.series(order.front()))
      if (std::isfinite(r.reference)) ref.points.emplace_back(r.h, r.reference);
    if (!ref.points.empty()) plot.series.push_back(std::move(ref));
  }
  return plot;
}

Outcome report_outcome(StudyReport report) {
  Outcome o;
  o.report = std::move(report);
  const StudyReport* r = &o.report;
  o.write_csv = [r](std::ostream& out, const std::string& hash) { write_report_csv(out, *r, hash); };
  return o;
}

// ---------------------------------------------------------------- subcommands

Outcome run_compress_kernel(const ExperimentConfig& cfg) {
  KernelStudyConfig kc;
  kc.rho = cfg.number("rho");
  kc.sigma = cfg.number("sigma");
  kc.grid_points = cfg.integer("grid");
  kc.fem_cells = cfg.integer("fem-cells");
  kc.levels = cfg.levels("levels");
  kc.eigen_check = cfg.flag("eigen-check");
  kc.global_factor = cfg.number("global-factor");
  kc.log2_lower = cfg.number("slope-lower");
  kc.log2_upper = cfg.number("slope-upper");
  kc.linear_upper = cfg.number("linear-upper");
  kc.linear_finest = cfg.integer("linear-finest");
  kc.global = false;
  for (const LocalizationChoice& c : parse_schedules(cfg.get("schedule"))) {
    if (c.localized) {
      kc.schedules.push_back(c);
    } else {
      kc.global = true;
    }
  }
  Outcome o = report_outcome(kernel_compression_study(kc));
  o.plots.push_back(study_plot(o.report, "compression_error", "Operator compression error", "E_oc", true));
  return o;
}

Outcome run_msfem_beam(const ExperimentConfig& cfg) {
  ConvergenceConfig cc;
  cc.problem = ProblemTag::Beam1d;
  cc.field_seed = cfg.seed("seed");
  cc.load_seed = cfg.seed("load-seed");
  const Index degree = cfg.integer("phi-degree");
  require(degree == 0 || degree == 1, "phi-degree must be 0 or 1");
  cc.k_phi = static_cast<int>(degree) + 1;
  cc.levels = cfg.levels("levels");
  cc.fine_m = cfg.integer("fine");
  const auto schedules = parse_schedules(cfg.get("schedule"));
  require(schedules.size() == 1, "msfem-beam takes exactly one schedule");
  cc.basis = schedules.front();
  // quadratic for piecewise-linear Phi, linear for piecewise constants
  const double order = static_cast<double>(cc.k_phi);
  cc.slope_lower = cfg.get("slope-lower") == "auto" ? order - 0.3 : cfg.number("slope-lower");
  cc.slope_upper = cfg.get("slope-upper") == "auto" ? order + 0.3 : cfg.number("slope-upper");
  Outcome o = report_outcome(convergence_study(cc));
  o.plots.push_back(study_plot(o.report, "energy_error", "MsFEM energy error", "||u - u_h||_A", false));
  return o;
}

Outcome run_decay(const ExperimentConfig& cfg) {
  DecayConfig dc;
  dc.problem = parse_problem_tag(cfg.get("problem"));
  dc.field_seed = cfg.seed("seed");
  dc.coarse = cfg.integer("coarse");
  dc.fine = cfg.integer("fine");
  dc.r_squared_min = cfg.number("r2-min");
  dc.require_monotone = cfg.flag("monotone");
  auto study = std::make_shared<DecayStudy>(decay_study(dc));
  Outcome o;
  o.report = study->report;
  o.write_csv = [study](std::ostream& out, const std::string& hash) {
    out << "config_hash,patch,member,radius,tail\n";
    out.precision(17);
    for (std::size_t q = 0; q < study->profiles.size(); ++q) {
      const DecayProfile& p = study->profiles[q];
      for (std::size_t j = 0; j < p.radii.size(); ++j)
        out << hash << ',' << study->patch << ',' << q << ',' << p.radii[j] << ',' << p.tails[j] << '\n';
    }
  };
  Plot plot{"tails", "Energy outside B(x_i, r)", "r", "tail energy", false, true, {}};
  for (std::size_t q = 0; q < study->profiles.size(); ++q) {
    Series s{"q=" + std::to_string(q), {}};
    const DecayProfile& p = study->profiles[q];
    for (std::size_t j = 0; j < p.radii.size(); ++j) s.points.emplace_back(p.radii[j], p.tails[j]);
    plot.series.push_back(std::move(s));
    std::ostringstream line;
    line << "member q=" << q << ": decay length l = " << p.decay_length << " (r^2 " << p.r_squared << ", "
         << p.fitted_points << " points)";
    o.lines.push_back(line.str());
  }
  o.plots.push_back(std::move(plot));
  return o;
}

Outcome run_scaling_constant(const ExperimentConfig& cfg) {
  ScalingConfig sc;
  sc.k = static_cast<int>(cfg.integer("k"));
  sc.s = static_cast<int>(cfg.integer("s"));
  sc.d = static_cast<int>(cfg.integer("d"));
  sc.delta = cfg.number("delta");
  const std::string& shape = cfg.get("shape");
  require(shape == "ball" || shape == "cell", "shape must be ball or cell");
  sc.shape = shape == "ball" ? ScalingShape::Ball : ScalingShape::UnitCell;
  sc.resolution = cfg.integer("resolution");
  sc.rings = cfg.integer("rings");
  // the polygonal disc carries a slightly larger discretization error
  const double tolerance = cfg.get("tolerance") != "auto"                          ? cfg.number("tolerance")
                           : (sc.d == 2 && sc.shape == ScalingShape::Ball) ? 0.02
                                                                           : 0.01;
  auto result = std::make_shared<ScalingResult>(scaling_constant(sc));
  Outcome o;
  o.report.kind = "scaling-constant";
  o.report.parameters["unknowns"] = std::to_string(result->unknowns);
  const double rel = std::abs(result->value - result->reference) / result->reference;
  std::ostringstream line;
  line << std::setprecision(8) << "C(k=" << sc.k << ", s=" << sc.s << ", d=" << sc.d << ", delta=" << sc.delta
       << ") = " << result->value;
  if (std::isfinite(result->reference)) {
    line << "  closed form " << result->reference << "  relative error " << std::setprecision(3) << rel;
    o.report.add_check("relative error against the closed form", rel, tolerance, rel <= tolerance);
  } else {
    line << "  (no closed form for this case)";
  }
  o.lines.push_back(line.str());
  const std::string shape_name = shape;
  o.write_csv = [result, sc, shape_name](std::ostream& out, const std::string& hash) {
    out << "config_hash,k,s,d,shape,delta,unknowns,value,reference\n";
    out << hash << ',' << sc.k << ',' << sc.s << ',' << sc.d << ',' << shape_name << ',' << number_text(sc.delta)
        << ',' << result->unknowns << ',' << number_text(result->value) << ','
        << (std::isfinite(result->reference) ? number_text(result->reference) : "") << '\n';
  };
  return o;
}

Outcome run_poincare_rates(const ExperimentConfig& cfg) {
  const std::vector<Index> levels = cfg.levels("levels");
  const double tolerance = cfg.number("tolerance");
  const FunctionJet u = [](const Point& x, int dx, int) {
    const double w = 2.0 * std::numbers::pi;
    return std::pow(w, dx) * std::sin(w * x.x() + dx * std::numbers::pi / 2);
  };
  StudyReport report;
  report.kind = "poincare-rates";
  report.parameters["function"] = "sin(2 pi x)";
  for (const std::string& pair : split(cfg.get("pairs"), ',')) {
    const auto kp = split(pair, ':');
    require(kp.size() == 2, "pairs are written k:p, got '" + pair + "'");
    const int k = parse_number<int>(kp[0], "pairs"), p = parse_number<int>(kp[1], "pairs");
    require(k >= 1 && p >= 0 && p < k, "pairs need k >= 1 and 0 <= p < k");
    const ProjectionRateResult r = projection_error_rate(k, p, u, levels);
    const std::string series = "k" + std::to_string(k) + "p" + std::to_string(p);
    for (std::size_t j = 0; j < r.levels.size(); ++j)
      report.rows.push_back({series, r.levels[j], r.h[j], r.levels[j] * k, r.errors[j], NAN, "ok"});
    fit_series(report, series, k - p - tolerance, k - p + tolerance);
  }
  Outcome o = report_outcome(std::move(report));
  o.plots.push_back(study_plot(o.report, "projection_error", "Broken projection error", "|u - Pi u|_p", false));
  return o;
}

Outcome run_basis_export(const ExperimentConfig& cfg) {
  const ProblemTag tag = parse_problem_tag(cfg.get("problem"));
  require(tag != ProblemTag::Custom, "basis-export needs robin-1d, beam-1d or plate-2d");
  const bool plate = tag == ProblemTag::Plate2d;
  auto pick = [&](const std::string& key, Index robin, Index beam, Index plate_value) {
    if (cfg.get(key) != "auto") return cfg.integer(key);
    return tag == ProblemTag::Robin1d ? robin : (plate ? plate_value : beam);
  };
  const Index coarse = pick("coarse", 64, 64, 8);
  const int k = static_cast<int>(pick("k", 1, 2, 2));
  const Index fine = pick("fine", 4096, 512, 32);
  const Index samples = pick("samples", 1025, 1025, 65);
  require(samples >= 2, "samples must be at least 2");

  std::optional<CoefficientField> field;
  if (tag == ProblemTag::Beam1d) field = sample_flexural_coefficient(cfg.seed("seed"));
  if (plate) field = sample_plate_coefficients(cfg.seed("seed"));
  auto fs = std::make_shared<FineSpace>(build_fine_space(tag, field, fine));
  auto partition = std::make_shared<const Partition>(plate ? 2 : 1, coarse);
  auto basis = std::make_shared<PolyBasis>(partition, k);
  const auto schedules = parse_schedules(cfg.get("schedule"));
  require(schedules.size() == 1, "basis-export takes exactly one schedule");
  const SparseMatrix C = assemble_constraint_matrix(*fs, *basis);
  const BasisFamily family =
      schedules.front().localized
          ? solve_localized_family(*fs, *basis, C,
                                   radius_from_schedule(partition->h(), schedules.front().c, schedules.front().schedule))
          : solve_global_basis(*fs, *basis, C);
  const Index c = coarse / 2 - 1;
  const Index patch = plate ? partition->patch_index(c, c) : c;
  const Index Q = basis->per_patch();
  auto members = std::make_shared<Eigen::MatrixXd>(family.psi.middleCols(patch * Q, Q));

  Outcome o;
  o.report.kind = "basis-export";
  o.report.parameters["patch"] = std::to_string(patch);
  o.report.parameters["k"] = std::to_string(k);
  o.report.parameters["coarse"] = std::to_string(coarse);
  o.report.parameters["fine"] = std::to_string(fine);
  o.report.add_check("constraint residual", family.max_constraint_residual, 1e-9,
                     family.max_constraint_residual <= 1e-9);

  // sample psi and phi of the exported patch on a uniform grid
  std::vector<Point> points;
  for (Index j = 0; j < (plate ? samples : 1); ++j)
    for (Index i = 0; i < samples; ++i)
      points.emplace_back(static_cast<double>(i) / (samples - 1), plate ? static_cast<double>(j) / (samples - 1) : 0.0);
  auto values = std::make_shared<Eigen::MatrixXd>(static_cast<Index>(points.size()), 2 * Q);
  const Patch& cell = partition->patch(patch);
  for (std::size_t a = 0; a < points.size(); ++a) {
    const Point& x = points[a];
    const bool inside = (x.array() >= cell.lower.array()).all() && (x.array() <= cell.upper.array()).all();
    const Eigen::VectorXd phi = inside ? basis->evaluate(patch, x) : Eigen::VectorXd::Zero(Q);
    for (Index q = 0; q < Q; ++q) {
      (*values)(static_cast<Index>(a), q) = fs->evaluate(members->col(q), x);
      (*values)(static_cast<Index>(a), Q + q) = phi(q);
    }
  }
  auto shared_points = std::make_shared<std::vector<Point>>(std::move(points));
  o.write_csv = [shared_points, values, Q, patch, plate](std::ostream& out, const std::string& hash) {
    out << "config_hash,function,patch,member,x,y,value\n";
    out.precision(17);
    for (Index col = 0; col < 2 * Q; ++col)
      for (std::size_t a = 0; a < shared_points->size(); ++a)
        out << hash << ',' << (col < Q ? "psi" : "phi") << ',' << patch << ',' << col % Q << ','
            << (*shared_points)[a].x() << ',' << (plate ? (*shared_points)[a].y() : 0.0) << ','
            << (*values)(static_cast<Index>(a), col) << '\n';
  };
  if (plate) {
    for (Index q = 0; q < Q; ++q) {
      std::ostringstream dat;
      dat.precision(17);
      dat << "# x y psi (gnuplot splot blocks)\n";
      for (std::size_t a = 0; a < shared_points->size(); ++a) {
        dat << (*shared_points)[a].x() << ' ' << (*shared_points)[a].y() << ' ' << (*values)(static_cast<Index>(a), q)
            << '\n';
        if ((a + 1) % static_cast<std::size_t>(samples) == 0) dat << '\n';
      }
      o.extra_files.emplace_back("psi_" + std::to_string(q) + ".dat", dat.str());
    }
  } else {
    Plot psi{"psi", "Basis functions of patch " + std::to_string(patch), "x", "psi", false, false, {}};
    Plot logpsi{"psi_log", "|psi| in log scale", "x", "|psi|", false, true, {}};
    Plot phi{"phi", "Polynomials of patch " + std::to_string(patch), "x", "phi", false, false, {}};
    for (Index q = 0; q < Q; ++q) {
      const std::string label = "q=" + std::to_string(q);
      Series s{label, {}}, l{label, {}}, p{label, {}};
      for (std::size_t a = 0; a < shared_points->size(); ++a) {
        const double x = (*shared_points)[a].x();
        s.points.emplace_back(x, (*values)(static_cast<Index>(a), q));
        l.points.emplace_back(x, std::abs((*values)(static_cast<Index>(a), q)));
        p.points.emplace_back(x, (*values)(static_cast<Index>(a), Q + q));
      }
      psi.series.push_back(std::move(s));
      logpsi.series.push_back(std::move(l));
      phi.series.push_back(std::move(p));
    }
    o.plots = {std::move(psi), std::move(logpsi), std::move(phi)};
  }
  return o;
}

Outcome dispatch(const ExperimentConfig& cfg) {
  const std::string& s = cfg.subcommand;
  if (s == "compress-kernel") return run_compress_kernel(cfg);
  if (s == "msfem-beam") return run_msfem_beam(cfg);
  if (s == "decay-plate") return run_decay(cfg);
  if (s == "scaling-constant") return run_scaling_constant(cfg);
  if (s == "poincare-rates") return run_poincare_rates(cfg);
  if (s == "basis-export") return run_basis_export(cfg);
  throw Error(ErrorKind::InvalidArgument, "unknown subcommand " + s);
}

int resolve_threads(const ExperimentConfig& cfg) {
  std::string text = cfg.get("threads");
  if (text == "auto") {
    const char* env = std::getenv("OPCOMP_THREADS");
    if (env != nullptr && *env != '\0') {
      text = env;
    } else {
      return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    }
  }
  const int n = parse_number<int>(trim(text), "threads");
  require(n >= 1, "threads must be at least 1");
  return n;
}

nlohmann::json summary_json(const ExperimentConfig& cfg, const Outcome& o, const std::string& hash) {
  using nlohmann::json;
  json j;
  j["subcommand"] = cfg.subcommand;
  j["config_hash"] = hash;
  for (const auto& [key, s] : cfg.settings) {
    json entry{{"value", s.value}, {"source", s.source}};
    if (s.file_value) entry["file_value"] = *s.file_value;
    j["config"][key] = entry;
  }
  j["parameters"] = o.report.parameters;
  j["slopes"] = json::array();
  for (const SlopeSummary& s : o.report.slopes) {
    j["slopes"].push_back({{"series", s.series},
                           {"slope", s.slope},
                           {"r_squared", s.r_squared},
                           {"points", s.points},
                           {"lower", std::isfinite(s.lower) ? json(s.lower) : json(nullptr)},
                           {"upper", std::isfinite(s.upper) ? json(s.upper) : json(nullptr)},
                           {"passed", s.passed()}});
  }
  j["checks"] = json::array();
  for (const StudyCheck& c : o.report.checks)
    j["checks"].push_back({{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"passed", c.passed}});
  j["passed"] = o.report.passed();
  j["runtime_seconds"] = o.report.runtime_seconds;
  return j;
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path.string());
  body(out);
  if (!out) throw Error(ErrorKind::InvalidArgument, "failed while writing " + path.string());
}

int execute(const ExperimentConfig& cfg, std::ostream& out) {
  set_thread_limit(resolve_threads(cfg));
  const std::string hash = cfg.hash();
  const std::filesystem::path dir = std::filesystem::path(cfg.get("outdir")) / cfg.subcommand / hash;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::InvalidArgument, "cannot create output directory " + dir.string() + ": " + ec.message());
  // echoing the config first doubles as the writability check
  write_file(dir / "config.ini", [&](std::ostream& o) { cfg.write_ini(o); });

  const Outcome outcome = dispatch(cfg);
  write_file(dir / "report.csv", [&](std::ostream& o) { outcome.write_csv(o, hash); });
  write_file(dir / "summary.json", [&](std::ostream& o) { o << summary_json(cfg, outcome, hash).dump(2) << '\n'; });
  for (const Plot& plot : outcome.plots) {
    write_file(dir / (plot.name + ".svg"), [&](std::ostream& o) { write_svg(o, plot); });
    for (const Series& s : plot.series)
      write_file(dir / (plot.name + "_" + file_stem(s.label) + ".dat"), [&](std::ostream& o) { write_dat(o, s, plot, hash); });
  }
  for (const auto& [name, content] : outcome.extra_files)
    write_file(dir / name, [&](std::ostream& o) { o << content; });

  const StudyReport& r = outcome.report;
  out << cfg.subcommand << " [" << hash << "]\n";
  for (const std::string& line : outcome.lines) out << "  " << line << '\n';
  for (const StudyRow& row : r.rows) {
    out << "  " << std::left << std::setw(14) << row.series << " m=" << std::setw(4) << row.m << " value "
        << std::setprecision(6) << row.value;
    if (std::isfinite(row.reference)) out << "  reference " << row.reference;
    if (row.status != "ok") out << "  (" << row.status << ")";
    out << '\n';
  }
  for (const SlopeSummary& s : r.slopes) {
    out << "  slope " << s.series << " = " << std::setprecision(4) << s.slope << " (r^2 " << s.r_squared
        << ", band [" << s.lower << ", " << s.upper << "]) " << (s.passed() ? "PASS" : "FAIL") << '\n';
  }
  for (const StudyCheck& c : r.checks) {
    out << "  " << c.name << ": " << std::setprecision(6) << c.value << " (threshold " << c.threshold << ") "
        << (c.passed ? "PASS" : "FAIL") << '\n';
  }
  out << (r.passed() ? "PASS" : "FAIL") << "  -> " << dir.string() << '\n';
  return r.passed() ? kExitOk : kExitAssertion;
}

}  // namespace

// ---------------------------------------------------------------- config

const std::string& ExperimentConfig::get(const std::string& key) const {
  const auto it = settings.find(key);
  if (it == settings.end()) throw Error(ErrorKind::InvalidArgument, "no setting named " + key);
  return it->second.value;
}

double ExperimentConfig::number(const std::string& key) const { return parse_number<double>(get(key), key); }

Index ExperimentConfig::integer(const std::string& key) const {
  const auto v = parse_number<long long>(get(key), key);
  require(v >= 0, key + " must be a non-negative integer");
  return static_cast<Index>(v);
}

std::uint64_t ExperimentConfig::seed(const std::string& key) const {
  return parse_number<std::uint64_t>(get(key), key);
}

bool ExperimentConfig::flag(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorKind::InvalidArgument, key + ": expected true or false, got '" + v + "'");
}

std::vector<Index> ExperimentConfig::levels(const std::string& key) const { return parse_levels(get(key)); }

std::string ExperimentConfig::hash() const {
  std::string canonical = subcommand + '\n';
  for (const auto& [key, s] : settings)
    if (affects_results(key)) canonical += key + '=' + s.value + '\n';
  return fnv1a_hex(canonical);
}

void ExperimentConfig::write_ini(std::ostream& out) const {
  out << "# resolved configuration, hash " << hash() << "\n[" << subcommand << "]\n";
  for (const auto& [key, s] : settings) {
    if (s.file_value) out << "# file value: " << key << " = " << *s.file_value << '\n';
    out << key << " = " << s.value << "  # " << s.source << '\n';
  }
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"compress-kernel", "msfem-beam",     "decay-plate",
                                              "scaling-constant", "poincare-rates", "basis-export"};
  return names;
}

const std::map<std::string, std::string>& default_settings(const std::string& subcommand) {
  const auto& table = all_defaults();
  const auto it = table.find(subcommand);
  if (it == table.end()) throw Error(ErrorKind::InvalidArgument, "unknown subcommand " + subcommand);
  return it->second;
}

IniData parse_ini(std::istream& in) {
  IniData data;
  data[""];
  std::string section, line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find_first_of("#;");
    const std::string text = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']')
        throw Error(ErrorKind::InvalidArgument, "config line " + std::to_string(number) + ": unterminated section");
      section = trim(std::string_view(text).substr(1, text.size() - 2));
      data[section];
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::InvalidArgument, "config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(std::string_view(text).substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::InvalidArgument, "config line " + std::to_string(number) + ": empty key");
    data[section][key] = trim(std::string_view(text).substr(eq + 1));
  }
  return data;
}

ExperimentConfig load_config(const std::string& subcommand, const std::optional<std::filesystem::path>& path,
                             const std::map<std::string, std::string>& flags) {
  const Defaults& defaults = default_settings(subcommand);
  ExperimentConfig cfg;
  cfg.subcommand = subcommand;
  for (const auto& [key, value] : defaults) cfg.settings[key] = Setting{value, "default", std::nullopt};

  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot read config file " + path->string());
    const IniData data = parse_ini(in);
    std::vector<std::string> unknown;
    for (const auto& [section, keys] : data) {
      const std::string owner = section.empty() ? subcommand : section;
      const auto& table = all_defaults();
      const auto known = table.find(owner);
      if (known == table.end()) {
        unknown.push_back("[" + section + "]");
        continue;
      }
      for (const auto& [key, value] : keys) {
        if (!known->second.contains(key)) {
          unknown.push_back(section.empty() ? key : section + "." + key);
        } else if (owner == subcommand) {
          cfg.settings[key] = Setting{value, "file", std::nullopt};
        }
      }
    }
    if (!unknown.empty()) {
      std::string list;
      for (const std::string& u : unknown) list += (list.empty() ? "" : ", ") + u;
      throw Error(ErrorKind::InvalidArgument, "unknown config keys: " + list);
    }
  }
  for (const auto& [key, value] : flags) {
    if (!defaults.contains(key)) throw Error(ErrorKind::InvalidArgument, "unknown setting --" + key);
    Setting& s = cfg.settings[key];
    if (s.source == "file" && s.value != value) s.file_value = s.value;
    s.value = value;
    s.source = "flag";
  }
  return cfg;
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

std::vector<Index> parse_levels(std::string_view text) {
  std::vector<int> exponents;
  const std::string t = trim(text);
  const auto dots = t.find("..");
  if (dots != std::string::npos) {
    const int a = parse_number<int>(trim(std::string_view(t).substr(0, dots)), "levels");
    const int b = parse_number<int>(trim(std::string_view(t).substr(dots + 2)), "levels");
    require(a <= b, "levels range a..b needs a <= b");
    for (int e = a; e <= b; ++e) exponents.push_back(e);
  } else {
    for (const std::string& part : split(t, ',')) exponents.push_back(parse_number<int>(part, "levels"));
  }
  std::vector<Index> out;
  for (int e : exponents) {
    require(e >= 0 && e <= 20, "level exponents must lie in 0..20");
    out.push_back(Index{1} << e);
  }
  return out;
}

std::vector<LocalizationChoice> parse_schedules(std::string_view text) {
  std::vector<LocalizationChoice> out;
  for (const std::string& part : split(text, ',')) {
    if (part == "global") {
      out.push_back({});
      continue;
    }
    const auto colon = part.find(':');
    require(colon != std::string::npos, "schedule '" + part + "' is not global, log2:c or linear:c");
    const std::string kind = part.substr(0, colon);
    require(kind == "log2" || kind == "linear", "schedule kind must be log2 or linear, got '" + kind + "'");
    const double c = parse_number<double>(std::string_view(part).substr(colon + 1), "schedule");
    require(c > 0, "schedule constant must be positive");
    out.push_back({true, kind == "log2" ? RadiusSchedule::Log2 : RadiusSchedule::Linear, c});
  }
  require(!out.empty(), "at least one schedule is required");
  return out;
}

// ---------------------------------------------------------------- entry

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Operator compression with localized energy-minimizing bases", "opcomp"};
  app.require_subcommand(1);
  struct Bound {
    CLI::App* app = nullptr;
    std::string config;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
  };
  std::map<std::string, Bound> bound;
  static const std::map<std::string, std::string> descriptions{
      {"compress-kernel", "compression error of the exponential kernel against the eigen baseline"},
      {"msfem-beam", "MsFEM convergence for the clamped beam with a rough coefficient"},
      {"decay-plate", "tail-energy decay of the centre-patch basis functions"},
      {"scaling-constant", "polynomial-approximation scaling constant via a generalized eigenproblem"},
      {"poincare-rates", "projection error rates of sin(2 pi x) by piecewise polynomials"},
      {"basis-export", "sampled basis functions of the centre patch for plotting"}};
  for (const std::string& name : subcommands()) {
    Bound& b = bound[name];
    b.app = app.add_subcommand(name, descriptions.at(name));
    b.app->add_option("--config", b.config, "INI file; flags override its values");
    for (const auto& [key, def] : default_settings(name))
      b.options[key] = b.app->add_option("--" + key, b.values[key], "default: " + def);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const bool help = dynamic_cast<const CLI::CallForHelp*>(&e) != nullptr ||
                      dynamic_cast<const CLI::CallForAllHelp*>(&e) != nullptr;
    app.exit(e, out, err);
    return help ? kExitOk : kExitUsage;
  }

  try {
    for (auto& [name, b] : bound) {
      if (b.app->parsed()) {
        std::map<std::string, std::string> flags;
        for (const auto& [key, option] : b.options)
          if (option->count() > 0) flags[key] = b.values[key];
        std::optional<std::filesystem::path> path;
        if (!b.config.empty()) path = b.config;
        return execute(load_config(name, path, flags), out);
      }
    }
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace opcomp::cli
