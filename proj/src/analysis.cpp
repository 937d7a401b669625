#include "opcomp/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "opcomp/error.hpp"

namespace opcomp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format_number(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

// Grid values of every column of a fine-space family.
Eigen::MatrixXd sample_family(const FineSpace& fs, const Eigen::MatrixXd& psi, const std::vector<Point>& nodes) {
  Eigen::MatrixXd out(static_cast<Index>(nodes.size()), psi.cols());
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    const Index cell = fs.locate_cell(nodes[a]);
    const Eigen::VectorXd s = fs.shapes(cell, nodes[a]);
    const auto raw = fs.cell_raw(cell);
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(psi.cols());
    for (std::size_t l = 0; l < raw.size(); ++l) {
      const Index d = fs.dof(raw[l]);
      if (d >= 0) row += s(static_cast<Index>(l)) * psi.row(d);
    }
    out.row(static_cast<Index>(a)) = row;
  }
  return out;
}

BasisFamily make_family(const FineSpace& fs, const PolyBasis& basis, const SparseMatrix& C,
                        const LocalizationChoice& choice) {
  if (!choice.localized) return solve_global_basis(fs, basis, C);
  const double r = radius_from_schedule(basis.partition().h(), choice.c, choice.schedule);
  return solve_localized_family(fs, basis, C, r);
}

bool is_infeasible(const Error& e) {
  return e.kind() == ErrorKind::InfeasibleLocalization || e.kind() == ErrorKind::InvalidArgument;
}

}  // namespace

// ---------------------------------------------------------------- reports

bool StudyReport::passed() const {
  return std::all_of(slopes.begin(), slopes.end(), [](const SlopeSummary& s) { return s.passed(); }) &&
         std::all_of(checks.begin(), checks.end(), [](const StudyCheck& c) { return c.passed; });
}

std::vector<StudyRow> StudyReport::series(const std::string& name) const {
  std::vector<StudyRow> out;
  std::copy_if(rows.begin(), rows.end(), std::back_inserter(out), [&](const StudyRow& r) { return r.series == name; });
  return out;
}

void StudyReport::add_check(std::string name, double value, double threshold, bool ok) {
  checks.push_back({std::move(name), value, threshold, ok});
}

SlopeSummary fit_series(StudyReport& report, const std::string& series, double lower, double upper, Index finest) {
  std::vector<std::pair<double, double>> pts;
  for (const StudyRow& r : report.rows)
    if (r.series == series && r.status == "ok" && r.value > 0 && std::isfinite(r.value)) pts.emplace_back(r.h, r.value);
  if (finest > 0 && static_cast<Index>(pts.size()) > finest)
    pts.erase(pts.begin(), pts.end() - static_cast<std::ptrdiff_t>(finest));
  SlopeSummary s;
  s.series = series;
  s.lower = lower;
  s.upper = upper;
  s.points = static_cast<Index>(pts.size());
  try {
    const auto fit = rate_fit<double>(pts);
    s.slope = fit.slope;
    s.r_squared = fit.r_squared;
  } catch (const Error&) {
    s.slope = std::numeric_limits<double>::quiet_NaN();
    s.r_squared = std::numeric_limits<double>::quiet_NaN();
  }
  report.slopes.push_back(s);
  return s;
}

void write_report_csv(std::ostream& out, const StudyReport& report, const std::string& config_hash) {
  auto num = [](double v) { return std::isfinite(v) ? format_number(v) : std::string(); };
  out << "config_hash,study,series,m,h,n,value,reference,status\n";
  for (const StudyRow& r : report.rows) {
    out << config_hash << ',' << report.kind << ',' << r.series << ',' << r.m << ',' << num(r.h) << ',' << r.n << ','
        << num(r.value) << ',' << num(r.reference) << ',' << r.status << '\n';
  }
}

// ---------------------------------------------------------------- MsFEM

namespace {

// Cholesky pivots miss exactly dependent columns; the eigenvalue ratio does not.
Eigen::LLT<Eigen::MatrixXd> factor_stiffness(const Eigen::MatrixXd& L) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(L, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues()(0), lmax = eig.eigenvalues()(L.rows() - 1);
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (lmax > 0 && lmin > 1e-13 * lmax) llt.compute(L);
  if (!(lmax > 0 && lmin > 1e-13 * lmax) || llt.info() != Eigen::Success) {
    throw Error(ErrorKind::DegenerateBasis, "basis stiffness matrix L_n is singular (eigenvalue ratio " +
                                                std::to_string(lmax > 0 ? lmin / lmax : 0.0) + ")");
  }
  return llt;
}

}  // namespace

MsfemSolution msfem_solve(const FineSpace& fs, const BasisFamily& family, const Eigen::VectorXd& load) {
  require(load.size() == fs.size() && family.psi.rows() == fs.size(), "load or family does not match the fine space");
  const Eigen::LLT<Eigen::MatrixXd> llt = factor_stiffness(family_stiffness(fs, family));
  MsfemSolution sol;
  sol.coefficients = llt.solve(family.psi.transpose() * load);
  sol.u = family.psi * sol.coefficients;
  return sol;
}

double energy_norm(const FineSpace& fs, const Eigen::VectorXd& v) {
  return std::sqrt(std::max(0.0, v.dot(fs.energy() * v)));
}

double galerkin_optimality_gap(const FineSpace& fs, const BasisFamily& family, const MsfemSolution& uh,
                               const Eigen::VectorXd& u, int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double best = energy_norm(fs, u - uh.u);
  const double scale = std::max(uh.coefficients.cwiseAbs().maxCoeff(), 1e-300);
  double gap = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd c = uh.coefficients;
    // perturbations from tiny to O(1) relative size
    const double amplitude = scale * std::pow(10.0, -6.0 + 6.0 * t / std::max(1, trials - 1));
    for (Index j = 0; j < c.size(); ++j) c(j) += amplitude * unit(rng);
    gap = std::max(gap, best - energy_norm(fs, u - family.psi * c));
  }
  return gap;
}

std::string LocalizationChoice::label() const {
  if (!localized) return "global";
  std::ostringstream s;
  s << (schedule == RadiusSchedule::Linear ? "linear:" : "log2:") << c;
  return s.str();
}

CoefficientField sample_load(std::uint64_t seed) { return sample_flexural_coefficient(seed); }

double fem_compression_error(const FineSpace& fs, const BasisFamily& family, const LanczosOptions& options) {
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(fs.energy());
  if (ldlt.info() != Eigen::Success) throw Error(ErrorKind::NumericalFailure, "energy factorization failed");
  const SparseMatrix& M = fs.mass();
  const Eigen::LLT<Eigen::MatrixXd> llt = factor_stiffness(family_stiffness(fs, family));
  auto apply = [&](const auto& x, Eigen::VectorXd& y) {
    const Eigen::VectorXd mx = M * x;
    y = ldlt.solve(mx);
    y.noalias() -= family.psi * llt.solve(family.psi.transpose() * mx);
  };
  auto dot = [&](const auto& x, const auto& y) -> double { return x.dot(M * y); };
  const auto result = lanczos_extreme<double>(fs.size(), apply, dot, options);
  if (!result.converged) {
    throw Error(ErrorKind::NumericalFailure,
                "compression error eigen iteration did not converge (residual " + std::to_string(result.residual) + ")");
  }
  return result.largest_magnitude;
}

StudyReport convergence_study(const ConvergenceConfig& config) {
  const auto start = Clock::now();
  require(config.levels.size() >= 3, "a convergence study needs at least 3 levels");
  require(std::is_sorted(config.levels.begin(), config.levels.end()) &&
              std::adjacent_find(config.levels.begin(), config.levels.end()) == config.levels.end(),
          "study levels must strictly refine");
  require(config.fine_m >= 4 * config.levels.back(), "fine reference must be at least 4x the finest level");
  require(config.problem == ProblemTag::Beam1d || config.problem == ProblemTag::Robin1d,
          "convergence studies support beam-1d and robin-1d");

  StudyReport report;
  const bool beam = config.problem == ProblemTag::Beam1d;
  report.kind = beam ? "msfem-beam" : "robin-compression";
  report.parameters["problem"] = to_string(config.problem);
  report.parameters["k_phi"] = std::to_string(config.k_phi);
  report.parameters["fine_m"] = std::to_string(config.fine_m);
  report.parameters["basis"] = config.basis.label();
  const std::string series = "k" + std::to_string(config.k_phi) + ":" + config.basis.label();

  std::optional<CoefficientField> field;
  if (beam) {
    field = sample_flexural_coefficient(config.field_seed);
    report.parameters["field_seed"] = std::to_string(config.field_seed);
    report.parameters["load_seed"] = std::to_string(config.load_seed);
  }
  const FineSpace fs = build_fine_space(config.problem, field, config.fine_m);

  Eigen::VectorXd u, load;
  Eigen::VectorXd reference_spectrum;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  if (beam) {
    const CoefficientField f = sample_load(config.load_seed);
    load = load_vector(fs, [&f](const Point& x) { return f.scalar(x.x()); });
    ldlt.compute(fs.energy());
    if (ldlt.info() != Eigen::Success) throw Error(ErrorKind::NumericalFailure, "fine reference factorization failed");
    u = ldlt.solve(load);
  } else if (fs.size() <= 2048) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(Eigen::MatrixXd(fs.mass()),
                                                                  Eigen::MatrixXd(fs.energy()), Eigen::EigenvaluesOnly);
    reference_spectrum = eig.eigenvalues().reverse();
  }

  double worst_gap = -std::numeric_limits<double>::infinity();
  double worst_residual = 0;
  for (Index m : config.levels) {
    auto partition = std::make_shared<const Partition>(1, m);
    PolyBasis basis(partition, config.k_phi);
    StudyRow row;
    row.series = series;
    row.m = m;
    row.h = partition->h();
    row.n = basis.size();
    try {
      const SparseMatrix C = assemble_constraint_matrix(fs, basis);
      const BasisFamily family = make_family(fs, basis, C, config.basis);
      worst_residual = std::max(worst_residual, family.max_constraint_residual);
      if (beam) {
        const MsfemSolution uh = msfem_solve(fs, family, load);
        // A^{-1} of the residual avoids cancelling u against u_h
        row.value = energy_norm(fs, ldlt.solve(load - fs.energy() * uh.u));
        const double gap = galerkin_optimality_gap(fs, family, uh, u, 20, 1000 + static_cast<std::uint64_t>(m));
        worst_gap = std::max(worst_gap, gap / std::max(energy_norm(fs, u), 1e-300));
      } else {
        row.value = fem_compression_error(fs, family);
        if (row.n < reference_spectrum.size()) row.reference = reference_spectrum(row.n);
      }
    } catch (const Error& e) {
      if (!is_infeasible(e)) throw;
      row.status = "infeasible";
    }
    report.rows.push_back(row);
  }
  fit_series(report, series, config.slope_lower, config.slope_upper);
  report.add_check("constraint residual", worst_residual, 1e-9, worst_residual <= 1e-9);
  if (beam) report.add_check("galerkin optimality gap (relative)", worst_gap, 1e-12, worst_gap <= 1e-12);
  report.runtime_seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------- kernel study

StudyReport kernel_compression_study(const KernelStudyConfig& config) {
  const auto start = Clock::now();
  require(config.levels.size() >= 3, "a compression study needs at least 3 levels");
  const Index finest = *std::max_element(config.levels.begin(), config.levels.end());
  require(config.grid_points >= 4 * finest, "quadrature grid must have at least 4 points per finest patch");
  StudyReport report;
  report.kind = "compress-kernel";
  report.parameters["kernel"] = "exponential";
  report.parameters["rho"] = format_number(config.rho);
  report.parameters["sigma"] = format_number(config.sigma);
  report.parameters["grid_points"] = std::to_string(config.grid_points);
  report.parameters["fem_cells"] = std::to_string(config.fem_cells);
  report.parameters["eigen_check"] = config.eigen_check ? "true" : "false";

  const KernelOperator K =
      KernelOperator::from_kernel(exponential_kernel(config.rho, config.sigma), midpoint_grid(1, config.grid_points));
  KernelEigensystem eigen;
  if (config.eigen_check) {
    eigen = kernel_eigensystem(K);
  } else {
    eigen.values = eigen_spectrum(K);
  }
  std::optional<FineSpace> fs;
  if (!config.schedules.empty())
    fs = build_fine_space(ProblemTag::Robin1d, std::nullopt, config.fem_cells, {config.rho, config.sigma});

  double worst_global_ratio = 0, worst_eigen = 0, worst_residual = 0;
  for (Index m : config.levels) {
    auto partition = std::make_shared<const Partition>(1, m);
    PolyBasis basis(partition, 1);
    const Index n = basis.size();
    require(n < K.size(), "basis size must stay below the grid size");
    const double baseline = eigen.values(n);
    auto row_for = [&](const std::string& series) {
      StudyRow row;
      row.series = series;
      row.m = m;
      row.h = partition->h();
      row.n = n;
      row.reference = baseline;
      return row;
    };
    if (config.global) {
      StudyRow row = row_for("global");
      row.value = compression_error(K, compressed_operator(K, basis)).value;
      worst_global_ratio = std::max(worst_global_ratio, row.value / baseline);
      report.rows.push_back(row);
    }
    if (config.eigen_check) {
      StudyRow row = row_for("eigen");
      row.value = compression_error(K, eigen_compressed(K, eigen, n)).value;
      worst_eigen = std::max(worst_eigen, std::abs(row.value - baseline) / baseline);
      report.rows.push_back(row);
    }
    if (!fs) continue;
    const SparseMatrix C = assemble_constraint_matrix(*fs, basis);
    for (const LocalizationChoice& choice : config.schedules) {
      StudyRow row = row_for(choice.label());
      try {
        const BasisFamily family = make_family(*fs, basis, C, choice);
        worst_residual = std::max(worst_residual, family.max_constraint_residual);
        CompressedOperator c;
        c.psi = sample_family(*fs, family.psi, K.grid().nodes);
        const Eigen::LLT<Eigen::MatrixXd> llt = factor_stiffness(family_stiffness(*fs, family));
        c.middle = llt.solve(Eigen::MatrixXd::Identity(n, n));
        row.value = compression_error(K, c).value;
      } catch (const Error& e) {
        if (!is_infeasible(e)) throw;
        row.status = "infeasible";
      }
      report.rows.push_back(row);
    }
  }

  if (config.global) {
    fit_series(report, "global", config.log2_lower, config.log2_upper);
    report.add_check("global E / lambda_{n+1} (max over levels)", worst_global_ratio, config.global_factor,
                     worst_global_ratio <= config.global_factor);
  }
  if (config.eigen_check)
    report.add_check("eigenbasis |E - lambda_{n+1}| / lambda_{n+1}", worst_eigen, 1e-8, worst_eigen <= 1e-8);
  for (const LocalizationChoice& choice : config.schedules) {
    if (choice.schedule == RadiusSchedule::Log2) {
      fit_series(report, choice.label(), config.log2_lower, config.log2_upper);
    } else {
      fit_series(report, choice.label(), -std::numeric_limits<double>::infinity(), config.linear_upper,
                 config.linear_finest);
    }
  }
  if (fs) {
    report.add_check("localized constraint residual", worst_residual, 1e-9, worst_residual <= 1e-9);
    for (const LocalizationChoice& choice : config.schedules) {
      if (choice.schedule != RadiusSchedule::Log2 || choice.c != 2.4) continue;
      const auto rows = report.series(choice.label());
      if (rows.empty() || rows.back().status != "ok") continue;
      const double ratio = rows.back().value / rows.back().reference;
      report.add_check("log2:2.4 finest E / lambda_{n+1}", ratio, 2.0, ratio <= 2.0);
    }
  }
  report.runtime_seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------- decay

bool strictly_decreasing_tails(const DecayProfile& profile) {
  if (profile.tails.empty()) return false;
  const double floor = kTailFloor * profile.tails.front();
  for (std::size_t j = 1; j < profile.tails.size() && profile.tails[j] > floor; ++j)
    if (!(profile.tails[j] < profile.tails[j - 1])) return false;
  return true;
}

DecayStudy decay_study(const DecayConfig& config) {
  const auto start = Clock::now();
  require(config.coarse >= 2 && config.fine >= config.coarse, "decay study needs coarse >= 2 and fine >= coarse");
  std::optional<CoefficientField> field;
  int k = 2;
  int dim = 1;
  switch (config.problem) {
    case ProblemTag::Robin1d: k = 1; break;
    case ProblemTag::Beam1d: field = sample_flexural_coefficient(config.field_seed); break;
    case ProblemTag::Plate2d:
      field = sample_plate_coefficients(config.field_seed);
      dim = 2;
      break;
    default: throw Error(ErrorKind::InvalidArgument, "decay study supports robin-1d, beam-1d and plate-2d");
  }
  const FineSpace fs = build_fine_space(config.problem, field, config.fine);
  auto partition = std::make_shared<const Partition>(dim, config.coarse);
  const PolyBasis basis(partition, k);
  const BasisFamily family = solve_global_basis(fs, basis);

  DecayStudy study;
  study.report.kind = "decay";
  study.report.parameters["problem"] = to_string(config.problem);
  study.report.parameters["coarse"] = std::to_string(config.coarse);
  study.report.parameters["fine"] = std::to_string(config.fine);
  if (field) study.report.parameters["field_seed"] = std::to_string(config.field_seed);
  const Index c = config.coarse / 2 - 1;
  study.patch = dim == 2 ? partition->patch_index(c, c) : c;
  study.report.parameters["patch"] = std::to_string(study.patch);
  study.report.add_check("constraint residual", family.max_constraint_residual, 1e-9,
                         family.max_constraint_residual <= 1e-9);
  const Index Q = basis.per_patch();
  for (Index q = 0; q < Q; ++q) {
    DecayProfile profile = decay_profile(fs, family.psi.col(study.patch * Q + q), *partition, study.patch);
    const std::string member = "psi[" + std::to_string(study.patch) + "," + std::to_string(q) + "]";
    study.report.add_check(member + " fit R^2", profile.r_squared, config.r_squared_min,
                           profile.r_squared >= config.r_squared_min);
    if (config.require_monotone) {
      const bool ok = strictly_decreasing_tails(profile);
      study.report.add_check(member + " tails strictly decreasing", ok ? 1 : 0, 1, ok);
    }
    study.report.parameters[member + " decay_length"] = format_number(profile.decay_length);
    study.profiles.push_back(std::move(profile));
  }
  study.report.runtime_seconds = seconds_since(start);
  return study;
}

double cross_path_theta_difference(Index m, Index resolution, double rho, double sigma) {
  auto partition = std::make_shared<const Partition>(1, m);
  PolyBasis basis(partition, 1);
  const KernelOperator K =
      KernelOperator::from_kernel(exponential_kernel(rho, sigma), midpoint_grid(1, resolution));
  const Eigen::MatrixXd theta = theta_matrix(K, basis);
  const FineSpace fs = build_fine_space(ProblemTag::Robin1d, std::nullopt, resolution, {rho, sigma});
  const SparseMatrix C = assemble_constraint_matrix(fs, basis);
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(fs.energy());
  const Eigen::MatrixXd Cd(C);
  const Eigen::MatrixXd schur = Cd.transpose() * ldlt.solve(Cd);
  return (theta - schur).cwiseAbs().maxCoeff() / theta.cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------- scaling constant

double ball_scaling_formula(int d, double delta) {
  return 2.0 * std::sqrt(static_cast<double>(d * (d + 2))) * std::pow(delta, -1.0 - 0.5 * d);
}

namespace {

// Monomial exponents of total degree < s in d variables.
std::vector<std::array<int, 2>> monomials(int s, int d) {
  std::vector<std::array<int, 2>> out;
  for (int deg = 0; deg < s; ++deg) {
    if (d == 1) {
      out.push_back({deg, 0});
    } else {
      for (int b = 0; b <= deg; ++b) out.push_back({deg - b, b});
    }
  }
  return out;
}

double monomial(const std::array<int, 2>& e, const Point& x, const Point& c) {
  return std::pow(x.x() - c.x(), e[0]) * std::pow(x.y() - c.y(), e[1]);
}

// integral of t^n over (-a, a)
double centered_moment(int n, double a) { return n % 2 != 0 ? 0.0 : 2.0 * std::pow(a, n + 1) / (n + 1); }

// integral of x^p y^q over the disc of radius R centred at the origin
double disc_moment(int p, int q, double R) {
  if (p % 2 != 0 || q % 2 != 0) return 0.0;
  // Beta-function form: 2 Gamma((p+1)/2) Gamma((q+1)/2) / Gamma((p+q+2)/2) * R^{p+q+2} / (p+q+2)
  const double g = std::tgamma((p + 1) / 2.0) * std::tgamma((q + 1) / 2.0) / std::tgamma((p + q + 2) / 2.0);
  return 2.0 * g * std::pow(R, p + q + 2) / (p + q + 2);
}

struct DiscMesh {
  std::vector<Point> nodes;
  std::vector<std::array<Index, 3>> triangles;
  std::vector<char> boundary;
};

// Concentric rings: ring j has 6j nodes at radius j R / rings.
DiscMesh ring_mesh(Index rings, double R, const Point& center) {
  DiscMesh mesh;
  mesh.nodes.push_back(center);
  mesh.boundary.push_back(0);
  std::vector<Index> ring_start{0};
  for (Index j = 1; j <= rings; ++j) {
    ring_start.push_back(static_cast<Index>(mesh.nodes.size()));
    const Index count = 6 * j;
    for (Index t = 0; t < count; ++t) {
      const double angle = 2.0 * std::numbers::pi * t / count;
      mesh.nodes.push_back(center + (R * j / rings) * Point(std::cos(angle), std::sin(angle)));
      mesh.boundary.push_back(j == rings ? 1 : 0);
    }
  }
  for (Index t = 0; t < 6; ++t) mesh.triangles.push_back({0, 1 + t, 1 + (t + 1) % 6});
  for (Index j = 2; j <= rings; ++j) {
    const Index ni = 6 * (j - 1), no = 6 * j;
    const Index si = ring_start[static_cast<std::size_t>(j - 1)], so = ring_start[static_cast<std::size_t>(j)];
    Index a = 0, b = 0;
    // zipper by angle: advance the ring whose next node comes first
    while (a < ni || b < no) {
      const double next_inner = static_cast<double>(a + 1) / ni, next_outer = static_cast<double>(b + 1) / no;
      if (b < no && (a >= ni || next_outer <= next_inner)) {
        mesh.triangles.push_back({si + a % ni, so + b % no, so + (b + 1) % no});
        ++b;
      } else {
        mesh.triangles.push_back({si + a % ni, so + b % no, si + (a + 1) % ni});
        ++a;
      }
    }
  }
  return mesh;
}

ScalingResult disc_scaling(const ScalingConfig& config, const std::vector<std::array<int, 2>>& exps) {
  require(config.k == 1, "the disc supports only k = 1 (piecewise-linear elements are not H2-conforming)");
  require(config.rings >= 4, "disc mesh needs at least 4 rings");
  const DiscMesh mesh = ring_mesh(config.rings, 0.5 * config.delta, config.center);
  const auto n_nodes = static_cast<Index>(mesh.nodes.size());
  std::vector<Index> dof(static_cast<std::size_t>(n_nodes), -1);
  Index N = 0;
  for (Index a = 0; a < n_nodes; ++a)
    if (!mesh.boundary[static_cast<std::size_t>(a)]) dof[static_cast<std::size_t>(a)] = N++;

  const auto P = static_cast<Index>(exps.size());
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::MatrixXd loads = Eigen::MatrixXd::Zero(N, P);
  for (const auto& tri : mesh.triangles) {
    const Point& x0 = mesh.nodes[static_cast<std::size_t>(tri[0])];
    const Point& x1 = mesh.nodes[static_cast<std::size_t>(tri[1])];
    const Point& x2 = mesh.nodes[static_cast<std::size_t>(tri[2])];
    Eigen::Matrix2d J;
    J.col(0) = x1 - x0;
    J.col(1) = x2 - x0;
    const double area = 0.5 * std::abs(J.determinant());
    const Eigen::Matrix2d Jinv_t = J.inverse().transpose();
    Eigen::Matrix<double, 2, 3> grads;
    grads.col(0) = Jinv_t * Point(-1, -1);
    grads.col(1) = Jinv_t * Point(1, 0);
    grads.col(2) = Jinv_t * Point(0, 1);
    const Eigen::Matrix3d K = area * grads.transpose() * grads;
    // edge-midpoint rule (exact for quadratics) for the loads
    const std::array<Point, 3> mids{0.5 * (x0 + x1), 0.5 * (x1 + x2), 0.5 * (x2 + x0)};
    const Eigen::Matrix3d hat_at_mid = (Eigen::Matrix3d() << 0.5, 0, 0.5, 0.5, 0.5, 0, 0, 0.5, 0.5).finished();
    for (int a = 0; a < 3; ++a) {
      const Index da = dof[static_cast<std::size_t>(tri[a])];
      if (da < 0) continue;
      for (int b = 0; b < 3; ++b) {
        const Index db = dof[static_cast<std::size_t>(tri[b])];
        if (db >= 0) triplets.emplace_back(da, db, K(a, b));
      }
      for (Index p = 0; p < P; ++p)
        for (int q = 0; q < 3; ++q)
          loads(da, p) += area / 3.0 * hat_at_mid(a, q) * monomial(exps[static_cast<std::size_t>(p)], mids[q], config.center);
    }
  }
  SparseMatrix A(N, N);
  A.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw Error(ErrorKind::NumericalFailure, "disc stiffness factorization failed");
  const Eigen::MatrixXd U = ldlt.solve(loads);
  ScalingResult result;
  result.S = loads.transpose() * U;
  result.unknowns = N;
  result.M.resize(P, P);
  for (Index i = 0; i < P; ++i)
    for (Index j = 0; j < P; ++j) {
      const auto& a = exps[static_cast<std::size_t>(i)];
      const auto& b = exps[static_cast<std::size_t>(j)];
      result.M(i, j) = disc_moment(a[0] + b[0], a[1] + b[1], 0.5);
    }
  return result;
}

ScalingResult spline_scaling(const ScalingConfig& config, const std::vector<std::array<int, 2>>& exps) {
  const bool cell = config.shape == ScalingShape::UnitCell;
  const double width = cell ? 1.0 : config.delta;
  if (config.d == 2) require(config.resolution <= 512, "2D spline resolution is capped at 512 cells per axis");
  Point lower = config.center - Point(0.5 * width, 0.5 * width);
  const FineSpace fs = build_custom_space(config.d, config.k, lower, width, config.resolution);
  const auto P = static_cast<Index>(exps.size());
  Eigen::MatrixXd loads(fs.size(), P);
  for (Index p = 0; p < P; ++p) {
    const auto& e = exps[static_cast<std::size_t>(p)];
    loads.col(p) = load_vector(fs, [&](const Point& x) { return monomial(e, x, config.center); });
  }
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(fs.energy());
  if (ldlt.info() != Eigen::Success) throw Error(ErrorKind::NumericalFailure, "shape stiffness factorization failed");
  const Eigen::MatrixXd U = ldlt.solve(loads);
  ScalingResult result;
  result.S = loads.transpose() * U;
  result.unknowns = fs.size();
  result.M.resize(P, P);
  for (Index i = 0; i < P; ++i)
    for (Index j = 0; j < P; ++j) {
      const auto& a = exps[static_cast<std::size_t>(i)];
      const auto& b = exps[static_cast<std::size_t>(j)];
      result.M(i, j) = centered_moment(a[0] + b[0], 0.5) * (config.d == 2 ? centered_moment(a[1] + b[1], 0.5) : 1.0);
    }
  return result;
}

}  // namespace

ScalingResult scaling_constant(const ScalingConfig& config) {
  require(config.k == 1 || config.k == 2, "k must be 1 or 2");
  require(config.s == 1 || config.s == 2, "s must be 1 or 2");
  require(config.d == 1 || config.d == 2, "d must be 1 or 2");
  require(config.delta > 0, "delta must be positive");
  const auto exps = monomials(config.s, config.d);
  ScalingResult result = (config.shape == ScalingShape::Ball && config.d == 2) ? disc_scaling(config, exps)
                                                                                : spline_scaling(config, exps);
  result.S = 0.5 * (result.S + result.S.transpose()).eval();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(result.M, result.S, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw Error(ErrorKind::NumericalFailure, "generalized eigenproblem (M, S) failed");
  result.value = std::sqrt(eig.eigenvalues().maxCoeff());

  if (config.s == 1) {
    const double delta = config.shape == ScalingShape::Ball ? config.delta : 1.0;
    if (config.k == 1 && (config.shape == ScalingShape::Ball || config.d == 1))
      result.reference = ball_scaling_formula(config.d, delta);
    if (config.k == 2 && config.d == 1) result.reference = std::sqrt(720.0) * std::pow(delta, -2.5);
  }
  return result;
}

}  // namespace opcomp
