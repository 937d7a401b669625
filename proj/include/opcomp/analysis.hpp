#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "opcomp/basis.hpp"
#include "opcomp/fem.hpp"
#include "opcomp/kernelop.hpp"
#include "opcomp/mesh.hpp"
#include "opcomp/rate.hpp"

namespace opcomp {

// ---------------------------------------------------------------- reports

/// One level of one series (e.g. a radius schedule) of a study.
struct StudyRow {
  std::string series;
  Index m = 0;  // patches per axis
  double h = 0;
  Index n = 0;  // basis size
  double value = std::numeric_limits<double>::quiet_NaN();
  double reference = std::numeric_limits<double>::quiet_NaN();  // e.g. lambda_{n+1}
  std::string status = "ok";                                     // ok | infeasible | skipped
};

struct SlopeSummary {
  std::string series;
  double slope = 0;
  double r_squared = 0;
  Index points = 0;
  double lower = -std::numeric_limits<double>::infinity();  // acceptance band
  double upper = std::numeric_limits<double>::infinity();
  bool passed() const { return slope >= lower && slope <= upper; }
};

/// A named pass/fail assertion made while running a study.
struct StudyCheck {
  std::string name;
  double value = 0;
  double threshold = 0;
  bool passed = false;
};

struct StudyReport {
  std::string kind;
  std::vector<StudyRow> rows;
  std::vector<SlopeSummary> slopes;
  std::vector<StudyCheck> checks;
  std::map<std::string, std::string> parameters;  // seeds, tolerances, grid sizes
  double runtime_seconds = 0;

  bool passed() const;
  /// Rows of one series in insertion order.
  std::vector<StudyRow> series(const std::string& name) const;
  void add_check(std::string name, double value, double threshold, bool passed);
};

/// Fits log(value) against log(h) over the ok rows of a series (optionally
/// only the last `finest` of them) and records the summary.
SlopeSummary fit_series(StudyReport& report, const std::string& series, double lower, double upper,
                        Index finest = 0);

/// CSV with a fixed header; every row carries `config_hash`. No timestamps.
void write_report_csv(std::ostream& out, const StudyReport& report, const std::string& config_hash);

// ---------------------------------------------------------------- MsFEM

struct MsfemSolution {
  Eigen::VectorXd u;             // fine coefficients of u_h
  Eigen::VectorXd coefficients;  // weights on the family
};

/// u_h = Psi L_n^{-1} Psi^T f with L_n = Psi^T A Psi; f is a fine load vector.
MsfemSolution msfem_solve(const FineSpace& fs, const BasisFamily& family, const Eigen::VectorXd& load);

/// Energy norm ||v||_A.
double energy_norm(const FineSpace& fs, const Eigen::VectorXd& v);

/// max over `trials` random v in span(Psi) of ||u - u_h||_A - ||u - v||_A (<= 0 when optimal).
double galerkin_optimality_gap(const FineSpace& fs, const BasisFamily& family, const MsfemSolution& uh,
                               const Eigen::VectorXd& u, int trials, std::uint64_t seed);

/// Basis used at each level of a study.
struct LocalizationChoice {
  bool localized = false;
  RadiusSchedule schedule = RadiusSchedule::Log2;
  double c = 2.4;

  std::string label() const;
};

struct ConvergenceConfig {
  ProblemTag problem = ProblemTag::Beam1d;
  std::uint64_t field_seed = 7;
  std::uint64_t load_seed = 8;
  int k_phi = 2;
  std::vector<Index> levels{8, 16, 32, 64};
  Index fine_m = 512;  // reference resolution, >= 4x the finest level
  LocalizationChoice basis;
  double slope_lower = -std::numeric_limits<double>::infinity();
  double slope_upper = std::numeric_limits<double>::infinity();
};

/// Beam: energy error of the MsFEM solution for a random load against the fine
/// solution. Robin: operator compression error of A^{-1}M by Psi L_n^{-1} Psi^T M.
StudyReport convergence_study(const ConvergenceConfig& config);

/// Random load drawn from the flexural coefficient model with its own seed.
CoefficientField sample_load(std::uint64_t seed);

/// L2 operator norm of A^{-1} M - Psi L_n^{-1} Psi^T M (self-adjoint in the M product).
double fem_compression_error(const FineSpace& fs, const BasisFamily& family, const LanczosOptions& options = {});

// ---------------------------------------------------------------- kernel study

struct KernelStudyConfig {
  double rho = 1.0;
  double sigma = 1.0;
  Index grid_points = 4096;  // midpoint rule
  Index fem_cells = 4096;    // Robin fine space for localized members
  std::vector<Index> levels{1, 2, 4, 8, 16, 32, 64, 128};
  std::vector<LocalizationChoice> schedules;
  bool global = true;
  bool eigen_check = false;  // eigenbasis E against lambda_{n+1} (needs eigenvectors)
  double global_factor = 4.0;
  double log2_lower = 1.7, log2_upper = 2.3;
  double linear_upper = 1.5;
  Index linear_finest = 3;
};

/// Compression error of the global and localized families against the eigen
/// baseline at every level; infeasible cells are recorded and skipped.
StudyReport kernel_compression_study(const KernelStudyConfig& config);

/// Theta from the kernel path and S_c = C^T A^{-1} C from the Robin FEM path on
/// the same partition; returns the max relative entry difference.
double cross_path_theta_difference(Index m, Index resolution, double rho = 1.0, double sigma = 1.0);

// ---------------------------------------------------------------- decay

struct DecayConfig {
  ProblemTag problem = ProblemTag::Plate2d;
  std::uint64_t field_seed = 11;  // flexural / plate coefficient; unused for robin
  Index coarse = 8;               // patches per axis
  Index fine = 32;                // fine cells per axis
  double r_squared_min = 0.9;
  bool require_monotone = true;   // tails strictly decreasing above the floor
};

struct DecayStudy {
  StudyReport report;
  Index patch = 0;
  std::vector<DecayProfile> profiles;  // one per member q of the centre patch
};

/// Global members of the centre patch (index m/2 - 1 per axis) and their
/// tail-energy profiles; Phi is piecewise linear for fourth-order problems.
DecayStudy decay_study(const DecayConfig& config);

/// True when the tails above kTailFloor * tail(0) strictly decrease.
bool strictly_decreasing_tails(const DecayProfile& profile);

// ---------------------------------------------------------------- scaling constant

enum class ScalingShape { Ball, UnitCell };

struct ScalingConfig {
  int k = 1;
  int s = 1;
  int d = 1;
  ScalingShape shape = ScalingShape::Ball;
  double delta = 1.0;
  Index resolution = 4096;  // spline cells per axis (intervals, squares)
  Index rings = 64;         // P1 rings of the disc mesh (d = 2 balls)
  Point center = Point::Zero();
};

struct ScalingResult {
  double value = 0;
  double reference = std::numeric_limits<double>::quiet_NaN();  // closed form when known
  Eigen::MatrixXd M, S;
  Index unknowns = 0;
};

/// sqrt(lambda_max(M, S)) with M_ij = (p_i, p_j) on the unit-diameter ball
/// (or the unit cell) and S_ij = (u_i, p_j), u_i solving the order-2k
/// problem with right-hand side p_i on the shape of diameter delta.
ScalingResult scaling_constant(const ScalingConfig& config);

/// 2 sqrt(d (d+2)) delta^{-1-d/2}.
double ball_scaling_formula(int d, double delta);

}  // namespace opcomp
