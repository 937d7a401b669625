#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "opcomp/coefficients.hpp"
#include "opcomp/mesh.hpp"
#include "opcomp/polyspace.hpp"

namespace opcomp {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class ProblemTag { Robin1d, Beam1d, Plate2d, Custom };
enum class ElementKind { P1, Hermite, BSpline };

std::string to_string(ProblemTag tag);
ProblemTag parse_problem_tag(std::string_view name);

/// Robin problem for the kernel sigma^2 exp(-|x-y|/rho):
/// B(u,v) = (rho^2 (u',v') + (u,v) + rho (u(0)v(0) + u(1)v(1))) / (2 sigma^2 rho).
struct RobinParameters {
  double rho = 1.0;
  double sigma = 1.0;
};

/// Conforming fine discretization on a uniform grid of cells over a box.
///
/// Raw functions are the full element basis; eliminated (clamped) raw
/// functions map to DOF -1. Per-cell energy matrices are kept, in raw local
/// ordering and including boundary terms, so energies can be localized.
class FineSpace {
 public:
  ProblemTag tag() const { return tag_; }
  ElementKind element() const { return element_; }
  int dim() const { return dim_; }
  /// Half-order of the energy (1 for second-order, 2 for fourth-order problems).
  int order() const { return order_; }
  Index cells_per_axis() const { return n_; }
  Index cell_count() const { return dim_ == 1 ? n_ : n_ * n_; }
  double cell_size() const { return width_ / static_cast<double>(n_); }
  const Point& lower() const { return lower_; }
  double width() const { return width_; }
  const std::string& boundary() const { return boundary_; }

  Index size() const { return dof_count_; }
  Index raw_size() const { return static_cast<Index>(raw_to_dof_.size()); }
  Index dof(Index raw) const { return raw_to_dof_[static_cast<std::size_t>(raw)]; }

  const SparseMatrix& energy() const { return A_; }
  const SparseMatrix& mass() const { return M_; }

  Point cell_lower(Index cell) const;
  Point cell_upper(Index cell) const;
  Point cell_centroid(Index cell) const;
  /// Cell containing x (clamped to the grid).
  Index locate_cell(const Point& x) const;
  /// Raw indices of the local shape functions of a cell.
  std::vector<Index> cell_raw(Index cell) const;
  /// Local energy matrix of a cell (raw local ordering).
  const Eigen::MatrixXd& cell_energy(Index cell) const { return cell_energy_[static_cast<std::size_t>(cell)]; }
  /// Cells in the support of each DOF.
  const std::vector<std::vector<Index>>& dof_cells() const { return dof_cells_; }

  /// Local shape values (or partial derivatives) on `cell` at physical x.
  Eigen::VectorXd shapes(Index cell, const Point& x, int dx = 0, int dy = 0) const;
  /// Value of the DOF vector u at x.
  double evaluate(const Eigen::VectorXd& u, const Point& x, int dx = 0, int dy = 0) const;

  /// Gauss points (5 per axis) of a cell with physical weights.
  void for_each_quadrature_point(Index cell, const std::function<void(const Point&, double)>& visit) const;

 private:
  friend FineSpace build_fine_space(ProblemTag, const std::optional<CoefficientField>&, Index,
                                    RobinParameters);
  friend FineSpace build_custom_space(int, int, const Point&, double, Index);
  void finalize(const std::function<Eigen::MatrixXd(Index)>& cell_energy_fn);

  ProblemTag tag_ = ProblemTag::Custom;
  ElementKind element_ = ElementKind::P1;
  int dim_ = 1;
  int order_ = 1;
  Index n_ = 1;
  Point lower_ = Point::Zero();
  double width_ = 1.0;
  std::string boundary_;
  std::vector<Index> raw_to_dof_;
  Index dof_count_ = 0;
  SparseMatrix A_, M_;
  std::vector<Eigen::MatrixXd> cell_energy_;
  std::vector<std::vector<Index>> dof_cells_;
};

/// Fine space on the unit interval/square for a problem tag with `fine_m`
/// cells per axis. Robin ignores the field; beam and plate default to a = 1.
FineSpace build_fine_space(ProblemTag tag, const std::optional<CoefficientField>& field, Index fine_m,
                           RobinParameters robin = {});

/// Clamped cubic B-spline space on the box [lower, lower + width]^dim for the
/// operator sum_{|s|=k} (D^s u, D^s v); k boundary layers are removed per side.
FineSpace build_custom_space(int dim, int k, const Point& lower, double width, Index cells_per_axis);

/// Patch of each fine cell; throws unless the fine grid refines the partition.
std::vector<Index> cell_patches(const FineSpace& fs, const Partition& partition);

/// C(a, (j,q)) = integral of v_a phi_{j,q}; checks full column rank.
SparseMatrix assemble_constraint_matrix(const FineSpace& fs, const PolyBasis& basis);

/// b_a = integral of f v_a.
Eigen::VectorXd load_vector(const FineSpace& fs, const std::function<double(const Point&)>& f);

/// Nodal interpolant (P1 values, Hermite values and slopes). Not defined for B-splines.
Eigen::VectorXd interpolate(const FineSpace& fs, const FunctionJet& u);

/// Patch projection coefficients (patches x Q) of a fine function: C^T u / |tau|.
Eigen::MatrixXd project_onto_poly(const FineSpace& fs, const Eigen::VectorXd& u, const PolyBasis& basis,
                                  const SparseMatrix& constraints);

}  // namespace opcomp
