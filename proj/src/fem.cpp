#include "opcomp/fem.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>

#include "opcomp/error.hpp"
#include "opcomp/parallel.hpp"
#include "opcomp/quadrature.hpp"

namespace opcomp {

namespace {

constexpr int kDegree = 3;

// Derivatives 0..3 of the 4 cubic B-splines nonzero on knot span `span` of
// the open uniform knot vector with n cells on [0,1] (NURBS book, A2.3).
std::array<std::array<double, 4>, 4> bspline_ders(Index n, Index cell, double u) {
  const Index span = cell + kDegree;
  auto knot = [n](Index i) {
    if (i <= kDegree) return 0.0;
    if (i >= n + kDegree) return 1.0;
    return static_cast<double>(i - kDegree) / static_cast<double>(n);
  };
  constexpr int p = kDegree;
  double ndu[p + 1][p + 1];
  double left[p + 1], right[p + 1];
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = u - knot(span + 1 - j);
    right[j] = knot(span + j) - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  std::array<std::array<double, 4>, 4> ders{};
  for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];
  double a[2][p + 1];
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= p; ++k) {
      double d = 0.0;
      const int rk = r - k, pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      ders[k][r] = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int k = 1; k <= p; ++k) {
    for (int j = 0; j <= p; ++j) ders[k][j] *= factor;
    factor *= (p - k);
  }
  return ders;
}

// 1D local shapes on a cell of width hc at reference coordinate xi, derivative order d.
Eigen::VectorXd p1_shapes(double /*xi*/, double hc, int d) {
  Eigen::VectorXd v(2);
  if (d == 0) return v;  // filled by caller
  if (d == 1) {
    v << -1.0 / hc, 1.0 / hc;
  } else {
    v.setZero();
  }
  return v;
}

Eigen::VectorXd hermite_shapes(double t, double hc, int d) {
  Eigen::VectorXd v(4);
  switch (d) {
    case 0:
      v << 1 - 3 * t * t + 2 * t * t * t, hc * (t - 2 * t * t + t * t * t), 3 * t * t - 2 * t * t * t,
          hc * (-t * t + t * t * t);
      break;
    case 1:
      v << -6 * t + 6 * t * t, hc * (1 - 4 * t + 3 * t * t), 6 * t - 6 * t * t, hc * (-2 * t + 3 * t * t);
      v /= hc;
      break;
    case 2:
      v << -6 + 12 * t, hc * (-4 + 6 * t), 6 - 12 * t, hc * (-2 + 6 * t);
      v /= hc * hc;
      break;
    case 3:
      v << 12, 6 * hc, -12, 6 * hc;
      v /= hc * hc * hc;
      break;
    default:
      v.setZero();
  }
  return v;
}

// Multi-indices of total order k in `dim` variables.
std::vector<std::array<int, 2>> multi_indices(int k, int dim) {
  if (dim == 1) return {{k, 0}};
  std::vector<std::array<int, 2>> out;
  for (int b = 0; b <= k; ++b) out.push_back({k - b, b});
  return out;
}

}  // namespace

std::string to_string(ProblemTag tag) {
  switch (tag) {
    case ProblemTag::Robin1d: return "robin-1d-order2";
    case ProblemTag::Beam1d: return "beam-1d-order4";
    case ProblemTag::Plate2d: return "plate-2d-order4";
    case ProblemTag::Custom: return "custom";
  }
  return "custom";
}

ProblemTag parse_problem_tag(std::string_view name) {
  if (name == "robin-1d-order2" || name == "robin-1d") return ProblemTag::Robin1d;
  if (name == "beam-1d-order4" || name == "beam-1d") return ProblemTag::Beam1d;
  if (name == "plate-2d-order4" || name == "plate-2d") return ProblemTag::Plate2d;
  if (name == "custom") return ProblemTag::Custom;
  throw Error(ErrorKind::InvalidArgument, "unknown problem tag '" + std::string(name) + "'");
}

Point FineSpace::cell_lower(Index cell) const {
  const double hc = cell_size();
  const Index cx = dim_ == 1 ? cell : cell % n_;
  const Index cy = dim_ == 1 ? 0 : cell / n_;
  return Point(lower_.x() + cx * hc, dim_ == 1 ? 0.0 : lower_.y() + cy * hc);
}

Point FineSpace::cell_upper(Index cell) const {
  const double hc = cell_size();
  Point p = cell_lower(cell) + Point(hc, hc);
  if (dim_ == 1) p.y() = 0.0;
  return p;
}

Point FineSpace::cell_centroid(Index cell) const { return 0.5 * (cell_lower(cell) + cell_upper(cell)); }

Index FineSpace::locate_cell(const Point& x) const {
  auto axis = [&](double t, double lo) {
    const auto k = static_cast<Index>(std::floor((t - lo) / cell_size()));
    return std::clamp<Index>(k, 0, n_ - 1);
  };
  const Index cx = axis(x.x(), lower_.x());
  return dim_ == 1 ? cx : cx + n_ * axis(x.y(), lower_.y());
}

std::vector<Index> FineSpace::cell_raw(Index cell) const {
  switch (element_) {
    case ElementKind::P1: return {cell, cell + 1};
    case ElementKind::Hermite: return {2 * cell, 2 * cell + 1, 2 * cell + 2, 2 * cell + 3};
    case ElementKind::BSpline: {
      if (dim_ == 1) return {cell, cell + 1, cell + 2, cell + 3};
      const Index cx = cell % n_, cy = cell / n_, stride = n_ + kDegree;
      std::vector<Index> raw;
      raw.reserve(16);
      for (Index ly = 0; ly < 4; ++ly)
        for (Index lx = 0; lx < 4; ++lx) raw.push_back((cx + lx) + stride * (cy + ly));
      return raw;
    }
  }
  return {};
}

Eigen::VectorXd FineSpace::shapes(Index cell, const Point& x, int dx, int dy) const {
  const double hc = cell_size();
  const Point lo = cell_lower(cell);
  if (dim_ == 1) {
    if (dy != 0) return Eigen::VectorXd::Zero(element_ == ElementKind::P1 ? 2 : 4);
    const double t = (x.x() - lo.x()) / hc;
    switch (element_) {
      case ElementKind::P1: {
        Eigen::VectorXd v = p1_shapes(t, hc, dx);
        if (dx == 0) v << 1 - t, t;
        return v;
      }
      case ElementKind::Hermite: return hermite_shapes(t, hc, dx);
      case ElementKind::BSpline: {
        require(dx <= kDegree, "B-spline derivative order above 3");
        const auto d = bspline_ders(n_, cell, (x.x() - lower_.x()) / width_);
        Eigen::VectorXd v(4);
        for (int j = 0; j < 4; ++j) v(j) = d[dx][j] / std::pow(width_, dx);
        return v;
      }
    }
  }
  require(dx <= kDegree && dy <= kDegree, "B-spline derivative order above 3");
  const Index cx = cell % n_, cy = cell / n_;
  const auto bx = bspline_ders(n_, cx, (x.x() - lower_.x()) / width_);
  const auto by = bspline_ders(n_, cy, (x.y() - lower_.y()) / width_);
  const double scale = std::pow(width_, -(dx + dy));
  Eigen::VectorXd v(16);
  for (int ly = 0; ly < 4; ++ly)
    for (int lx = 0; lx < 4; ++lx) v(lx + 4 * ly) = bx[dx][lx] * by[dy][ly] * scale;
  return v;
}

double FineSpace::evaluate(const Eigen::VectorXd& u, const Point& x, int dx, int dy) const {
  require(u.size() == dof_count_, "vector size does not match the fine space");
  const Index cell = locate_cell(x);
  const Eigen::VectorXd s = shapes(cell, x, dx, dy);
  const auto raw = cell_raw(cell);
  double value = 0;
  for (std::size_t a = 0; a < raw.size(); ++a) {
    const Index d = dof(raw[a]);
    if (d >= 0) value += u(d) * s(static_cast<Index>(a));
  }
  return value;
}

void FineSpace::for_each_quadrature_point(Index cell,
                                          const std::function<void(const Point&, double)>& visit) const {
  const auto& rule = default_rule();
  const double hc = cell_size();
  const Point lo = cell_lower(cell);
  const Index ny = dim_ == 2 ? rule.points.size() : 1;
  for (Index qy = 0; qy < ny; ++qy)
    for (Index qx = 0; qx < rule.points.size(); ++qx) {
      const Point x(lo.x() + rule.points(qx) * hc, dim_ == 2 ? lo.y() + rule.points(qy) * hc : 0.0);
      const double w = rule.weights(qx) * hc * (dim_ == 2 ? rule.weights(qy) * hc : 1.0);
      visit(x, w);
    }
}

void FineSpace::finalize(const std::function<Eigen::MatrixXd(Index)>& cell_energy_fn) {
  const Index cells = cell_count();
  dof_count_ = 0;
  for (Index& d : raw_to_dof_) d = d < 0 ? -1 : dof_count_++;
  require(dof_count_ > 0, "fine space has no free degrees of freedom");

  cell_energy_.assign(static_cast<std::size_t>(cells), {});
  std::vector<Eigen::MatrixXd> cell_mass(static_cast<std::size_t>(cells));
  parallel_for(cells, [&](std::ptrdiff_t c) {
    Eigen::MatrixXd K = cell_energy_fn(c);
    cell_energy_[static_cast<std::size_t>(c)] = 0.5 * (K + K.transpose());
    Eigen::MatrixXd Mc = Eigen::MatrixXd::Zero(K.rows(), K.cols());
    for_each_quadrature_point(c, [&](const Point& x, double w) {
      const Eigen::VectorXd s = shapes(c, x);
      Mc.noalias() += w * s * s.transpose();
    });
    cell_mass[static_cast<std::size_t>(c)] = std::move(Mc);
  });

  std::vector<Eigen::Triplet<double>> ta, tm;
  dof_cells_.assign(static_cast<std::size_t>(dof_count_), {});
  for (Index c = 0; c < cells; ++c) {
    const auto raw = cell_raw(c);
    const auto& K = cell_energy_[static_cast<std::size_t>(c)];
    const auto& Mc = cell_mass[static_cast<std::size_t>(c)];
    for (std::size_t a = 0; a < raw.size(); ++a) {
      const Index da = dof(raw[a]);
      if (da < 0) continue;
      dof_cells_[static_cast<std::size_t>(da)].push_back(c);
      for (std::size_t b = 0; b < raw.size(); ++b) {
        const Index db = dof(raw[b]);
        if (db < 0) continue;
        ta.emplace_back(da, db, K(static_cast<Index>(a), static_cast<Index>(b)));
        tm.emplace_back(da, db, Mc(static_cast<Index>(a), static_cast<Index>(b)));
      }
    }
  }
  A_.resize(dof_count_, dof_count_);
  M_.resize(dof_count_, dof_count_);
  A_.setFromTriplets(ta.begin(), ta.end());
  M_.setFromTriplets(tm.begin(), tm.end());
  A_.makeCompressed();
  M_.makeCompressed();
}

FineSpace build_fine_space(ProblemTag tag, const std::optional<CoefficientField>& field, Index fine_m,
                           RobinParameters robin) {
  require(tag != ProblemTag::Custom, "custom spaces are built with build_custom_space");
  require(fine_m >= 2, "fine grid needs at least 2 cells per axis");
  FineSpace fs;
  fs.tag_ = tag;
  fs.n_ = fine_m;
  const CoefficientField coef = field.value_or(CoefficientField::constant(1.0));

  switch (tag) {
    case ProblemTag::Robin1d: {
      require(robin.rho > 0 && robin.sigma > 0, "Robin parameters rho and sigma must be positive");
      fs.element_ = ElementKind::P1;
      fs.dim_ = 1;
      fs.order_ = 1;
      fs.boundary_ = "robin: u(0) - rho u'(0) = 0, u(1) + rho u'(1) = 0";
      fs.raw_to_dof_.assign(static_cast<std::size_t>(fine_m + 1), 0);
      const double scale = 1.0 / (2.0 * robin.sigma * robin.sigma * robin.rho);
      const double rho = robin.rho;
      fs.finalize([&fs, scale, rho, fine_m](Index c) {
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(2, 2);
        fs.for_each_quadrature_point(c, [&](const Point& x, double w) {
          const Eigen::VectorXd s0 = fs.shapes(c, x, 0);
          const Eigen::VectorXd s1 = fs.shapes(c, x, 1);
          K.noalias() += w * (rho * rho * s1 * s1.transpose() + s0 * s0.transpose());
        });
        if (c == 0) K(0, 0) += rho;
        if (c == fine_m - 1) K(1, 1) += rho;
        return Eigen::MatrixXd(scale * K);
      });
      break;
    }
    case ProblemTag::Beam1d: {
      require(coef.kind() != FieldKind::Plate2d, "beam needs a scalar coefficient");
      fs.element_ = ElementKind::Hermite;
      fs.dim_ = 1;
      fs.order_ = 2;
      fs.boundary_ = "clamped: u = u' = 0 at x = 0, 1";
      fs.raw_to_dof_.assign(static_cast<std::size_t>(2 * (fine_m + 1)), 0);
      for (Index r : {Index(0), Index(1), 2 * fine_m, 2 * fine_m + 1}) fs.raw_to_dof_[static_cast<std::size_t>(r)] = -1;
      fs.finalize([&fs, &coef](Index c) {
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(4, 4);
        fs.for_each_quadrature_point(c, [&](const Point& x, double w) {
          const Eigen::VectorXd s2 = fs.shapes(c, x, 2);
          K.noalias() += (w * coef.scalar(x.x())) * s2 * s2.transpose();
        });
        return K;
      });
      break;
    }
    case ProblemTag::Plate2d: {
      require(coef.kind() != FieldKind::Flexural1d, "plate needs plate coefficients");
      fs.element_ = ElementKind::BSpline;
      fs.dim_ = 2;
      fs.order_ = 2;
      fs.boundary_ = "clamped: two boundary spline layers removed per side";
      const Index per_axis = fine_m + kDegree;
      fs.raw_to_dof_.assign(static_cast<std::size_t>(per_axis * per_axis), 0);
      for (Index iy = 0; iy < per_axis; ++iy)
        for (Index ix = 0; ix < per_axis; ++ix) {
          auto dropped = [per_axis](Index i) { return i < 2 || i >= per_axis - 2; };
          if (dropped(ix) || dropped(iy)) fs.raw_to_dof_[static_cast<std::size_t>(ix + per_axis * iy)] = -1;
        }
      fs.finalize([&fs, &coef](Index c) {
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(16, 16);
        fs.for_each_quadrature_point(c, [&](const Point& x, double w) {
          const Eigen::Vector3d a = coef.plate_terms(x);
          const Eigen::VectorXd sxx = fs.shapes(c, x, 2, 0);
          const Eigen::VectorXd syy = fs.shapes(c, x, 0, 2);
          const Eigen::VectorXd sxy = fs.shapes(c, x, 1, 1);
          K.noalias() += (w * a(0)) * sxx * sxx.transpose();
          K.noalias() += (w * a(1)) * syy * syy.transpose();
          K.noalias() += (2.0 * w * a(2)) * sxy * sxy.transpose();
        });
        return K;
      });
      break;
    }
    case ProblemTag::Custom: break;
  }
  return fs;
}

FineSpace build_custom_space(int dim, int k, const Point& lower, double width, Index cells_per_axis) {
  require(dim == 1 || dim == 2, "custom space dimension must be 1 or 2");
  require(k == 1 || k == 2, "custom operator order must be 1 or 2");
  require(width > 0, "box width must be positive");
  require(cells_per_axis >= 2, "custom space needs at least 2 cells per axis");
  FineSpace fs;
  fs.tag_ = ProblemTag::Custom;
  fs.element_ = ElementKind::BSpline;
  fs.dim_ = dim;
  fs.order_ = k;
  fs.n_ = cells_per_axis;
  fs.lower_ = lower;
  if (dim == 1) fs.lower_.y() = 0.0;
  fs.width_ = width;
  fs.boundary_ = k == 1 ? "dirichlet: u = 0 on the box boundary" : "clamped: u = grad u = 0 on the box boundary";
  const Index per_axis = cells_per_axis + kDegree;
  const Index ny = dim == 2 ? per_axis : 1;
  fs.raw_to_dof_.assign(static_cast<std::size_t>(per_axis * ny), 0);
  auto dropped = [per_axis, k](Index i) { return i < k || i >= per_axis - k; };
  for (Index iy = 0; iy < ny; ++iy)
    for (Index ix = 0; ix < per_axis; ++ix)
      if (dropped(ix) || (dim == 2 && dropped(iy))) fs.raw_to_dof_[static_cast<std::size_t>(ix + per_axis * iy)] = -1;
  const auto sigmas = multi_indices(k, dim);
  fs.finalize([&fs, &sigmas](Index c) {
    const Index local = fs.dim() == 1 ? 4 : 16;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(local, local);
    fs.for_each_quadrature_point(c, [&](const Point& x, double w) {
      for (const auto& [sx, sy] : sigmas) {
        const Eigen::VectorXd s = fs.shapes(c, x, sx, sy);
        K.noalias() += w * s * s.transpose();
      }
    });
    return K;
  });
  return fs;
}

std::vector<Index> cell_patches(const FineSpace& fs, const Partition& partition) {
  require(fs.tag() != ProblemTag::Custom, "custom spaces are not tied to a unit-domain partition");
  require(fs.dim() == partition.dim(), "fine space and partition dimensions differ");
  const Index n = fs.cells_per_axis(), m = partition.m_per_axis();
  require(n % m == 0, "fine grid (" + std::to_string(n) + " cells per axis) does not refine " +
                          std::to_string(m) + " patches per axis by an integer ratio");
  const Index ratio = n / m;
  std::vector<Index> out(static_cast<std::size_t>(fs.cell_count()));
  for (Index c = 0; c < fs.cell_count(); ++c) {
    out[static_cast<std::size_t>(c)] =
        fs.dim() == 1 ? c / ratio : partition.patch_index((c % n) / ratio, (c / n) / ratio);
  }
  return out;
}

SparseMatrix assemble_constraint_matrix(const FineSpace& fs, const PolyBasis& basis) {
  const auto patch_of = cell_patches(fs, basis.partition());
  const Index Q = basis.per_patch();
  std::vector<Eigen::MatrixXd> blocks(static_cast<std::size_t>(fs.cell_count()));
  parallel_for(fs.cell_count(), [&](std::ptrdiff_t c) {
    const Index j = patch_of[static_cast<std::size_t>(c)];
    Eigen::MatrixXd block;
    fs.for_each_quadrature_point(c, [&](const Point& x, double w) {
      const Eigen::VectorXd s = fs.shapes(c, x);
      const Eigen::VectorXd phi = basis.evaluate(j, x);
      if (block.size() == 0) block = Eigen::MatrixXd::Zero(s.size(), Q);
      block.noalias() += w * s * phi.transpose();
    });
    blocks[static_cast<std::size_t>(c)] = std::move(block);
  });

  std::vector<Eigen::Triplet<double>> triplets;
  for (Index c = 0; c < fs.cell_count(); ++c) {
    const auto raw = fs.cell_raw(c);
    const Index j = patch_of[static_cast<std::size_t>(c)];
    const auto& block = blocks[static_cast<std::size_t>(c)];
    for (std::size_t a = 0; a < raw.size(); ++a) {
      const Index d = fs.dof(raw[a]);
      if (d < 0) continue;
      for (Index q = 0; q < Q; ++q) triplets.emplace_back(d, basis.column(j, q), block(static_cast<Index>(a), q));
    }
  }
  SparseMatrix C(fs.size(), basis.size());
  C.setFromTriplets(triplets.begin(), triplets.end());
  C.makeCompressed();

  // Rank check on the (small) Gram matrix of the columns.
  const Eigen::MatrixXd gram = Eigen::MatrixXd(C.transpose() * C);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  if (!(lmax > 0) || lmin <= 1e-24 * lmax) {
    throw Error(ErrorKind::DegenerateConstraints,
                "constraint matrix is rank deficient (Gram eigenvalue ratio " + std::to_string(lmin / lmax) +
                    "); the fine grid does not resolve the patch polynomials");
  }
  return C;
}

Eigen::VectorXd load_vector(const FineSpace& fs, const std::function<double(const Point&)>& f) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(fs.size());
  for (Index c = 0; c < fs.cell_count(); ++c) {
    const auto raw = fs.cell_raw(c);
    fs.for_each_quadrature_point(c, [&](const Point& x, double w) {
      const Eigen::VectorXd s = fs.shapes(c, x);
      const double fx = f(x);
      for (std::size_t a = 0; a < raw.size(); ++a) {
        const Index d = fs.dof(raw[a]);
        if (d >= 0) b(d) += w * fx * s(static_cast<Index>(a));
      }
    });
  }
  return b;
}

Eigen::VectorXd interpolate(const FineSpace& fs, const FunctionJet& u) {
  require(fs.element() != ElementKind::BSpline, "nodal interpolation is not defined for B-spline spaces");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(fs.size());
  const double hc = fs.cell_size();
  for (Index node = 0; node <= fs.cells_per_axis(); ++node) {
    const Point x(fs.lower().x() + node * hc, 0.0);
    if (fs.element() == ElementKind::P1) {
      if (fs.dof(node) >= 0) v(fs.dof(node)) = u(x, 0, 0);
    } else {
      if (fs.dof(2 * node) >= 0) v(fs.dof(2 * node)) = u(x, 0, 0);
      if (fs.dof(2 * node + 1) >= 0) v(fs.dof(2 * node + 1)) = u(x, 1, 0);
    }
  }
  return v;
}

Eigen::MatrixXd project_onto_poly(const FineSpace& fs, const Eigen::VectorXd& u, const PolyBasis& basis,
                                  const SparseMatrix& constraints) {
  require(u.size() == fs.size() && constraints.rows() == fs.size() && constraints.cols() == basis.size(),
          "projection inputs have inconsistent sizes");
  const Eigen::VectorXd moments = constraints.transpose() * u;
  const Index Q = basis.per_patch();
  Eigen::MatrixXd table(basis.partition().size(), Q);
  for (Index i = 0; i < table.rows(); ++i)
    table.row(i) = moments.segment(i * Q, Q).transpose() / basis.partition().patch(i).volume;
  return table;
}

}  // namespace opcomp
