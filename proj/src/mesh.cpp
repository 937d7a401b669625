#include "opcomp/mesh.hpp"

#include <algorithm>
#include <cmath>

#include "opcomp/error.hpp"

namespace opcomp {

Partition::Partition(int dim, Index m_per_axis) : dim_(dim), m_per_axis_(m_per_axis) {
  require(dim == 1 || dim == 2, "partition dimension must be 1 or 2");
  require(m_per_axis >= 1, "patch count per axis must be positive");
  const double h = 1.0 / static_cast<double>(m_per_axis);
  const Index ny = dim == 2 ? m_per_axis : 1;
  patches_.reserve(static_cast<std::size_t>(m_per_axis * ny));
  for (Index iy = 0; iy < ny; ++iy) {
    for (Index ix = 0; ix < m_per_axis; ++ix) {
      Patch p;
      p.index = ix + m_per_axis * iy;
      p.lower = Point(ix * h, dim == 2 ? iy * h : 0.0);
      p.upper = Point((ix + 1) * h, dim == 2 ? (iy + 1) * h : 0.0);
      p.centroid = 0.5 * (p.lower + p.upper);
      p.volume = dim == 2 ? h * h : h;
      patches_.push_back(p);
    }
  }
}

double Partition::delta() const { return dim_ == 1 ? 1.0 : 1.0 / std::sqrt(2.0); }

double Partition::domain_diameter() const { return std::sqrt(static_cast<double>(dim_)); }

Index Partition::locate(const Point& x) const {
  auto axis = [&](double t) {
    const auto k = static_cast<Index>(std::floor(t * static_cast<double>(m_per_axis_)));
    return std::clamp<Index>(k, 0, m_per_axis_ - 1);
  };
  return dim_ == 1 ? axis(x.x()) : patch_index(axis(x.x()), axis(x.y()));
}

Partition build_uniform_partition(int dim, Index m_per_axis) { return Partition(dim, m_per_axis); }

bool PatchSet::contains(Index patch) const {
  return std::binary_search(members.begin(), members.end(), patch);
}

double distance_to_box(const Point& x, const Point& lower, const Point& upper, int dim) {
  double d2 = 0;
  for (int a = 0; a < dim; ++a) {
    const double gap = std::max({lower(a) - x(a), 0.0, x(a) - upper(a)});
    d2 += gap * gap;
  }
  return std::sqrt(d2);
}

PatchSet oversampling_region(std::shared_ptr<const Partition> partition, Index i, double r) {
  require(partition != nullptr, "oversampling_region needs a partition");
  require(i >= 0 && i < partition->size(), "patch index out of range");
  require(r > 0, "oversampling radius must be positive");
  const Patch& center = partition->patch(i);
  PatchSet set;
  set.lower = center.lower;
  set.upper = center.upper;
  for (const Patch& p : partition->patches()) {
    if (distance_to_box(center.centroid, p.lower, p.upper, partition->dim()) < r) {
      set.members.push_back(p.index);
      set.lower = set.lower.cwiseMin(p.lower);
      set.upper = set.upper.cwiseMax(p.upper);
    }
  }
  set.partition = std::move(partition);
  return set;
}

double radius_from_schedule(double h, double c, RadiusSchedule schedule) {
  require(h > 0 && c > 0, "radius schedule needs positive h and c");
  if (schedule == RadiusSchedule::Linear) return c * h;
  require(h < 1, "log2 schedule gives a nonpositive radius for h >= 1");
  return c * h * std::log2(1.0 / h);
}

}  // namespace opcomp
