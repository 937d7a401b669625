#pragma once

#include <Eigen/Core>
#include <memory>
#include <vector>

namespace opcomp {

using Index = Eigen::Index;
using Point = Eigen::Vector2d;  // 1D partitions use only x(); y() is 0

/// One axis-aligned cell of a uniform partition.
struct Patch {
  Index index = 0;   // 0-based, x fastest
  Point lower{0, 0};
  Point upper{0, 0};
  Point centroid{0, 0};
  double volume = 0;
};

/// Regular partition of the unit interval (dim 1) or unit square (dim 2)
/// into m_per_axis^dim equal cells.
class Partition {
 public:
  Partition(int dim, Index m_per_axis);

  int dim() const { return dim_; }
  Index m_per_axis() const { return m_per_axis_; }
  Index size() const { return static_cast<Index>(patches_.size()); }
  /// Cell width per axis.
  double h() const { return 1.0 / static_cast<double>(m_per_axis_); }
  /// Inscribed-ball diameter over cell diameter: 1 for intervals, 1/sqrt(2) for squares.
  double delta() const;
  double domain_diameter() const;

  const Patch& patch(Index i) const { return patches_.at(static_cast<std::size_t>(i)); }
  const std::vector<Patch>& patches() const { return patches_; }

  /// Patch containing `x` (points on shared faces go to the upper cell,
  /// except on the domain's upper boundary).
  Index locate(const Point& x) const;
  Index patch_index(Index ix, Index iy) const { return ix + m_per_axis_ * iy; }

 private:
  int dim_;
  Index m_per_axis_;
  std::vector<Patch> patches_;
};

Partition build_uniform_partition(int dim, Index m_per_axis);

/// Union of patches of a partition (an oversampling region S_r).
struct PatchSet {
  std::shared_ptr<const Partition> partition;
  std::vector<Index> members;  // sorted, unique
  Point lower{0, 0};           // bounding box
  Point upper{0, 0};

  bool contains(Index patch) const;
  Index size() const { return static_cast<Index>(members.size()); }
};

/// Distance from `x` to the closed axis-aligned box [lower, upper].
double distance_to_box(const Point& x, const Point& lower, const Point& upper, int dim);

/// Patches whose closed cell meets the open ball B(x_i, r) in a set of
/// positive measure, i.e. whose distance to the centroid x_i is below r.
PatchSet oversampling_region(std::shared_ptr<const Partition> partition, Index i, double r);

enum class RadiusSchedule { Linear, Log2 };

/// linear: c*h; log2: c*h*log2(1/h).
double radius_from_schedule(double h, double c, RadiusSchedule schedule);

}  // namespace opcomp
