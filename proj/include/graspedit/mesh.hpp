#pragma once

#include "graspedit/se3.hpp"

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace graspedit {

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Plane {
  Vec3 normal;  // outward, unit
  double offset = 0.0;  // normal . x == offset on the plane
  double distance(const Vec3& p) const { return normal.dot(p) - offset; }
};

/// Closest surface feature for a query point.
struct SurfaceQuery {
  double signed_distance = 0.0;
  Vec3 closest = Vec3::Zero();
  Vec3 inward_normal = Vec3::UnitZ();
};

/// Convex polyhedron with outward-oriented polygonal faces.
class ConvexMesh {
 public:
  ConvexMesh() = default;
  /// Faces are vertex index loops, counter-clockwise seen from outside.
  /// Throws MeshError when the input is not a closed convex polyhedron.
  ConvexMesh(std::vector<Vec3> vertices, std::vector<std::vector<int>> faces);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<std::vector<int>>& faces() const { return faces_; }
  const std::vector<Plane>& planes() const { return planes_; }
  /// Fan triangulation of the faces; triangle_face()[t] is the source face.
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::vector<int>& triangle_face() const { return triangle_face_; }
  const std::vector<double>& triangle_areas() const { return triangle_areas_; }

  Vec3 aabb_min() const { return aabb_min_; }
  Vec3 aabb_max() const { return aabb_max_; }
  Vec3 aabb_center() const { return 0.5 * (aabb_min_ + aabb_max_); }
  Vec3 extents() const { return aabb_max_ - aabb_min_; }
  Vec3 vertex_centroid() const;
  double surface_area() const;

  /// Max over face planes: exact signed distance when <= 0, a lower bound on
  /// the distance otherwise.
  double plane_bound(const Vec3& p) const;
  /// Exact signed distance (negative inside).
  double signed_distance(const Vec3& p) const;
  SurfaceQuery query(const Vec3& p) const;

  bool is_convex(double tol = 1e-9) const;

  ConvexMesh scaled(double s) const;
  ConvexMesh translated(const Vec3& t) const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<std::vector<int>> faces_;
  std::vector<Plane> planes_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<int> triangle_face_;
  std::vector<double> triangle_areas_;
  Vec3 aabb_min_ = Vec3::Zero();
  Vec3 aabb_max_ = Vec3::Zero();
};

/// Closest point on triangle abc to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Convex hull of a point set (general position assumed). Interior points
/// are dropped.
ConvexMesh convex_hull(const std::vector<Vec3>& points);

ConvexMesh make_box(const Vec3& size);
/// Regular n-gon prism along z, circumradius r.
ConvexMesh make_prism(int sides, double radius, double height);

ConvexMesh read_off(const std::filesystem::path& path);
ConvexMesh parse_off(const std::string& text);
void write_off(const std::filesystem::path& path, const ConvexMesh& mesh);

}  // namespace graspedit
