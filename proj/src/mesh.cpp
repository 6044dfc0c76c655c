#include "graspedit/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace graspedit {

ConvexMesh::ConvexMesh(std::vector<Vec3> vertices, std::vector<std::vector<int>> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  if (vertices_.size() < 4) throw MeshError("mesh needs at least 4 vertices");
  if (faces_.size() < 4) throw MeshError("mesh needs at least 4 faces");
  aabb_min_ = aabb_max_ = vertices_.front();
  for (const Vec3& v : vertices_) {
    aabb_min_ = aabb_min_.cwiseMin(v);
    aabb_max_ = aabb_max_.cwiseMax(v);
  }
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const auto& loop = faces_[f];
    if (loop.size() < 3) throw MeshError("face " + std::to_string(f) + " has fewer than 3 vertices");
    for (int i : loop)
      if (i < 0 || i >= static_cast<int>(vertices_.size()))
        throw MeshError("face " + std::to_string(f) + " references missing vertex");
    // Newell normal is robust for slightly non-planar loops.
    Vec3 n = Vec3::Zero();
    Vec3 centroid = Vec3::Zero();
    for (std::size_t i = 0; i < loop.size(); ++i) {
      const Vec3& a = vertices_[loop[i]];
      const Vec3& b = vertices_[loop[(i + 1) % loop.size()]];
      n += a.cross(b);
      centroid += a;
    }
    centroid /= static_cast<double>(loop.size());
    const double len = n.norm();
    if (!(len > 0.0)) throw MeshError("face " + std::to_string(f) + " is degenerate");
    n /= len;
    planes_.push_back({n, n.dot(centroid)});
    for (std::size_t i = 1; i + 1 < loop.size(); ++i) {
      const std::array<int, 3> t{loop[0], loop[i], loop[i + 1]};
      const double area =
          0.5 * (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]).norm();
      triangles_.push_back(t);
      triangle_face_.push_back(static_cast<int>(f));
      triangle_areas_.push_back(area);
    }
  }
  const double scale = (aabb_max_ - aabb_min_).norm();
  if (!is_convex(1e-9 * std::max(1.0, scale) + 1e-12))
    throw MeshError("mesh is not convex or faces are not outward-oriented");
}

Vec3 ConvexMesh::vertex_centroid() const {
  Vec3 c = Vec3::Zero();
  for (const Vec3& v : vertices_) c += v;
  return c / static_cast<double>(vertices_.size());
}

double ConvexMesh::surface_area() const {
  double a = 0.0;
  for (double t : triangle_areas_) a += t;
  return a;
}

double ConvexMesh::plane_bound(const Vec3& p) const {
  double m = -std::numeric_limits<double>::infinity();
  for (const Plane& pl : planes_) m = std::max(m, pl.distance(p));
  return m;
}

double ConvexMesh::signed_distance(const Vec3& p) const { return query(p).signed_distance; }

SurfaceQuery ConvexMesh::query(const Vec3& p) const {
  SurfaceQuery q;
  int best_face = 0;
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < planes_.size(); ++f) {
    const double d = planes_[f].distance(p);
    if (d > m) {
      m = d;
      best_face = static_cast<int>(f);
    }
  }
  if (m <= 0.0) {
    q.signed_distance = m;
    q.closest = p - m * planes_[best_face].normal;
    q.inward_normal = -planes_[best_face].normal;
    return q;
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : triangles_) {
    const Vec3 c = closest_point_on_triangle(p, vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]);
    const double d = (c - p).squaredNorm();
    if (d < best) {
      best = d;
      q.closest = c;
    }
  }
  q.signed_distance = std::sqrt(best);
  // Face region: the closest feature's normal equals the supporting plane.
  if (q.signed_distance <= m * (1.0 + 1e-9) + 1e-15) {
    q.inward_normal = -planes_[best_face].normal;
  } else {
    q.inward_normal = (q.closest - p) / q.signed_distance;
  }
  return q;
}

bool ConvexMesh::is_convex(double tol) const {
  for (const Plane& pl : planes_)
    for (const Vec3& v : vertices_)
      if (pl.distance(v) > tol) return false;
  return true;
}

ConvexMesh ConvexMesh::scaled(double s) const {
  std::vector<Vec3> v = vertices_;
  for (Vec3& x : v) x *= s;
  return {std::move(v), faces_};
}

ConvexMesh ConvexMesh::translated(const Vec3& t) const {
  std::vector<Vec3> v = vertices_;
  for (Vec3& x : v) x += t;
  return {std::move(v), faces_};
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Voronoi-region walk (Ericson, Real-Time Collision Detection 5.1.5).
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

ConvexMesh convex_hull(const std::vector<Vec3>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 4) throw MeshError("convex_hull: need at least 4 points");
  Vec3 centroid = Vec3::Zero();
  double scale = 0.0;
  for (const Vec3& p : points) centroid += p;
  centroid /= n;
  for (const Vec3& p : points) scale = std::max(scale, (p - centroid).norm());
  const double eps = 1e-10 * scale;

  // Brute force: a triangle is a hull facet when every other point lies
  // behind its plane. Fine for the small point sets used here.
  std::vector<std::array<int, 3>> tris;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k) {
        Vec3 nrm = (points[j] - points[i]).cross(points[k] - points[i]);
        const double len = nrm.norm();
        if (len < 1e-14 * scale * scale) continue;
        nrm /= len;
        int pos = 0, neg = 0;
        for (int m = 0; m < n && !(pos && neg); ++m) {
          if (m == i || m == j || m == k) continue;
          const double d = nrm.dot(points[m] - points[i]);
          if (d > eps) ++pos;
          else if (d < -eps) ++neg;
        }
        if (pos && neg) continue;
        if (pos) tris.push_back({i, k, j});
        else tris.push_back({i, j, k});
      }
  std::vector<int> remap(n, -1);
  std::vector<Vec3> verts;
  std::vector<std::vector<int>> faces;
  for (const auto& t : tris) {
    std::vector<int> f;
    for (int v : t) {
      if (remap[v] < 0) {
        remap[v] = static_cast<int>(verts.size());
        verts.push_back(points[v]);
      }
      f.push_back(remap[v]);
    }
    faces.push_back(std::move(f));
  }
  return {std::move(verts), std::move(faces)};
}

ConvexMesh make_box(const Vec3& size) {
  const Vec3 h = 0.5 * size;
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i)
    v.emplace_back((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(), (i & 4) ? h.z() : -h.z());
  std::vector<std::vector<int>> f = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                                     {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  return {std::move(v), std::move(f)};
}

ConvexMesh make_prism(int sides, double radius, double height) {
  if (sides < 3) throw MeshError("prism needs at least 3 sides");
  std::vector<Vec3> v;
  for (int s = 0; s < 2; ++s)
    for (int i = 0; i < sides; ++i) {
      const double a = 2.0 * std::numbers::pi * i / sides;
      v.emplace_back(radius * std::cos(a), radius * std::sin(a), (s ? 0.5 : -0.5) * height);
    }
  std::vector<std::vector<int>> f;
  std::vector<int> bottom, top;
  for (int i = 0; i < sides; ++i) {
    bottom.push_back(sides - 1 - i);
    top.push_back(sides + i);
    const int j = (i + 1) % sides;
    f.push_back({i, j, sides + j, sides + i});
  }
  f.push_back(bottom);
  f.push_back(top);
  return {std::move(v), std::move(f)};
}

ConvexMesh parse_off(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
  }
  std::size_t pos = 0;
  auto next = [&]() -> const std::string& {
    if (pos >= tokens.size()) throw MeshError("OFF: unexpected end of file");
    return tokens[pos++];
  };
  if (next() != "OFF") throw MeshError("OFF: missing 'OFF' header");
  try {
    const int nv = std::stoi(next());
    const int nf = std::stoi(next());
    next();  // edge count, unused
    std::vector<Vec3> v(nv);
    for (auto& x : v)
      for (int k = 0; k < 3; ++k) x[k] = std::stod(next());
    std::vector<std::vector<int>> f(nf);
    for (auto& loop : f) {
      const int k = std::stoi(next());
      for (int i = 0; i < k; ++i) loop.push_back(std::stoi(next()));
    }
    return {std::move(v), std::move(f)};
  } catch (const std::invalid_argument&) {
    throw MeshError("OFF: malformed number");
  }
}

ConvexMesh read_off(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_off(ss.str());
  } catch (const MeshError& e) {
    throw MeshError(path.string() + ": " + e.what());
  }
}

void write_off(const std::filesystem::path& path, const ConvexMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write mesh '" + path.string() + "'");
  out << "OFF\n" << mesh.vertices().size() << ' ' << mesh.faces().size() << " 0\n";
  out << std::setprecision(17);
  for (const Vec3& v : mesh.vertices()) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.faces()) {
    out << f.size();
    for (int i : f) out << ' ' << i;
    out << '\n';
  }
}

}  // namespace graspedit
