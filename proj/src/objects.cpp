#include "graspedit/objects.hpp"

#include "graspedit/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

namespace graspedit {

namespace {

struct FamilyName {
  ObjectFamily family;
  const char* name;
};

constexpr FamilyName kFamilyNames[] = {
    {ObjectFamily::kBox, "box"},
    {ObjectFamily::kCylinderPrism, "cylinder-prism"},
    {ObjectFamily::kConvexHull, "convex-hull"},
    {ObjectFamily::kFlatPlate, "flat-plate"},
    {ObjectFamily::kSmallToken, "small-token"},
};

ConvexMesh recentre(const ConvexMesh& m) { return m.translated(-m.aabb_center()); }

/// Rotates the hull so its largest face points down, giving it a face to
/// rest on.
ConvexMesh rest_on_largest_face(const ConvexMesh& m) {
  std::vector<double> face_area(m.faces().size(), 0.0);
  for (std::size_t t = 0; t < m.triangles().size(); ++t)
    face_area[m.triangle_face()[t]] += m.triangle_areas()[t];
  // Coplanar triangles of a hull share a normal; merge their areas.
  int best = 0;
  double best_area = -1.0;
  for (std::size_t f = 0; f < m.planes().size(); ++f) {
    double a = 0.0;
    for (std::size_t g = 0; g < m.planes().size(); ++g)
      if (m.planes()[g].normal.dot(m.planes()[f].normal) > 1.0 - 1e-9) a += face_area[g];
    if (a > best_area) {
      best_area = a;
      best = static_cast<int>(f);
    }
  }
  const Eigen::Quaterniond q =
      Eigen::Quaterniond::FromTwoVectors(m.planes()[best].normal, -Vec3::UnitZ());
  std::vector<Vec3> v = m.vertices();
  for (Vec3& x : v) x = q * x;
  return {std::move(v), m.faces()};
}

}  // namespace

std::string to_string(ObjectFamily f) {
  for (const auto& fn : kFamilyNames)
    if (fn.family == f) return fn.name;
  return "unknown";
}

ObjectFamily parse_family(const std::string& name) {
  for (const auto& fn : kFamilyNames)
    if (name == fn.name) return fn.family;
  throw std::invalid_argument("unknown object family '" + name + "'");
}

const std::vector<ObjectFamily>& all_families() {
  static const std::vector<ObjectFamily> f = {ObjectFamily::kBox, ObjectFamily::kCylinderPrism,
                                              ObjectFamily::kConvexHull, ObjectFamily::kFlatPlate,
                                              ObjectFamily::kSmallToken};
  return f;
}

Vec3 ObjectInstance::center() const {
  return Transform::from_pose(pose).apply_point(asset->mesh.aabb_center());
}

double ObjectInstance::signed_distance(const Vec3& world) const {
  const Transform inv = invert(Transform::from_pose(pose));
  return asset->mesh.signed_distance(inv.apply_point(world));
}

double ObjectInstance::lowest_z() const {
  const Transform t = Transform::from_pose(pose);
  double z = std::numeric_limits<double>::infinity();
  for (const Vec3& v : asset->mesh.vertices()) z = std::min(z, t.apply_point(v).z());
  return z;
}

PointCloud sample_point_cloud(const ConvexMesh& mesh, int n, std::uint64_t seed) {
  PointCloud cloud;
  cloud.reserve(n);
  if (static_cast<int>(mesh.vertices().size()) <= n)
    cloud.insert(cloud.end(), mesh.vertices().begin(), mesh.vertices().end());
  const auto& areas = mesh.triangle_areas();
  std::vector<double> cdf(areas.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < areas.size(); ++i) cdf[i] = (acc += areas[i]);
  Rng rng(seed);
  while (static_cast<int>(cloud.size()) < n) {
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const std::size_t t = std::min<std::size_t>(it - cdf.begin(), areas.size() - 1);
    const auto& tri = mesh.triangles()[t];
    const double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
    cloud.push_back((1.0 - r1) * mesh.vertices()[tri[0]] + r1 * (1.0 - r2) * mesh.vertices()[tri[1]] +
                    r1 * r2 * mesh.vertices()[tri[2]]);
  }
  return cloud;
}

ConvexMesh generate_object_mesh(ObjectFamily family, std::uint64_t seed) {
  Rng rng(seed);
  switch (family) {
    case ObjectFamily::kBox: {
      const Vec3 size(rng.uniform(0.03, 0.10), rng.uniform(0.03, 0.10), rng.uniform(0.03, 0.12));
      return make_box(size);
    }
    case ObjectFamily::kCylinderPrism: {
      const int sides = 6 + static_cast<int>(rng.below(7));
      return make_prism(sides, rng.uniform(0.018, 0.045), rng.uniform(0.04, 0.14));
    }
    case ObjectFamily::kConvexHull: {
      const Vec3 half(rng.uniform(0.018, 0.05), rng.uniform(0.018, 0.05), rng.uniform(0.018, 0.05));
      std::vector<Vec3> pts;
      const int n = 12 + static_cast<int>(rng.below(5));
      for (int i = 0; i < n; ++i) {
        Vec3 d(rng.normal(), rng.normal(), rng.normal());
        d.normalize();
        pts.push_back(rng.uniform(0.75, 1.0) * d.cwiseProduct(half));
      }
      return recentre(rest_on_largest_face(convex_hull(pts)));
    }
    case ObjectFamily::kFlatPlate: {
      const double t = rng.uniform(0.006, 0.014);
      if (rng.uniform() < 0.5) return make_box(Vec3(rng.uniform(0.04, 0.11), rng.uniform(0.03, 0.09), t));
      const int sides = 6 + static_cast<int>(rng.below(5));
      return make_prism(sides, rng.uniform(0.02, 0.045), t);
    }
    case ObjectFamily::kSmallToken: {
      const int sides = 5 + static_cast<int>(rng.below(6));
      // Circumscribed diameter stays below 3.5 cm.
      return make_prism(sides, rng.uniform(0.0105, 0.0170), rng.uniform(0.03, 0.045));
    }
  }
  throw std::invalid_argument("generate_object_mesh: bad family");
}

AssetPtr make_asset(std::string id, ObjectFamily family, ConvexMesh mesh, double friction,
                    std::uint64_t cloud_seed) {
  auto a = std::make_shared<ObjectAsset>();
  a->id = std::move(id);
  a->family = family;
  a->mesh = recentre(mesh);
  a->point_cloud = sample_point_cloud(a->mesh, kCloudPoints, cloud_seed);
  a->friction = friction;
  a->cloud_seed = cloud_seed;
  return a;
}

AssetPtr make_reference_cube(double size) {
  return make_asset("reference_cube", ObjectFamily::kBox, make_box(Vec3::Constant(size)),
                    kDefaultFriction, 0);
}

ObjectDataset generate_dataset(int n, const std::vector<ObjectFamily>& families, std::uint64_t seed,
                               const std::string& id_prefix) {
  if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
  if (families.empty()) throw std::invalid_argument("generate_dataset: no families given");
  ObjectDataset ds;
  for (int i = 0; i < n; ++i) {
    const ObjectFamily fam = families[i % families.size()];
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(i));
    char id[64];
    std::snprintf(id, sizeof id, "%s_%03d_%s", id_prefix.c_str(), i, to_string(fam).c_str());
    ds.objects.push_back(make_asset(id, fam, generate_object_mesh(fam, s), kDefaultFriction,
                                    derive_seed(s, 1)));
  }
  return ds;
}

void write_dataset(const std::filesystem::path& dir, const ObjectDataset& dataset) {
  using nlohmann::json;
  std::filesystem::create_directories(dir);
  json manifest = json::array();
  for (std::size_t i = 0; i < dataset.objects.size(); ++i) {
    const ObjectAsset& a = *dataset.objects[i];
    const std::string mesh_file = a.id + ".off";
    write_off(dir / mesh_file, a.mesh);
    json sidecar = {{"friction", a.friction}, {"scale", a.scale}, {"family", to_string(a.family)}};
    std::ofstream(dir / (a.id + ".json")) << sidecar.dump(2) << '\n';
    manifest.push_back({{"id", a.id},
                        {"mesh", mesh_file},
                        {"sidecar", a.id + ".json"},
                        {"family", to_string(a.family)},
                        {"scale", a.scale},
                        {"friction", a.friction},
                        {"cloud_seed", a.cloud_seed}});
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

ObjectDataset load_dataset(const std::filesystem::path& manifest_path) {
  using nlohmann::json;
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest '" + manifest_path.string() + "'");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw std::runtime_error(manifest_path.string() + ": " + e.what());
  }
  const auto dir = manifest_path.parent_path();
  ObjectDataset ds;
  std::set<std::string> ids;
  for (const auto& e : manifest) {
    const std::string id = e.at("id").get<std::string>();
    if (!ids.insert(id).second) throw std::runtime_error("manifest: duplicate id '" + id + "'");
    double scale = e.value("scale", 1.0);
    double friction = e.value("friction", kDefaultFriction);
    if (e.contains("sidecar")) {
      std::ifstream sc(dir / e["sidecar"].get<std::string>());
      if (sc) {
        json side;
        sc >> side;
        scale = side.value("scale", scale);
        friction = side.value("friction", friction);
      }
    }
    ConvexMesh mesh = read_off(dir / e.at("mesh").get<std::string>());
    if (scale != 1.0) mesh = mesh.scaled(scale);
    auto asset = std::const_pointer_cast<ObjectAsset>(
        make_asset(id, parse_family(e.value("family", std::string("convex-hull"))), mesh, friction,
                   e.value("cloud_seed", std::uint64_t{0})));
    asset->scale = scale;
    ds.objects.push_back(asset);
  }
  return ds;
}

}  // namespace graspedit
