#pragma once

#include "graspedit/mesh.hpp"
#include "graspedit/se3.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace graspedit {

inline constexpr int kCloudPoints = 512;
inline constexpr double kDefaultFriction = 1.0;

enum class ObjectFamily { kBox, kCylinderPrism, kConvexHull, kFlatPlate, kSmallToken };

std::string to_string(ObjectFamily f);
/// Accepts "box", "cylinder-prism", "convex-hull", "flat-plate",
/// "small-token". Throws std::invalid_argument otherwise.
ObjectFamily parse_family(const std::string& name);
const std::vector<ObjectFamily>& all_families();

using PointCloud = std::vector<Vec3>;

/// A mesh in its own object frame (AABB centred at the origin), shared by
/// every scene that instantiates it.
struct ObjectAsset {
  std::string id;
  ObjectFamily family = ObjectFamily::kBox;
  ConvexMesh mesh;
  PointCloud point_cloud;  // object frame, kCloudPoints entries
  double friction = kDefaultFriction;
  double scale = 1.0;
  std::uint64_t cloud_seed = 0;
};

using AssetPtr = std::shared_ptr<const ObjectAsset>;

struct ObjectInstance {
  AssetPtr asset;
  Pose6D pose;  // object frame -> world

  const ConvexMesh& mesh() const { return asset->mesh; }
  const PointCloud& point_cloud() const { return asset->point_cloud; }
  double friction() const { return asset->friction; }
  /// Geometric centre in world frame (the object-frame AABB centre).
  Vec3 center() const;
  /// Signed distance of a world point.
  double signed_distance(const Vec3& world) const;
  /// Lowest world z over the mesh vertices.
  double lowest_z() const;
};

/// Point cloud sampling: every vertex (when there are at most n) plus
/// area-weighted uniform surface samples.
PointCloud sample_point_cloud(const ConvexMesh& mesh, int n, std::uint64_t seed);

ConvexMesh generate_object_mesh(ObjectFamily family, std::uint64_t seed);

struct ObjectDataset {
  std::vector<AssetPtr> objects;

  std::size_t size() const { return objects.size(); }
  bool empty() const { return objects.empty(); }
};

/// n objects cycling through `families`, reproducible per seed.
ObjectDataset generate_dataset(int n, const std::vector<ObjectFamily>& families, std::uint64_t seed,
                               const std::string& id_prefix = "obj");

/// Writes <dir>/manifest.json, <dir>/<id>.off and <dir>/<id>.json sidecars.
void write_dataset(const std::filesystem::path& dir, const ObjectDataset& dataset);
/// Loads a manifest written by write_dataset (point clouds are resampled
/// deterministically from the mesh).
ObjectDataset load_dataset(const std::filesystem::path& manifest);

/// Recording object for the scripted demonstrations: a 6 cm cube.
AssetPtr make_reference_cube(double size = 0.06);
AssetPtr make_asset(std::string id, ObjectFamily family, ConvexMesh mesh,
                    double friction = kDefaultFriction, std::uint64_t cloud_seed = 0);

}  // namespace graspedit
