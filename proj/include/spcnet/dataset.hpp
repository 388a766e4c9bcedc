#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spcnet/geometry.hpp"

namespace spcnet {

struct LabeledShape {
  std::string name;      // file stem
  std::string category;
  PointCloud cloud;
};

struct Dataset {
  std::vector<LabeledShape> shapes;

  bool empty() const { return shapes.empty(); }
  std::size_t size() const { return shapes.size(); }
  /// Common point count; throws ArgumentError if shapes disagree or the set is empty.
  std::size_t points_per_shape() const;
};

// --- .xyz files ---------------------------------------------------------------

/// One "x y z" per line; '#' lines and blank lines are skipped. Extra
/// columns are rejected unless allow_extra is set.
PointCloud parse_xyz(const std::string& text, bool allow_extra = false);
PointCloud read_xyz(const std::filesystem::path& path, bool allow_extra = false);
/// Nine significant digits per coordinate, '\n' line endings.
std::string format_xyz(const PointCloud& cloud);
void write_xyz(const PointCloud& cloud, const std::filesystem::path& path);

// --- procedural shapes --------------------------------------------------------

inline const std::vector<std::string>& shape_kinds() {
  static const std::vector<std::string> kinds{"sphere", "cube", "cylinder", "cone", "torus", "plane"};
  return kinds;
}

/// Uniform surface samples of one jittered shape, normalised.
PointCloud sample_shape(const std::string& kind, std::size_t points, Rng& rng);

/// `count` shapes cycling through `kinds`, seeded per shape.
Dataset generate_shapes(const std::vector<std::string>& kinds, std::size_t count, std::size_t points,
                        std::uint64_t seed);

/// Writes one .xyz per shape plus manifest.csv ("file,category").
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// generate_shapes followed by save_dataset.
Dataset generate_dataset(const std::vector<std::string>& kinds, std::size_t count, std::size_t points,
                         std::uint64_t seed, const std::filesystem::path& dir);

/// Category subfolders of ASCII point files. Each cloud is resampled to
/// `points` (random subset if large enough, else padded in FPS order) and
/// normalised. Unreadable files are skipped with a warning on stderr.
Dataset ingest_shapenet_part(const std::filesystem::path& dir, std::size_t points, std::uint64_t seed);

}  // namespace spcnet
