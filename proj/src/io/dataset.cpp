#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "spcnet/dataset.hpp"
#include "spcnet/errors.hpp"

namespace spcnet {

std::size_t Dataset::points_per_shape() const {
  if (shapes.empty()) throw ArgumentError("dataset is empty");
  const std::size_t n = shapes.front().cloud.size();
  for (const auto& s : shapes) {
    if (s.cloud.size() != n) {
      throw ArgumentError("shape '" + s.name + "' has " + std::to_string(s.cloud.size()) + " points, expected " +
                          std::to_string(n));
    }
  }
  return n;
}

namespace {

constexpr double kPi = std::numbers::pi;

Point3 unit_direction(Rng& rng) {
  for (;;) {
    const Point3 v{rng.normal(), rng.normal(), rng.normal()};
    const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (len > 1e-12) return {v[0] / len, v[1] / len, v[2] / len};
  }
}

// Axis poles first, then random directions, every one paired with its
// antipode: the centroid is exactly the origin and the largest coordinate
// is exactly the radius.
PointCloud sphere(std::size_t n, Rng& rng) {
  const double r = rng.uniform(0.5, 1.5);
  PointCloud c;
  static const Point3 poles[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (std::size_t i = 0; c.size() + 2 <= n; ++i) {
    const Point3 u = i < 3 ? poles[i] : unit_direction(rng);
    c.push_back({r * u[0], r * u[1], r * u[2]});
    c.push_back({-r * u[0], -r * u[1], -r * u[2]});
  }
  if (c.size() < n) c.push_back({r, 0.0, 0.0});
  return c;
}

PointCloud box(std::size_t n, Rng& rng) {
  const double s[3] = {1.0, rng.uniform(0.6, 1.4), rng.uniform(0.6, 1.4)};
  // Face pairs normal to x, y, z weighted by area.
  const double area[3] = {s[1] * s[2], s[0] * s[2], s[0] * s[1]};
  const double total = area[0] + area[1] + area[2];
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    double pick = rng.uniform() * total;
    int axis = 0;
    while (axis < 2 && pick >= area[axis]) pick -= area[axis++];
    Point3 p{};
    for (int a = 0; a < 3; ++a) p[a] = rng.uniform(-0.5, 0.5) * s[a];
    p[axis] = (rng.below(2) == 0 ? -0.5 : 0.5) * s[axis];
    c.push_back(p);
  }
  return c;
}

PointCloud cylinder(std::size_t n, Rng& rng) {
  const double r = rng.uniform(0.3, 0.7);
  const double h = rng.uniform(0.8, 2.0);
  const double side = 2.0 * kPi * r * h, cap = kPi * r * r;
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = rng.uniform() * (side + 2.0 * cap);
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    if (pick < side) {
      c.push_back({r * std::cos(theta), r * std::sin(theta), rng.uniform(-0.5, 0.5) * h});
    } else {
      const double rr = r * std::sqrt(rng.uniform());
      c.push_back({rr * std::cos(theta), rr * std::sin(theta), (pick < side + cap ? -0.5 : 0.5) * h});
    }
  }
  return c;
}

PointCloud cone(std::size_t n, Rng& rng) {
  const double r = rng.uniform(0.4, 0.8);
  const double h = rng.uniform(0.8, 1.6);
  const double slant = std::sqrt(r * r + h * h);
  const double side = kPi * r * slant, base = kPi * r * r;
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    if (rng.uniform() * (side + base) < side) {
      const double t = std::sqrt(rng.uniform());  // distance from the apex, area-uniform
      c.push_back({t * r * std::cos(theta), t * r * std::sin(theta), h * (1.0 - t)});
    } else {
      const double rr = r * std::sqrt(rng.uniform());
      c.push_back({rr * std::cos(theta), rr * std::sin(theta), 0.0});
    }
  }
  return c;
}

PointCloud torus(std::size_t n, Rng& rng) {
  const double R = 1.0;
  const double r = rng.uniform(0.2, 0.45);
  PointCloud c;
  while (c.size() < n) {
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    // Accept the tube angle with probability proportional to the local ring radius.
    if (rng.uniform() * (R + r) > R + r * std::cos(phi)) continue;
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    const double ring = R + r * std::cos(phi);
    c.push_back({ring * std::cos(theta), ring * std::sin(theta), r * std::sin(phi)});
  }
  return c;
}

PointCloud plane(std::size_t n, Rng& rng) {
  const double w = 1.0, d = rng.uniform(0.4, 1.0);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({rng.uniform(-0.5, 0.5) * w, rng.uniform(-0.5, 0.5) * d, 0.0});
  return c;
}

std::string shape_file(std::size_t index, const std::string& kind) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu_", index);
  return buf + kind + ".xyz";
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

PointCloud sample_shape(const std::string& kind, std::size_t points, Rng& rng) {
  if (points < 2) throw ArgumentError("a shape needs at least two points");
  PointCloud raw;
  if (kind == "sphere") raw = sphere(points, rng);
  else if (kind == "cube") raw = box(points, rng);
  else if (kind == "cylinder") raw = cylinder(points, rng);
  else if (kind == "cone") raw = cone(points, rng);
  else if (kind == "torus") raw = torus(points, rng);
  else if (kind == "plane") raw = plane(points, rng);
  else throw ArgumentError("unknown shape kind '" + kind + "'");
  return geometry::normalize_cloud(raw);
}

Dataset generate_shapes(const std::vector<std::string>& kinds, std::size_t count, std::size_t points,
                        std::uint64_t seed) {
  if (kinds.empty()) throw ArgumentError("no shape kinds given");
  for (const auto& k : kinds) {
    if (std::find(shape_kinds().begin(), shape_kinds().end(), k) == shape_kinds().end()) {
      throw ArgumentError("unknown shape kind '" + k + "'");
    }
  }
  Dataset data;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string& kind = kinds[i % kinds.size()];
    Rng rng(derive_seed(seed, "shape/" + std::to_string(i)));
    const std::string file = shape_file(i, kind);
    data.shapes.push_back({file.substr(0, file.size() - 4), kind, sample_shape(kind, points, rng)});
  }
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string manifest = "file,category\n";
  for (const auto& s : data.shapes) {
    const std::string file = s.name + ".xyz";
    write_xyz(s.cloud, dir / file);
    manifest += file + "," + s.category + "\n";
  }
  std::ofstream out(dir / "manifest.csv", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.csv", std::ios::binary);
  if (!in) throw std::runtime_error("no manifest.csv in " + dir.string());
  Dataset data;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || (lineno == 1 && line == "file,category")) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(lineno, "manifest line lacks a category");
    const std::string file = trim(line.substr(0, comma));
    const std::filesystem::path path(file);
    data.shapes.push_back({path.stem().string(), trim(line.substr(comma + 1)), read_xyz(dir / path)});
  }
  if (data.empty()) throw ArgumentError("dataset in " + dir.string() + " is empty");
  data.points_per_shape();
  return data;
}

Dataset generate_dataset(const std::vector<std::string>& kinds, std::size_t count, std::size_t points,
                         std::uint64_t seed, const std::filesystem::path& dir) {
  Dataset data = generate_shapes(kinds, count, points, seed);
  save_dataset(data, dir);
  return data;
}

Dataset ingest_shapenet_part(const std::filesystem::path& dir, std::size_t points, std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ArgumentError(dir.string() + " is not a directory");
  std::vector<fs::path> categories;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) categories.push_back(entry.path());
  std::sort(categories.begin(), categories.end());

  Dataset data;
  for (const auto& cat : categories) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(cat))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      try {
        const PointCloud raw = read_xyz(file, true);
        if (raw.size() < 2) throw ArgumentError("fewer than two points");
        std::vector<std::size_t> idx;
        if (raw.size() >= points) {
          Rng rng(derive_seed(seed, file.lexically_relative(dir).generic_string()));
          idx = geometry::rps(raw, points, rng);
        } else {
          const auto order = geometry::fps(raw, raw.size());
          for (std::size_t i = 0; i < points; ++i) idx.push_back(order[i % order.size()]);
        }
        data.shapes.push_back({file.stem().string(), cat.filename().string(),
                               geometry::normalize_cloud(raw.select(idx))});
      } catch (const std::exception& e) {
        std::cerr << "warning: skipping " << file.string() << ": " << e.what() << '\n';
      }
    }
  }
  if (data.empty()) throw ArgumentError("no usable point files under " + dir.string());
  return data;
}

}  // namespace spcnet
