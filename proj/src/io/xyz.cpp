#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "spcnet/dataset.hpp"
#include "spcnet/errors.hpp"

namespace spcnet {

namespace {

bool parse_number(const std::string& token, double& out) {
  const char* begin = token.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end != begin && *end == '\0' && std::isfinite(out);
}

}  // namespace

PointCloud parse_xyz(const std::string& text, bool allow_extra) {
  PointCloud cloud;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    if (tokens.size() < 3 || (!allow_extra && tokens.size() != 3)) {
      throw ParseError(lineno, "expected 3 coordinates, found " + std::to_string(tokens.size()) + " fields");
    }
    Point3 p{};
    for (int a = 0; a < 3; ++a) {
      if (!parse_number(tokens[a], p[a])) throw ParseError(lineno, "'" + tokens[a] + "' is not a finite number");
    }
    cloud.push_back(p);
  }
  return cloud;
}

PointCloud read_xyz(const std::filesystem::path& path, bool allow_extra) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_xyz(buf.str(), allow_extra);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + std::string(e.what()).substr(std::string(e.what()).find(": ") + 2));
  }
}

std::string format_xyz(const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * 48);
  char buf[96];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3 p = cloud[i];
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p[0], p[1], p[2]);
    out += buf;
  }
  return out;
}

void write_xyz(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_xyz(cloud);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace spcnet
