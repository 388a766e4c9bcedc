#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "spcnet/errors.hpp"
#include "spcnet/model.hpp"

namespace spcnet {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size() || value.front() == '-') {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
  return static_cast<std::size_t>(v);
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size() || !std::isfinite(v)) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
  }
  return v;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  while (exp-- > 0) r *= base;
  return r;
}

}  // namespace

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::l1: return "1l";
    case LossMode::l2: return "2l";
    case LossMode::l4: return "4l";
  }
  return "4l";
}

LossMode parse_loss_mode(const std::string& text) {
  if (text == "1l" || text == "1L") return LossMode::l1;
  if (text == "2l" || text == "2L") return LossMode::l2;
  if (text == "4l" || text == "4L") return LossMode::l4;
  throw ConfigError("unknown loss mode '" + text + "' (expected 1l, 2l or 4l)");
}

ModelConfig ModelConfig::for_points(std::size_t total, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("missing ratio must lie strictly between 0 and 1");
  ModelConfig c;
  c.missing_count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
  c.partial_count = total - c.missing_count;
  c.missing_ratio = ratio;
  return c;
}

std::size_t ModelConfig::coarse_count() const {
  const std::size_t prod = std::accumulate(upsample.begin(), upsample.end(), std::size_t{1}, std::multiplies<>());
  return prod == 0 ? 0 : missing_count / prod;
}

std::size_t ModelConfig::stage_input_count(std::size_t stage) const {
  std::size_t n = coarse_count();
  for (std::size_t s = 0; s < stage && s < upsample.size(); ++s) n *= upsample[s];
  return n;
}

std::size_t ModelConfig::stage_partial_level(std::size_t stage) const {
  const std::size_t in = stage_input_count(stage);
  std::size_t level = 0;
  while (level <= 2 && ipow(K, level) * in != missing_count) ++level;
  if (level > 2) {
    throw ConfigError("SCM " + std::to_string(stage + 1) + " input of " + std::to_string(in) +
                      " points is not M, M/K or M/K^2");
  }
  if (partial_override == PartialOverride::pnk_pn && level == 1) return 0;
  if (partial_override == PartialOverride::pnkk_pn && level == 2) return 0;
  return level;
}

std::size_t ModelConfig::coarse_partial_level() const {
  return partial_override == PartialOverride::pnkk_pn ? 0 : 2;
}

std::size_t ModelConfig::partial_count_at(std::size_t level) const { return partial_count / ipow(K, level); }

std::size_t ModelConfig::width(std::size_t base) const {
  const auto w = std::llround(static_cast<double>(base) * width_scale);
  return w < 1 ? 1 : static_cast<std::size_t>(w);
}

void ModelConfig::validate() const {
  if (K < 1) throw ConfigError("K must be at least 1");
  if (scm_count < 1 || scm_count > 3) throw ConfigError("scm_count must be 1, 2 or 3");
  if (upsample.size() != scm_count) {
    throw ConfigError("upsample lists " + std::to_string(upsample.size()) + " factors for " +
                      std::to_string(scm_count) + " SCMs");
  }
  for (auto u : upsample)
    if (u < 1) throw ConfigError("upsample factors must be positive");
  if (missing_count < 1 || partial_count < 2) throw ConfigError("need at least 2 partial and 1 missing point");
  if (partial_count % (K * K) != 0 || partial_count / (K * K) < 2) {
    throw ConfigError("partial count " + std::to_string(partial_count) + " must be a multiple of K^2 = " +
                      std::to_string(K * K) + " with at least 2 points after down-sampling");
  }
  const std::size_t prod = std::accumulate(upsample.begin(), upsample.end(), std::size_t{1}, std::multiplies<>());
  if (missing_count % prod != 0) {
    throw ConfigError("missing count " + std::to_string(missing_count) +
                      " is not divisible by the upsample product " + std::to_string(prod));
  }
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(grid_count))));
  if (grid_count < 1 || side * side != grid_count) throw ConfigError("grid_count must be a perfect square");
  for (auto u : upsample)
    if (u > grid_count) throw ConfigError("upsample factor exceeds grid_count");
  if (!(grid_r > 0.0)) throw ConfigError("grid_r must be positive");
  if (knn_k < 1) throw ConfigError("knn_k must be at least 1");
  if (!(width_scale > 0.0)) throw ConfigError("width_scale must be positive");
  if (kernel_hidden < 1) throw ConfigError("kernel_hidden must be at least 1");
  if (!(missing_ratio > 0.0 && missing_ratio < 1.0)) throw ConfigError("missing_ratio must lie in (0,1)");
  for (std::size_t s = 0; s < scm_count; ++s) {
    const std::size_t whole = partial_count_at(stage_partial_level(s)) + stage_input_count(s);
    if (whole < 4) throw ConfigError("SCM " + std::to_string(s + 1) + " sees fewer than 4 points");
  }
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "partial_count=" << partial_count << '\n';
  out << "missing_count=" << missing_count << '\n';
  out << "K=" << K << '\n';
  out << "scm_count=" << scm_count << '\n';
  out << "upsample=";
  for (std::size_t i = 0; i < upsample.size(); ++i) out << (i ? "," : "") << upsample[i];
  out << '\n';
  out << "grid_count=" << grid_count << '\n';
  out << "grid_r=" << format_double(grid_r) << '\n';
  out << "knn_k=" << knn_k << '\n';
  out << "conv_kind=" << (conv_kind == layers::ConvKind::adapt ? "adapt" : "edge") << '\n';
  out << "vmlp_kind="
      << (vmlp_kind == layers::VmlpKind::vmlp           ? "vmlp"
          : vmlp_kind == layers::VmlpKind::pointnet_mlp ? "pointnet-mlp"
                                                        : "one-subnet")
      << '\n';
  out << "use_aggregation=" << (use_aggregation ? "true" : "false") << '\n';
  out << "sampling=" << (sampling == SamplingKind::fps ? "fps" : "rps") << '\n';
  out << "width_scale=" << format_double(width_scale) << '\n';
  out << "loss_mode=" << to_string(loss_mode) << '\n';
  out << "missing_ratio=" << format_double(missing_ratio) << '\n';
  out << "partial_override="
      << (partial_override == PartialOverride::none     ? "none"
          : partial_override == PartialOverride::pnk_pn ? "pnk-pn"
                                                        : "pnkk-pn")
      << '\n';
  out << "kernel_hidden=" << kernel_hidden << '\n';
  out << "use_bn=" << (use_bn ? "true" : "false") << '\n';
  return out.str();
}

void ModelConfig::set(const std::string& key, const std::string& value) {
  if (key == "partial_count") {
    partial_count = parse_count(key, value);
  } else if (key == "missing_count") {
    missing_count = parse_count(key, value);
  } else if (key == "K") {
    K = parse_count(key, value);
  } else if (key == "scm_count") {
    scm_count = parse_count(key, value);
  } else if (key == "upsample") {
    upsample.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) upsample.push_back(parse_count(key, trim(item)));
  } else if (key == "grid_count") {
    grid_count = parse_count(key, value);
  } else if (key == "grid_r") {
    grid_r = parse_real(key, value);
  } else if (key == "knn_k") {
    knn_k = parse_count(key, value);
  } else if (key == "conv_kind") {
    if (value == "adapt") conv_kind = layers::ConvKind::adapt;
    else if (value == "edge") conv_kind = layers::ConvKind::edge;
    else throw ConfigError("conv_kind must be adapt or edge");
  } else if (key == "vmlp_kind") {
    if (value == "vmlp") vmlp_kind = layers::VmlpKind::vmlp;
    else if (value == "pointnet-mlp") vmlp_kind = layers::VmlpKind::pointnet_mlp;
    else if (value == "one-subnet") vmlp_kind = layers::VmlpKind::one_subnet;
    else throw ConfigError("vmlp_kind must be vmlp, pointnet-mlp or one-subnet");
  } else if (key == "use_aggregation") {
    use_aggregation = parse_flag(key, value);
  } else if (key == "sampling") {
    if (value == "fps") sampling = SamplingKind::fps;
    else if (value == "rps") sampling = SamplingKind::rps;
    else throw ConfigError("sampling must be fps or rps");
  } else if (key == "width_scale") {
    width_scale = value == "toy" ? kToyWidthScale : parse_real(key, value);
  } else if (key == "loss_mode") {
    loss_mode = parse_loss_mode(value);
  } else if (key == "missing_ratio") {
    missing_ratio = parse_real(key, value);
  } else if (key == "partial_override") {
    if (value == "none") partial_override = PartialOverride::none;
    else if (value == "pnk-pn") partial_override = PartialOverride::pnk_pn;
    else if (value == "pnkk-pn") partial_override = PartialOverride::pnkk_pn;
    else throw ConfigError("partial_override must be none, pnk-pn or pnkk-pn");
  } else if (key == "kernel_hidden") {
    kernel_hidden = parse_count(key, value);
  } else if (key == "use_bn") {
    use_bn = parse_flag(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

}  // namespace spcnet
