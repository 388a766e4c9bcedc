#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "spcnet/errors.hpp"
#include "spcnet/training.hpp"

namespace spcnet {

PointCloud complete_cloud(const Network& net, const PointCloud& partial, StageOutputs* stages) {
  if (partial.size() != net.config.partial_count) {
    throw ConfigError("complete: the network expects " + std::to_string(net.config.partial_count) +
                      " partial points, got " + std::to_string(partial.size()));
  }
  NormState norms = net.norms;
  layers::Context ctx{Mode::eval, &norms, 0};
  StageOutputs out = spcnet_forward(partial.to_tensor(), net.params, net.config, ctx);
  PointCloud result = partial.append(PointCloud::from_tensor(out.final_stage()));
  if (stages != nullptr) *stages = std::move(out);
  return result;
}

EvalReport evaluate(const Checkpoint& ckpt, const Dataset& data, const Point3& viewpoint, bool stagewise) {
  if (ckpt.nets.empty()) throw ConfigError("evaluate: checkpoint holds no network");
  if (data.empty()) throw ArgumentError("evaluate: empty dataset");
  const Network& net = ckpt.nets.front();
  const ModelConfig& cfg = net.config;
  const std::size_t total = data.points_per_shape();
  if (total != cfg.partial_count + cfg.missing_count) {
    throw ConfigError("evaluate: checkpoint expects " + std::to_string(cfg.partial_count + cfg.missing_count) +
                      " points per shape, dataset has " + std::to_string(total));
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();

  struct Acc {
    std::size_t count = 0;
    double cd = 0.0;
    std::array<double, 4> stage{};
  };
  std::map<std::string, Acc> by_category;
  for (const auto& shape : data.shapes) {
    const auto split = geometry::viewpoint_split(shape.cloud, viewpoint, cfg.missing_ratio);
    StageOutputs out;
    const PointCloud completed = complete_cloud(net, split.partial, &out);
    Acc& acc = by_category[shape.category];
    ++acc.count;
    acc.cd += 1000.0 * chamfer_value(completed, split.partial.append(split.missing));
    if (stagewise) {
      // Columns coarse, mid, fine, final; stages a short chain lacks are NaN.
      const std::size_t s = out.stages.size();
      const std::array<long, 4> pick{0, s >= 3 ? 1L : -1L, s >= 4 ? 2L : -1L, static_cast<long>(s) - 1};
      for (std::size_t c = 0; c < 4; ++c) {
        acc.stage[c] += pick[c] < 0 ? nan
                                    : 1000.0 * chamfer_value(PointCloud::from_tensor(out.stages[pick[c]]),
                                                             split.missing);
      }
    }
  }

  EvalReport report;
  report.stagewise = stagewise;
  report.overall.category = "overall";
  for (const auto& [category, acc] : by_category) {
    EvalRow row;
    row.category = category;
    row.count = acc.count;
    const double inv = 1.0 / static_cast<double>(acc.count);
    row.cd_x1000 = acc.cd * inv;
    for (std::size_t c = 0; c < 4; ++c) row.stage_x1000[c] = acc.stage[c] * inv;
    report.rows.push_back(row);
    report.overall.count += acc.count;
    report.overall.cd_x1000 += static_cast<double>(acc.count) * row.cd_x1000;
    for (std::size_t c = 0; c < 4; ++c)
      report.overall.stage_x1000[c] += static_cast<double>(acc.count) * row.stage_x1000[c];
  }
  const double inv_total = 1.0 / static_cast<double>(report.overall.count);
  report.overall.cd_x1000 *= inv_total;
  for (auto& v : report.overall.stage_x1000) v *= inv_total;
  return report;
}

namespace {

std::string cell(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string format_report_csv(const EvalReport& report) {
  std::string out = report.stagewise ? "category,count,cd_coarse,cd_mid,cd_fine,cd_final\n" : "category,count,cd_x1000\n";
  auto emit = [&](const EvalRow& row) {
    out += row.category + "," + std::to_string(row.count);
    if (report.stagewise) {
      for (double v : row.stage_x1000) out += "," + cell(v);
    } else {
      out += "," + cell(row.cd_x1000);
    }
    out += "\n";
  };
  for (const auto& row : report.rows) emit(row);
  emit(report.overall);
  return out;
}

}  // namespace spcnet
