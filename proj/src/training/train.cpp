#include <cmath>
#include <cstdio>

#include "spcnet/errors.hpp"
#include "spcnet/training.hpp"

namespace spcnet {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr decay must lie in (0,1]");
  if (!(missing_ratio > 0.0 && missing_ratio < 1.0)) throw ConfigError("missing ratio must lie in (0,1)");
  weights.validate();
}

std::string format_trace_line(const EpochRecord& r, LossMode mode) {
  const std::size_t terms = mode == LossMode::l1 ? 1 : mode == LossMode::l2 ? 2 : 4;
  std::string line = std::to_string(r.epoch);
  char buf[40];
  for (std::size_t t = 0; t < terms; ++t) {
    std::snprintf(buf, sizeof buf, ",%.17g", r.loss[t]);
    line += buf;
  }
  std::snprintf(buf, sizeof buf, ",%.17g", r.total);
  return line + buf;
}

namespace {

NetRef ref(Network& net) { return {&net.params, &net.config, &net.norms}; }

std::string sample_tag(std::size_t epoch, std::size_t shape) {
  return "sample/" + std::to_string(epoch) + "/" + std::to_string(shape);
}

}  // namespace

TrainResult train(const Dataset& data, const ModelConfig& model, const TrainConfig& tc, const EpochCallback& on_epoch) {
  tc.validate();
  if (data.empty()) throw ArgumentError("train: empty dataset");
  const std::size_t total = data.points_per_shape();

  ModelConfig forward = model;
  const ModelConfig counts = ModelConfig::for_points(total, tc.missing_ratio);
  forward.partial_count = counts.partial_count;
  forward.missing_count = counts.missing_count;
  forward.missing_ratio = tc.missing_ratio;
  forward.loss_mode = tc.loss_mode;
  forward.validate();

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck.meta = {tc.epochs, tc.seed, tc.loss_mode, tc.batch_size, tc.lr, tc.lr_decay};
  ck.nets.push_back({forward, init_params(forward, derive_seed(tc.seed, "net0")), init_norms(forward), {}});
  const bool joint = tc.loss_mode != LossMode::l1 && forward.partial_count != forward.missing_count;
  if (joint) {
    ModelConfig reverse = forward;
    reverse.partial_count = forward.missing_count;
    reverse.missing_count = forward.partial_count;
    reverse.missing_ratio = 1.0 - forward.missing_ratio;
    reverse.validate();
    ck.nets.push_back({reverse, init_params(reverse, derive_seed(tc.seed, "net1")), init_norms(reverse), {}});
  }

  const auto corners = geometry::cube_corner_viewpoints();
  Rng viewpoints(derive_seed(tc.seed, "viewpoints"));
  const std::size_t n = data.size();

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const double progress = tc.epochs == 1 ? 0.0 : static_cast<double>(epoch - 1) / static_cast<double>(tc.epochs - 1);
    const AdamOptions adam{tc.lr * std::pow(tc.lr_decay, progress)};
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t start = 0; start < n; start += tc.batch_size) {
      const std::size_t stop = std::min(n, start + tc.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      for (auto& net : ck.nets) net.params.zero_grad();
      for (std::size_t i = start; i < stop; ++i) {
        const Point3& vp = corners[viewpoints.below(corners.size())];
        const auto split = geometry::viewpoint_split(data.shapes[i].cloud, vp, tc.missing_ratio);
        const Tensor partial = split.partial.to_tensor();
        const Tensor missing = split.missing.to_tensor();
        const NetRef a = ref(ck.nets[0]);
        const NetRef b = joint ? ref(ck.nets[1]) : a;
        const CycleLoss loss = cycle_total_loss(a, b, partial, missing, tc.weights, tc.loss_mode, Mode::train,
                                                derive_seed(tc.seed, sample_tag(epoch, i)));
        backward(scale(loss.total, inv_batch));
        for (std::size_t t = 0; t < 4; ++t)
          if (loss.terms[t].defined()) rec.loss[t] += loss.terms[t].item();
        rec.total += loss.total.item();
        rec.cd_final += chamfer(loss.direct.final_stage().detach(), missing).item();
      }
      for (auto& net : ck.nets) adam_step(net.params, net.adam, adam);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& v : rec.loss) v *= inv_n;
    rec.total *= inv_n;
    rec.cd_final *= inv_n;
    result.trace.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  for (auto& net : ck.nets) {
    net.params.zero_grad();
    quantize_to_float(net);
  }
  return result;
}

}  // namespace spcnet
