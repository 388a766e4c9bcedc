#include "spcnet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "spcnet/checkpoint.hpp"
#include "spcnet/dataset.hpp"
#include "spcnet/errors.hpp"
#include "spcnet/kernels.hpp"
#include "spcnet/training.hpp"

namespace spcnet::cli {

namespace fs = std::filesystem;

ModelConfig apply_variant(ModelConfig c, const std::string& variant) {
  if (variant == "scm1") {
    c.scm_count = 1;
    c.upsample = {c.K * c.K};
  } else if (variant == "scm2") {
    c.scm_count = 2;
    c.upsample = {c.K, c.K};
  } else if (variant == "pointnet-mlp") {
    c.vmlp_kind = layers::VmlpKind::pointnet_mlp;
  } else if (variant == "one-subnet") {
    c.vmlp_kind = layers::VmlpKind::one_subnet;
  } else if (variant == "no-agg") {
    c.use_aggregation = false;
  } else if (variant == "edge-conv") {
    c.conv_kind = layers::ConvKind::edge;
  } else if (variant == "rps") {
    c.sampling = SamplingKind::rps;
  } else if (variant == "pnk-pn") {
    c.partial_override = PartialOverride::pnk_pn;
  } else if (variant == "pnkk-pn") {
    c.partial_override = PartialOverride::pnkk_pn;
  } else {
    throw ArgumentError("unknown ablation variant '" + variant + "'");
  }
  return c;
}

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

Point3 parse_viewpoint(const std::string& s) {
  const auto parts = split_list(s);
  if (parts.size() != 3) throw ArgumentError("viewpoint must be \"x,y,z\", got '" + s + "'");
  Point3 p{};
  for (int a = 0; a < 3; ++a) {
    std::size_t used = 0;
    p[a] = std::stod(parts[a], &used);
    if (used != parts[a].size()) throw ArgumentError("viewpoint must be \"x,y,z\", got '" + s + "'");
  }
  return p;
}

struct TrainArgs {
  std::string data, out, config_file, trace, loss_mode = "4l", width_scale;
  std::size_t epochs = 1, batch_size = 24;
  std::uint64_t seed = 0;
  double ratio = 0.5, lr = 1e-4, lr_decay = 1.0;
};

void add_train_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--data", a.data, "dataset directory")->required();
  cmd->add_option("--out", a.out, "checkpoint to write")->required();
  cmd->add_option("--epochs", a.epochs, "training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "random seed");
  cmd->add_option("--missing-ratio", a.ratio, "fraction of each shape removed")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--loss-mode", a.loss_mode, "1l, 2l or 4l")->check(CLI::IsMember({"1l", "2l", "4l"}));
  cmd->add_option("--config", a.config_file, "model config file (key=value lines)");
  cmd->add_option("--trace", a.trace, "loss trace file (default: stdout)");
  cmd->add_option("--batch-size", a.batch_size, "shapes per optimiser step")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", a.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--lr-decay", a.lr_decay, "final learning rate as a fraction of --lr")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--width-scale", a.width_scale, "layer width multiplier, or 'toy'");
}

int do_train(const TrainArgs& a, const std::string& variant) {
  ModelConfig model;
  if (!a.config_file.empty()) model = ModelConfig::from_text(read_text(a.config_file));
  if (!a.width_scale.empty()) model.set("width_scale", a.width_scale);
  if (!variant.empty()) model = apply_variant(model, variant);

  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.lr = a.lr;
  tc.lr_decay = a.lr_decay;
  tc.seed = a.seed;
  tc.loss_mode = parse_loss_mode(a.loss_mode);
  tc.missing_ratio = a.ratio;

  const Dataset data = load_dataset(a.data);
  std::ofstream trace_file;
  if (!a.trace.empty()) {
    trace_file.open(a.trace, std::ios::binary | std::ios::trunc);
    if (!trace_file) throw std::runtime_error("cannot write " + a.trace);
  }
  std::ostream& trace = a.trace.empty() ? std::cout : trace_file;
  const TrainResult result = train(data, model, tc, [&](const EpochRecord& r) {
    trace << format_trace_line(r, tc.loss_mode) << '\n';
    trace.flush();
  });
  save_checkpoint(result.checkpoint, a.out);
  return kExitOk;
}

const char* const kStageNames[4] = {"coarse", "mid", "fine", "final"};

int do_complete(const std::string& ckpt_path, const std::string& in, const std::string& out,
                const std::string& stage_dir) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.nets.empty()) throw ConfigError("checkpoint holds no network");
  const std::string text = read_text(in);
  const PointCloud partial = parse_xyz(text);
  StageOutputs stages;
  const PointCloud completed = complete_cloud(ckpt.nets.front(), partial, &stages);

  // The partial points are copied line for line; only the prediction is formatted.
  std::string result;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    result += line + '\n';
  }
  const auto all = completed.flat();
  result += format_xyz(PointCloud::from_flat({all.begin() + static_cast<std::ptrdiff_t>(3 * partial.size()), all.end()}));
  write_text(out, result);

  if (!stage_dir.empty()) {
    fs::create_directories(stage_dir);
    const std::size_t s = stages.stages.size();
    const long pick[4] = {0, s >= 3 ? 1L : -1L, s >= 4 ? 2L : -1L, static_cast<long>(s) - 1};
    for (int c = 0; c < 4; ++c) {
      if (pick[c] < 0) continue;
      write_xyz(PointCloud::from_tensor(stages.stages[static_cast<std::size_t>(pick[c])]),
                fs::path(stage_dir) / (std::string(kStageNames[c]) + ".xyz"));
    }
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  kernels::configure_workers_from_env();
  CLI::App app{"Stepwise point cloud completion"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a procedural dataset");
  std::string gen_out, gen_shapes = "sphere,cube,cylinder,cone,torus,plane", gen_ingest;
  std::size_t gen_count = 8, gen_points = 2048;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--shapes", gen_shapes, "comma-separated shape kinds");
  gen->add_option("--count", gen_count, "number of shapes")->check(CLI::PositiveNumber);
  gen->add_option("--points", gen_points, "points per shape")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 24));
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--ingest", gen_ingest, "ingest category folders of point files instead of generating");

  auto* tr = app.add_subcommand("train", "train a network");
  TrainArgs train_args;
  add_train_flags(tr, train_args);

  auto* comp = app.add_subcommand("complete", "complete one partial cloud");
  std::string comp_ckpt, comp_in, comp_out, comp_stages;
  comp->add_option("--ckpt", comp_ckpt, "checkpoint")->required();
  comp->add_option("--in", comp_in, "partial .xyz")->required();
  comp->add_option("--out", comp_out, "completed .xyz")->required();
  comp->add_option("--emit-stages", comp_stages, "directory for per-stage clouds");

  auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_view = "1,1,1", ev_report;
  bool ev_stagewise = false;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--viewpoint", ev_view, "split viewpoint \"x,y,z\"");
  ev->add_option("--report", ev_report, "CSV report to write")->required();
  ev->add_flag("--stagewise", ev_stagewise, "per-stage columns against P_M");

  auto* ab = app.add_subcommand("ablate", "train one ablation variant");
  std::string variant;
  TrainArgs ablate_args;
  ab->add_option("--variant", variant, "ablation variant")->required()->check(CLI::IsMember(ablation_variants()));
  add_train_flags(ab, ablate_args);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      const auto kinds = split_list(gen_shapes);
      if (!gen_ingest.empty()) {
        save_dataset(ingest_shapenet_part(gen_ingest, gen_points, gen_seed), gen_out);
      } else {
        generate_dataset(kinds, gen_count, gen_points, gen_seed, gen_out);
      }
      return kExitOk;
    }
    if (*tr) return do_train(train_args, "");
    if (*ab) return do_train(ablate_args, variant);
    if (*comp) return do_complete(comp_ckpt, comp_in, comp_out, comp_stages);
    if (*ev) {
      const Checkpoint ckpt = load_checkpoint(ev_ckpt);
      const EvalReport report = evaluate(ckpt, load_dataset(ev_data), parse_viewpoint(ev_view), ev_stagewise);
      write_text(ev_report, format_report_csv(report));
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace spcnet::cli
