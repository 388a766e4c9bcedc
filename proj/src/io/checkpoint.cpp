#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "spcnet/checkpoint.hpp"
#include "spcnet/errors.hpp"

namespace spcnet {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'C', 'N'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) { le(std::bit_cast<std::uint32_t>(f)); }
  void text(const std::string& s) {
    le(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  std::size_t offset() const { return pos_; }
  const std::uint8_t* take(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated at byte offset " + std::to_string(pos_) + " while reading " + what);
    }
    const std::uint8_t* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename T>
  T le(const char* what) {
    const std::uint8_t* p = take(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(le<std::uint32_t>(what)); }
  std::string text(const char* what) {
    const auto n = le<std::uint32_t>(what);
    const auto* p = take(n, what);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

std::string net_key(std::size_t j) { return "net" + std::to_string(j); }

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<NamedTensor> collect_tensors(const Checkpoint& ck) {
  std::vector<NamedTensor> out;
  for (std::size_t j = 0; j < ck.nets.size(); ++j) {
    const Network& net = ck.nets[j];
    const std::string p = net_key(j) + "/";
    for (const auto& [name, t] : net.params) {
      const auto v = t.values();
      out.push_back({p + "param/" + name, t.shape(), {v.begin(), v.end()}});
    }
    for (const auto& [name, s] : net.norms) {
      out.push_back({p + "bn_mean/" + name, {s.mean.size()}, s.mean});
      out.push_back({p + "bn_var/" + name, {s.var.size()}, s.var});
    }
    if (net.adam.t > 0) {
      for (const auto& [name, t] : net.params) {
        out.push_back({p + "adam_m/" + name, t.shape(), net.adam.m.at(name)});
        out.push_back({p + "adam_v/" + name, t.shape(), net.adam.v.at(name)});
      }
    }
  }
  return out;
}

}  // namespace

void quantize_to_float(Network& net) {
  auto q = [](std::span<double> v) {
    for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
  };
  for (auto& [name, t] : net.params) q(t.mutable_values());
  for (const auto& [name, s] : net.norms) {
    q(net.norms.at(name).mean);
    q(net.norms.at(name).var);
  }
  for (auto& [name, v] : net.adam.m) q(v);
  for (auto& [name, v] : net.adam.v) q(v);
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  std::ostringstream cfg;
  cfg << "epochs=" << ck.meta.epochs << '\n';
  cfg << "seed=" << ck.meta.seed << '\n';
  cfg << "loss_mode=" << to_string(ck.meta.loss_mode) << '\n';
  cfg << "batch_size=" << ck.meta.batch_size << '\n';
  cfg << "lr=" << fmt_double(ck.meta.lr) << '\n';
  cfg << "lr_decay=" << fmt_double(ck.meta.lr_decay) << '\n';
  cfg << "nets=" << ck.nets.size() << '\n';
  for (std::size_t j = 0; j < ck.nets.size(); ++j) {
    cfg << net_key(j) << ".adam_t=" << ck.nets[j].adam.t << '\n';
    std::istringstream lines(ck.nets[j].config.to_text());
    for (std::string line; std::getline(lines, line);) cfg << net_key(j) << '.' << line << '\n';
  }

  Writer w;
  w.bytes(kMagic, 4);
  w.le(kCheckpointVersion);
  w.text(cfg.str());
  const auto tensors = collect_tensors(ck);
  w.le(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.text(t.name);
    w.le(static_cast<std::uint32_t>(t.shape.size()));
    for (auto e : t.shape) w.le(static_cast<std::uint64_t>(e));
    for (double v : t.values) w.f32(static_cast<float>(v));
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const auto* magic = r.take(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic at byte offset 0 (not an SPCN checkpoint)");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " at byte offset 4");
  }
  const std::size_t cfg_offset = r.offset();
  const std::string cfg_text = r.text("config block");

  Checkpoint ck;
  std::size_t net_count = 0;
  std::vector<std::string> net_cfg;
  std::vector<std::uint64_t> adam_t;
  {
    std::istringstream lines(cfg_text);
    for (std::string line; std::getline(lines, line);) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw FormatError("config block at byte offset " + std::to_string(cfg_offset) + ": bad line '" + line + "'");
      }
      const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
      try {
        if (key == "epochs") ck.meta.epochs = std::stoull(value);
        else if (key == "seed") ck.meta.seed = std::stoull(value);
        else if (key == "loss_mode") ck.meta.loss_mode = parse_loss_mode(value);
        else if (key == "batch_size") ck.meta.batch_size = std::stoull(value);
        else if (key == "lr") ck.meta.lr = std::stod(value);
        else if (key == "lr_decay") ck.meta.lr_decay = std::stod(value);
        else if (key == "nets") {
          net_count = std::stoull(value);
          if (net_count < 1 || net_count > 2) throw FormatError("network count must be 1 or 2");
          net_cfg.assign(net_count, {});
          adam_t.assign(net_count, 0);
        } else if (key.rfind("net", 0) == 0 && key.find('.') != std::string::npos) {
          const std::size_t j = std::stoull(key.substr(3, key.find('.') - 3));
          if (j >= net_count) throw FormatError("network index out of range");
          const std::string sub = key.substr(key.find('.') + 1);
          if (sub == "adam_t") adam_t[j] = std::stoull(value);
          else net_cfg[j] += sub + "=" + value + "\n";
        } else {
          throw FormatError("unknown key '" + key + "'");
        }
      } catch (const std::exception& e) {
        throw FormatError("config block at byte offset " + std::to_string(cfg_offset) + ": " + e.what());
      }
    }
  }
  if (net_count == 0) throw FormatError("config block at byte offset " + std::to_string(cfg_offset) + " names no network");

  std::vector<ParamDecls> decls;
  for (std::size_t j = 0; j < net_count; ++j) {
    Network net;
    try {
      net.config = ModelConfig::from_text(net_cfg[j]);
      decls.push_back(declare_model(net.config));
    } catch (const std::exception& e) {
      throw FormatError("config block at byte offset " + std::to_string(cfg_offset) + ": " + e.what());
    }
    net.adam.t = adam_t[j];
    ck.nets.push_back(std::move(net));
  }

  const auto count = r.le<std::uint32_t>("tensor count");
  std::map<std::string, NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    NamedTensor t;
    t.name = r.text("tensor name");
    const auto rank = r.le<std::uint32_t>("tensor rank");
    if (rank > 8) throw FormatError("implausible rank " + std::to_string(rank) + " at byte offset " + std::to_string(at));
    std::size_t numel = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      t.shape.push_back(static_cast<std::size_t>(r.le<std::uint64_t>("tensor extent")));
      numel *= t.shape.back();
    }
    if (numel > (bytes.size() - r.offset()) / 4) {
      throw FormatError("checkpoint truncated at byte offset " + std::to_string(r.offset()) + " in tensor '" +
                        t.name + "'");
    }
    t.values.resize(numel);
    for (auto& v : t.values) v = r.f32("tensor values");
    if (!tensors.emplace(t.name, std::move(t)).second) {
      throw FormatError("duplicate tensor at byte offset " + std::to_string(at));
    }
  }
  if (!r.done()) throw FormatError("trailing bytes at offset " + std::to_string(r.offset()));

  auto take_tensor = [&](const std::string& name, const Shape& shape) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint lacks tensor '" + name + "'");
    if (it->second.shape != shape) {
      throw FormatError("tensor '" + name + "' has shape " + shape_string(it->second.shape) + ", expected " +
                        shape_string(shape));
    }
    std::vector<double> v = std::move(it->second.values);
    tensors.erase(it);
    return v;
  };
  for (std::size_t j = 0; j < net_count; ++j) {
    Network& net = ck.nets[j];
    const std::string p = net_key(j) + "/";
    for (const auto& d : decls[j].params) net.params.add(d.name, Tensor(d.shape, take_tensor(p + "param/" + d.name, d.shape)));
    for (const auto& [name, width] : decls[j].norms) {
      RunningStats s;
      s.mean = take_tensor(p + "bn_mean/" + name, {width});
      s.var = take_tensor(p + "bn_var/" + name, {width});
      net.norms.add(name, std::move(s));
    }
    if (net.adam.t > 0) {
      for (const auto& d : decls[j].params) {
        net.adam.m[d.name] = take_tensor(p + "adam_m/" + d.name, d.shape);
        net.adam.v[d.name] = take_tensor(p + "adam_v/" + d.name, d.shape);
      }
    }
  }
  if (!tensors.empty()) throw FormatError("unexpected tensor '" + tensors.begin()->first + "'");
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace spcnet
