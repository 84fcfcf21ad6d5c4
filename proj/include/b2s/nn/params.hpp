#pragma once

// Named parameter store, AdamW, and the checkpoint format.
//
// Checkpoint layout (little-endian):
//   "B2SC" | version u16 | fingerprint u64 | stage u8 | count u32
//   | per entry: name (u32 length + UTF-8) | rank u32 | dims u32 x rank | f64 values
// Optimizer state is written with the same layout to a sibling file holding
// "<name>.m", "<name>.v" and "<name>.step" entries.

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "b2s/common/binary_io.hpp"
#include "b2s/common/random.hpp"
#include "b2s/nn/tensor.hpp"

namespace b2s::nn {

inline constexpr std::string_view kCheckpointMagic = "B2SC";
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
  bool operator==(const NamedArray&) const = default;
};

class ParamStore {
 public:
  /// Registers a trainable tensor. Names must be unique.
  Tensor add(const std::string& name, Shape shape, std::vector<double> values) {
    require(!index_.contains(name), ErrorKind::invalid_argument, "duplicate parameter " + name);
    index_[name] = order_.size();
    order_.push_back({name, Tensor::from(std::move(shape), std::move(values), true)});
    return order_.back().second;
  }

  /// Weights uniform in +-sqrt(1/fan_in).
  Tensor add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
    const double b = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::vector<double> v(numel_of(shape));
    for (auto& x : v) x = rng.uniform(-b, b);
    return add(name, std::move(shape), std::move(v));
  }

  Tensor add_constant(const std::string& name, Shape shape, double value) {
    const auto n = numel_of(shape);
    return add(name, std::move(shape), std::vector<double>(n, value));
  }

  bool contains(const std::string& name) const { return index_.contains(name); }
  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::invalid_argument, "unknown parameter " + name);
    return order_[it->second].second;
  }
  Tensor& get(const std::string& name) {
    return const_cast<Tensor&>(static_cast<const ParamStore&>(*this).get(name));
  }

  std::size_t size() const { return order_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return order_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return order_; }

  void zero_grad() {
    for (auto& [_, t] : order_) t.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : order_) n += t.numel();
    return n;
  }

  std::vector<NamedArray> snapshot() const {
    std::vector<NamedArray> out;
    for (const auto& [name, t] : order_)
      out.push_back({name, t.shape(), std::vector<double>(t.values().begin(), t.values().end())});
    return out;
  }

  /// Copies values by name. Entries missing from `arrays`, or rejected by
  /// `accept`, keep their current values. Shapes must match.
  std::size_t load(const std::vector<NamedArray>& arrays,
                   const std::function<bool(const std::string&)>& accept = {}) {
    std::size_t copied = 0;
    for (const auto& a : arrays) {
      auto it = index_.find(a.name);
      if (it == index_.end() || (accept && !accept(a.name))) continue;
      auto& t = order_[it->second].second;
      require(t.shape() == a.shape, ErrorKind::shape_mismatch,
              "parameter " + a.name + ": stored " + shape_str(a.shape) + ", model " + shape_str(t.shape()));
      std::copy(a.values.begin(), a.values.end(), t.values_mut().begin());
      ++copied;
    }
    return copied;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> order_;
  std::map<std::string, std::size_t> index_;
};

struct CheckpointHeader {
  std::uint64_t fingerprint = 0;
  std::uint8_t stage = 0;
};

inline io::Bytes encode_arrays(const CheckpointHeader& h, const std::vector<NamedArray>& arrays) {
  io::ByteWriter w;
  w.magic(kCheckpointMagic);
  w.u16(kCheckpointVersion);
  w.u64(h.fingerprint);
  w.u8(h.stage);
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    w.str(a.name);
    w.u32(static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : a.values) w.f64(v);
  }
  return std::move(w).take();
}

inline std::vector<NamedArray> decode_arrays(std::span<const std::uint8_t> data, CheckpointHeader* header = nullptr) {
  io::ByteReader r(data);
  r.expect_magic(kCheckpointMagic);
  const auto version = r.u16();
  if (version != kCheckpointVersion)
    fail(ErrorKind::version_mismatch, "checkpoint version " + std::to_string(version));
  CheckpointHeader h;
  h.fingerprint = r.u64();
  h.stage = r.u8();
  const auto count = r.u32();
  std::vector<NamedArray> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.str();
    const auto rank = r.u32();
    require(rank <= 5, ErrorKind::shape_mismatch, "checkpoint entry " + a.name + " has rank above 5");
    for (std::uint32_t k = 0; k < rank; ++k) a.shape.push_back(r.u32());
    const auto n = numel_of(a.shape);
    require(n * 8 <= r.remaining(), ErrorKind::truncated, "checkpoint entry " + a.name + " is truncated");
    a.values.resize(n);
    for (auto& v : a.values) v = r.f64();
    out.push_back(std::move(a));
  }
  require(r.at_end(), ErrorKind::invalid_argument, "trailing bytes after checkpoint entries");
  if (header) *header = h;
  return out;
}

inline void save_arrays(const std::filesystem::path& path, const CheckpointHeader& h,
                        const std::vector<NamedArray>& arrays) {
  io::write_file(path, encode_arrays(h, arrays));
}

inline std::vector<NamedArray> load_arrays(const std::filesystem::path& path, CheckpointHeader* header = nullptr) {
  return decode_arrays(io::read_file(path), header);
}

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Decoupled weight decay Adam. State is keyed by parameter name.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  /// Updates every parameter accepted by `trainable` (all when empty).
  /// A parameter without a gradient is treated as having a zero gradient.
  void step(ParamStore& store, const std::function<bool(const std::string&)>& trainable = {}) {
    NoGradGuard ng;
    for (auto& [name, t] : store.entries()) {
      if (trainable && !trainable(name)) continue;
      auto& s = state_[name];
      const auto n = t.numel();
      if (s.m.empty()) {
        s.m.assign(n, 0.0);
        s.v.assign(n, 0.0);
      }
      ++s.step;
      const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.step));
      const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.step));
      auto p = t.values_mut();
      const auto g = t.grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = g.empty() ? 0.0 : g[i];
        p[i] *= 1.0 - cfg_.lr * cfg_.weight_decay;
        s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * gi;
        s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mh = s.m[i] / bc1;
        const double vh = s.v[i] / bc2;
        p[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
      }
    }
  }

  std::vector<NamedArray> snapshot() const {
    std::vector<NamedArray> out;
    for (const auto& [name, s] : state_) {
      out.push_back({name + ".m", {s.m.size()}, s.m});
      out.push_back({name + ".v", {s.v.size()}, s.v});
      out.push_back({name + ".step", {1}, {static_cast<double>(s.step)}});
    }
    return out;
  }

  void restore(const std::vector<NamedArray>& arrays) {
    state_.clear();
    for (const auto& a : arrays) {
      const auto dot = a.name.rfind('.');
      require(dot != std::string::npos, ErrorKind::invalid_argument, "bad optimizer entry " + a.name);
      const auto base = a.name.substr(0, dot), field = a.name.substr(dot + 1);
      auto& s = state_[base];
      if (field == "m")
        s.m = a.values;
      else if (field == "v")
        s.v = a.values;
      else if (field == "step" && a.values.size() == 1)
        s.step = static_cast<std::uint64_t>(a.values[0]);
      else
        fail(ErrorKind::invalid_argument, "bad optimizer entry " + a.name);
    }
  }

 private:
  struct State {
    std::vector<double> m, v;
    std::uint64_t step = 0;
  };
  AdamWConfig cfg_;
  std::map<std::string, State> state_;
};

}  // namespace b2s::nn
