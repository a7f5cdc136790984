#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "hitok/error.hpp"
#include "hitok/io.hpp"
#include "hitok/rng.hpp"
#include "hitok/tensor.hpp"

namespace hitok {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named trainable parameters plus Adam moment buffers.
template <class Real = float>
class ParamStore {
 public:
  struct Entry {
    Tensor<Real> value;
    std::vector<Real> m, v;
  };

  Tensor<Real>& add(const std::string& name, Shape shape, std::vector<Real> values) {
    if (params_.count(name)) throw UsageError("duplicate parameter name '" + name + "'");
    Entry e;
    e.value = Tensor<Real>::from(std::move(shape), std::move(values), true);
    e.m.assign(e.value.size(), Real(0));
    e.v.assign(e.value.size(), Real(0));
    return params_.emplace(name, std::move(e)).first->second.value;
  }

  Tensor<Real>& add_normal(const std::string& name, Shape shape, double stddev, Rng& rng) {
    std::vector<Real> v(numel(shape));
    for (auto& x : v) x = static_cast<Real>(stddev * rng.normal());
    return add(name, std::move(shape), std::move(v));
  }

  Tensor<Real>& add_const(const std::string& name, Shape shape, Real value) {
    const std::size_t n = numel(shape);
    return add(name, std::move(shape), std::vector<Real>(n, value));
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  const Tensor<Real>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw UsageError("unknown parameter '" + name + "'");
    return it->second.value;
  }
  Tensor<Real>& get(const std::string& name) {
    return const_cast<Tensor<Real>&>(std::as_const(*this).get(name));
  }

  const std::map<std::string, Entry>& entries() const { return params_; }
  std::size_t count() const { return params_.size(); }
  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& [_, e] : params_) n += e.value.size();
    return n;
  }
  std::uint64_t step() const { return step_; }

  void zero_grad() {
    for (auto& [_, e] : params_) e.value.zero_grad();
  }

  // Bias-corrected Adam. Parameters that received no gradient are skipped;
  // a step where no parameter has a gradient is an error.
  void adam_step(const AdamConfig& cfg) {
    bool any = false;
    for (const auto& [_, e] : params_) any = any || e.value.has_grad();
    if (!any) throw UsageError("adam_step: no parameter has a gradient");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (auto& [name, e] : params_) {
      if (!e.value.has_grad()) continue;
      auto g = e.value.grad();
      auto w = e.value.mutable_data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        e.m[i] = static_cast<Real>(cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * gi);
        e.v[i] = static_cast<Real>(cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * gi * gi);
        const double mhat = e.m[i] / bc1;
        const double vhat = e.v[i] / bc2;
        w[i] = static_cast<Real>(w[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        if (!std::isfinite(w[i])) throw NumericError("adam_step: non-finite parameter '" + name + "'");
      }
    }
  }

  // Copies values (not moments) from another store with identical names/shapes.
  template <class Other>
  void load_values_from(const ParamStore<Other>& other) {
    for (auto& [name, e] : params_) {
      const auto& src = other.get(name);
      if (src.shape() != e.value.shape()) throw ShapeError("parameter '" + name + "' shape mismatch");
      auto dst = e.value.mutable_data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(src[i]);
    }
  }

 private:
  std::map<std::string, Entry> params_;
  std::uint64_t step_ = 0;
};

// Per-graph view of a store. With tracking on, every parameter read becomes a
// fresh leaf that shares the store's data but owns its gradient, so several
// graphs can run side by side and their gradients be summed in a fixed order.
template <class Real = float>
class ParamBinding {
 public:
  ParamBinding(const ParamStore<Real>& store, bool track_grad) : store_(&store), track_(track_grad) {}

  Tensor<Real> operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const auto& p = store_->get(name);
    auto t = track_ ? p.bind_leaf() : p.detach();
    bound_.emplace(name, t);
    return t;
  }

  bool contains(const std::string& name) const { return store_->contains(name); }
  bool tracking() const { return track_; }

  // store.grad += weight * grad for every bound parameter that got one.
  void accumulate_into(ParamStore<Real>& store, Real weight = Real(1)) const {
    for (const auto& [name, t] : bound_) {
      if (!t.has_grad()) continue;
      auto dst = store.get(name).mutable_grad();
      auto src = t.grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weight * src[i];
    }
  }

 private:
  const ParamStore<Real>* store_;
  bool track_;
  std::map<std::string, Tensor<Real>> bound_;
};

namespace htck {

inline constexpr char kMagic[4] = {'H', 'T', 'C', 'K'};
inline constexpr std::uint8_t kVersion = 1;

template <class Real>
std::string serialize(const ParamStore<Real>& store) {
  std::string out(kMagic, 4);
  io::put_le<std::uint8_t>(out, kVersion);
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.count()));
  for (const auto& [name, e] : store.entries()) {
    io::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    io::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.value.rank()));
    for (const auto d : e.value.shape()) io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (const Real x : e.value.data()) io::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  return out;
}

struct RawParam {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

inline std::vector<RawParam> parse(const std::string& buf) {
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw FormatError(FormatErrc::kBadMagic, "checkpoint: bad magic");
  }
  io::ByteReader r(buf, "checkpoint");
  r.get_bytes(4);
  if (const auto ver = r.get_le<std::uint8_t>(); ver != kVersion) {
    throw FormatError(FormatErrc::kVersionMismatch, "checkpoint: unsupported version " + std::to_string(ver));
  }
  const auto count = r.get_le<std::uint32_t>();
  std::vector<RawParam> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    RawParam p;
    p.name = r.get_bytes(r.get_le<std::uint16_t>());
    const auto rank = r.get_le<std::uint8_t>();
    for (std::uint8_t d = 0; d < rank; ++d) p.shape.push_back(r.get_le<std::uint32_t>());
    p.values.resize(numel(p.shape));
    for (auto& v : p.values) v = std::bit_cast<float>(r.get_le<std::uint32_t>());
    out.push_back(std::move(p));
  }
  if (!r.at_end()) throw FormatError(FormatErrc::kInvalidField, "checkpoint: trailing bytes");
  return out;
}

// Loads values into a store whose parameters were already declared (by a
// model constructor). Names and shapes must match exactly.
template <class Real>
void load_into(ParamStore<Real>& store, const std::string& buf) {
  const auto raw = parse(buf);
  if (raw.size() != store.count()) {
    throw FormatError(FormatErrc::kInvalidField, "checkpoint has " + std::to_string(raw.size()) +
                                                     " parameters, model expects " + std::to_string(store.count()));
  }
  for (const auto& p : raw) {
    if (!store.contains(p.name)) throw FormatError(FormatErrc::kInvalidField, "checkpoint: unexpected parameter '" + p.name + "'");
    auto& t = store.get(p.name);
    if (t.shape() != p.shape) throw FormatError(FormatErrc::kInvalidField, "checkpoint: shape mismatch for '" + p.name + "'");
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(p.values[i]);
  }
}

template <class Real>
void save(const ParamStore<Real>& store, const std::string& path) {
  io::write_file(path, serialize(store));
}

template <class Real>
void load(ParamStore<Real>& store, const std::string& path) {
  load_into(store, io::read_file(path));
}

}  // namespace htck

}  // namespace hitok
