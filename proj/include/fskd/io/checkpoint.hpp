#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fskd/core/error.hpp"
#include "fskd/core/sgd.hpp"
#include "fskd/core/tensor.hpp"
#include "fskd/model/backbone.hpp"
#include "fskd/model/margin_head.hpp"

namespace fskd {

// Binary checkpoint, little-endian:
//   magic "FSKDCKPT" | u32 version | backbone config | f64 head scale, margin
//   | u64 step | length-prefixed RNG state string | u32 record count
//   | records: u32 name_len, name bytes, u8 kind, u32 rank, u64 dims, f64 data
// kind 0 = trainable tensor, 1 = buffer (running stats, optimizer velocity).
struct CheckpointRecord {
  std::string name;
  std::uint8_t kind = 0;
  Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  std::uint32_t version = 1;
  BackboneConfig config;
  double head_scale = 64.0;
  double head_margin = 0.35;
  std::uint64_t step = 0;
  std::string rng_state;
  std::vector<CheckpointRecord> records;

  const CheckpointRecord* find(const std::string& name) const {
    for (const auto& r : records)
      if (r.name == name) return &r;
    return nullptr;
  }
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<char*>(b), 8);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError(std::string("checkpoint: truncated ") + what);
  return b[0] | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError(std::string("checkpoint: truncated ") + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is, const char* what) {
  const std::uint64_t bits = get_u64(is, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline std::string get_string(std::istream& is, const char* what) {
  const std::uint32_t len = get_u32(is, what);
  std::string s(len, '\0');
  if (!is.read(s.data(), len)) throw DataError(std::string("checkpoint: truncated ") + what);
  return s;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot create checkpoint '" + path + "'");
  os.write("FSKDCKPT", 8);
  detail::put_u32(os, ckpt.version);
  detail::put_u32(os, static_cast<std::uint32_t>(ckpt.config.block_channel_widths.size()));
  for (auto w : ckpt.config.block_channel_widths) detail::put_u32(os, static_cast<std::uint32_t>(w));
  detail::put_u32(os, static_cast<std::uint32_t>(ckpt.config.blocks_per_stage));
  detail::put_u32(os, static_cast<std::uint32_t>(ckpt.config.embedding_dim));
  detail::put_u32(os, static_cast<std::uint32_t>(ckpt.config.input_size));
  detail::put_u32(os, static_cast<std::uint32_t>(ckpt.config.in_channels));
  detail::put_f64(os, ckpt.head_scale);
  detail::put_f64(os, ckpt.head_margin);
  detail::put_u64(os, ckpt.step);
  detail::put_string(os, ckpt.rng_state);
  detail::put_u32(os, static_cast<std::uint32_t>(ckpt.records.size()));
  for (const auto& r : ckpt.records) {
    detail::put_string(os, r.name);
    os.put(static_cast<char>(r.kind));
    detail::put_u32(os, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) detail::put_u64(os, d);
    for (double v : r.data) detail::put_f64(os, v);
  }
  if (!os) throw DataError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, "FSKDCKPT", 8) != 0)
    throw DataError("'" + path + "' is not an FSKD checkpoint (bad magic)");
  Checkpoint ckpt;
  ckpt.version = detail::get_u32(is, "version");
  if (ckpt.version != 1) throw DataError("checkpoint version " + std::to_string(ckpt.version) + " not supported");
  const std::uint32_t L = detail::get_u32(is, "stage count");
  ckpt.config.block_channel_widths.clear();
  for (std::uint32_t i = 0; i < L; ++i) ckpt.config.block_channel_widths.push_back(detail::get_u32(is, "width"));
  ckpt.config.blocks_per_stage = detail::get_u32(is, "blocks_per_stage");
  ckpt.config.embedding_dim = detail::get_u32(is, "embedding_dim");
  ckpt.config.input_size = detail::get_u32(is, "input_size");
  ckpt.config.in_channels = detail::get_u32(is, "in_channels");
  ckpt.head_scale = detail::get_f64(is, "head scale");
  ckpt.head_margin = detail::get_f64(is, "head margin");
  ckpt.step = detail::get_u64(is, "step");
  ckpt.rng_state = detail::get_string(is, "rng state");
  const std::uint32_t n_records = detail::get_u32(is, "record count");
  for (std::uint32_t i = 0; i < n_records; ++i) {
    CheckpointRecord r;
    r.name = detail::get_string(is, "record name");
    int kind = is.get();
    if (kind < 0) throw DataError("checkpoint: truncated record kind");
    r.kind = static_cast<std::uint8_t>(kind);
    const std::uint32_t rank = detail::get_u32(is, "record rank");
    for (std::uint32_t d = 0; d < rank; ++d) r.shape.push_back(detail::get_u64(is, "record dim"));
    r.data.resize(shape_numel(r.shape));
    for (auto& v : r.data) v = detail::get_f64(is, "record data");
    ckpt.records.push_back(std::move(r));
  }
  return ckpt;
}

// Capture model + head (+ optional optimizer velocity) into a checkpoint.
inline Checkpoint make_checkpoint(Backbone& model, const MarginHeadParams& head, const SgdState* opt,
                                  const std::string& rng_state, std::uint64_t step) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.head_scale = head.scale;
  ckpt.head_margin = head.margin;
  ckpt.step = step;
  ckpt.rng_state = rng_state;
  for (auto& [name, t] : model.named_parameters()) ckpt.records.push_back({name, 0, t.shape(), t.data()});
  ckpt.records.push_back({"head.W", 0, head.W.shape(), head.W.data()});
  for (auto& [name, buf] : model.named_buffers()) ckpt.records.push_back({name, 1, Shape{buf->size()}, *buf});
  if (opt) {
    const auto names = [&] {
      std::vector<std::string> v;
      for (auto& [name, t] : model.named_parameters()) v.push_back(name);
      v.push_back("head.W");
      return v;
    }();
    for (std::size_t i = 0; i < opt->velocity.size() && i < names.size(); ++i)
      ckpt.records.push_back({"opt.velocity." + names[i], 1, Shape{opt->velocity[i].size()}, opt->velocity[i]});
  }
  return ckpt;
}

// Restore parameters and buffers; model/head must already match the config.
inline void restore_checkpoint(const Checkpoint& ckpt, Backbone& model, MarginHeadParams& head,
                               SgdState* opt = nullptr) {
  if (!(model.config() == ckpt.config)) throw ConfigError("checkpoint restore: backbone config mismatch");
  head.scale = ckpt.head_scale;
  head.margin = ckpt.head_margin;
  auto restore_tensor = [&](const std::string& name, Tensor& t) {
    const CheckpointRecord* r = ckpt.find(name);
    if (!r) throw DataError("checkpoint restore: missing record '" + name + "'");
    if (r->shape != t.shape())
      throw DataError("checkpoint restore: record '" + name + "' has shape " + shape_str(r->shape) + ", expected " +
                      shape_str(t.shape()));
    t.data_mut() = r->data;
  };
  for (auto& [name, t] : model.named_parameters()) restore_tensor(name, t);
  restore_tensor("head.W", head.W);
  for (auto& [name, buf] : model.named_buffers()) {
    const CheckpointRecord* r = ckpt.find(name);
    if (!r) throw DataError("checkpoint restore: missing buffer '" + name + "'");
    if (r->data.size() != buf->size()) throw DataError("checkpoint restore: buffer '" + name + "' size mismatch");
    *buf = r->data;
  }
  if (opt) {
    std::vector<std::string> names;
    for (auto& [name, t] : model.named_parameters()) names.push_back(name);
    names.push_back("head.W");
    opt->velocity.clear();
    for (const auto& name : names) {
      const CheckpointRecord* r = ckpt.find("opt.velocity." + name);
      if (!r) throw DataError("checkpoint restore: missing optimizer state for '" + name + "'");
      opt->velocity.push_back(r->data);
    }
  }
}

inline Backbone backbone_from_checkpoint(const Checkpoint& ckpt) {
  Backbone model(ckpt.config, 0);
  MarginHeadParams dummy(ckpt.config.embedding_dim, 2, ckpt.head_scale == 0 ? 64.0 : ckpt.head_scale, 0.0, 0);
  // restore only the backbone side
  auto restore_tensor = [&](const std::string& name, Tensor& t) {
    const CheckpointRecord* r = ckpt.find(name);
    if (!r) throw DataError("checkpoint restore: missing record '" + name + "'");
    t.data_mut() = r->data;
  };
  for (auto& [name, t] : model.named_parameters()) restore_tensor(name, t);
  for (auto& [name, buf] : model.named_buffers()) {
    const CheckpointRecord* r = ckpt.find(name);
    if (!r) throw DataError("checkpoint restore: missing buffer '" + name + "'");
    *buf = r->data;
  }
  return model;
}

inline MarginHeadParams head_from_checkpoint(const Checkpoint& ckpt) {
  const CheckpointRecord* r = ckpt.find("head.W");
  if (!r) throw DataError("checkpoint: missing head.W");
  MarginHeadParams head;
  head.scale = ckpt.head_scale;
  head.margin = ckpt.head_margin;
  head.W = Tensor::from_data(r->shape, r->data, /*requires_grad=*/true);
  return head;
}

}  // namespace fskd
