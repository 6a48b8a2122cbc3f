#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dpit/model_config.hpp"
#include "dpit/optim.hpp"
#include "dpit/params.hpp"
#include "json.hpp"

namespace dpit {

/// Named-tensor archive:
///   "DPIT" u32 version u64 count, then per entry
///   u32 name_len, name bytes, u32 rank, u64 extents[rank], u8 dtype, payload.
/// dtype 0 is little-endian float32; dtype 1 is raw bytes (used for JSON metadata).
struct ArchiveEntry {
  std::string name;
  Shape shape;
  std::uint8_t dtype = 0;
  std::vector<float> f32;
  std::string bytes;

  friend bool operator==(const ArchiveEntry&, const ArchiveEntry&) = default;
};

inline constexpr std::uint32_t kArchiveVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}
  std::uint64_t uint(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_archive(const std::vector<ArchiveEntry>& entries) {
  std::string out = "DPIT";
  detail::put_u32(out, kArchiveVersion);
  detail::put_u64(out, entries.size());
  for (const auto& e : entries) {
    detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    detail::put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) detail::put_u64(out, d);
    out.push_back(static_cast<char>(e.dtype));
    if (e.dtype == 0) {
      if (e.f32.size() != numel(e.shape)) throw DimensionError("archive entry " + e.name + ": payload/shape mismatch");
      for (float f : e.f32) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_u32(out, bits);
      }
    } else if (e.dtype == 1) {
      if (e.bytes.size() != numel(e.shape)) throw DimensionError("archive entry " + e.name + ": payload/shape mismatch");
      out += e.bytes;
    } else {
      throw ConfigError("archive entry " + e.name + ": unknown dtype");
    }
  }
  return out;
}

inline std::vector<ArchiveEntry> decode_archive(const std::string& data) {
  detail::Reader r(data);
  if (r.take(4) != "DPIT") throw ParseError("not a checkpoint (bad magic)");
  const auto version = r.uint(4);
  if (version != kArchiveVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.uint(8);
  std::vector<ArchiveEntry> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    ArchiveEntry e;
    e.name = r.take(r.uint(4));
    const auto rank = r.uint(4);
    for (std::uint64_t d = 0; d < rank; ++d) e.shape.push_back(r.uint(8));
    e.dtype = static_cast<std::uint8_t>(r.uint(1));
    const std::size_t n = numel(e.shape);
    if (e.dtype == 0) {
      e.f32.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        const auto bits = static_cast<std::uint32_t>(r.uint(4));
        std::memcpy(&e.f32[k], &bits, 4);
      }
    } else if (e.dtype == 1) {
      e.bytes = r.take(n);
    } else {
      throw ParseError("checkpoint entry " + e.name + ": unknown dtype " + std::to_string(e.dtype));
    }
    out.push_back(std::move(e));
  }
  if (!r.done()) throw ParseError("checkpoint has trailing bytes");
  return out;
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"name", c.name},
          {"bu_widths", c.bu.widths},
          {"td_widths", c.td.widths},
          {"channels", c.bu.out_channels},
          {"depth", c.encoder.depth},
          {"heads", c.encoder.heads},
          {"hidden", c.encoder.hidden},
          {"ffn_mult", c.encoder.ffn_mult},
          {"dropout", c.encoder.dropout},
          {"keypoints", c.keypoints},
          {"bu_input", {c.bu_height, c.bu_width}},
          {"td_input", {c.td_height, c.td_width}},
          {"bu_patch", {c.bu_patch_h, c.bu_patch_w}},
          {"td_patch", {c.td_patch_h, c.td_patch_w}},
          {"heatmap", {c.heatmap_height, c.heatmap_width}},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.name = j.at("name").get<std::string>();
    c.bu.widths = j.at("bu_widths").get<std::vector<std::size_t>>();
    c.td.widths = j.at("td_widths").get<std::vector<std::size_t>>();
    c.bu.out_channels = c.td.out_channels = j.at("channels").get<std::size_t>();
    c.encoder.depth = j.at("depth").get<std::size_t>();
    c.encoder.heads = j.at("heads").get<std::size_t>();
    c.encoder.hidden = j.at("hidden").get<std::size_t>();
    c.encoder.ffn_mult = j.at("ffn_mult").get<std::size_t>();
    c.encoder.dropout = j.at("dropout").get<double>();
    c.keypoints = j.at("keypoints").get<std::size_t>();
    auto pair = [&](const char* key, std::size_t& a, std::size_t& b) {
      a = j.at(key).at(0).get<std::size_t>();
      b = j.at(key).at(1).get<std::size_t>();
    };
    pair("bu_input", c.bu_height, c.bu_width);
    pair("td_input", c.td_height, c.td_width);
    pair("bu_patch", c.bu_patch_h, c.bu_patch_w);
    pair("td_patch", c.td_patch_h, c.td_patch_w);
    pair("heatmap", c.heatmap_height, c.heatmap_width);
    c.seed = j.at("seed").get<std::size_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
}

/// Weights, optional optimiser state and free-form metadata (model config,
/// skeleton name, progress counters).
struct Checkpoint {
  ParameterSet<float> params;
  std::optional<AdamState<float>> adam;
  nlohmann::json meta = nlohmann::json::object();

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    const bool adam_eq = a.adam.has_value() == b.adam.has_value() &&
                         (!a.adam || (a.adam->m == b.adam->m && a.adam->v == b.adam->v && a.adam->t == b.adam->t));
    return a.params == b.params && adam_eq && a.meta == b.meta;
  }
};

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::vector<ArchiveEntry> entries;
  nlohmann::json meta = ck.meta;
  if (ck.adam) {
    meta["adam"] = {{"t", ck.adam->t},
                    {"alpha", ck.adam->alpha},
                    {"beta1", ck.adam->beta1},
                    {"beta2", ck.adam->beta2},
                    {"eps", ck.adam->eps}};
  }
  const std::string text = meta.dump();
  entries.push_back({"meta", {text.size()}, 1, {}, text});
  auto add = [&](const std::string& prefix, const ParameterSet<float>& set) {
    for (const auto& [name, t] : set) entries.push_back({prefix + name, t.shape(), 0, t.data_vector(), {}});
  };
  add("param.", ck.params);
  if (ck.adam) {
    add("adam.m.", ck.adam->m);
    add("adam.v.", ck.adam->v);
  }
  return encode_archive(entries);
}

inline Checkpoint decode_checkpoint(const std::string& data) {
  Checkpoint ck;
  bool has_meta = false;
  AdamState<float> adam;
  for (auto& e : decode_archive(data)) {
    if (e.name == "meta" && e.dtype == 1) {
      try {
        ck.meta = nlohmann::json::parse(e.bytes);
      } catch (const nlohmann::json::parse_error& err) {
        throw ParseError(std::string("checkpoint metadata: ") + err.what());
      }
      has_meta = true;
      continue;
    }
    if (e.dtype != 0) throw ParseError("checkpoint entry " + e.name + " is not float32");
    Tensor<float> t(e.shape, std::move(e.f32));
    if (e.name.starts_with("param.")) {
      ck.params.add(e.name.substr(6), std::move(t));
    } else if (e.name.starts_with("adam.m.")) {
      adam.m.add(e.name.substr(7), std::move(t));
    } else if (e.name.starts_with("adam.v.")) {
      adam.v.add(e.name.substr(7), std::move(t));
    } else {
      throw ParseError("checkpoint entry with unknown prefix: " + e.name);
    }
  }
  if (!has_meta) throw ParseError("checkpoint lacks metadata");
  if (ck.meta.contains("adam")) {
    const auto& a = ck.meta["adam"];
    adam.t = a.at("t").get<std::uint64_t>();
    adam.alpha = a.at("alpha").get<double>();
    adam.beta1 = a.at("beta1").get<double>();
    adam.beta2 = a.at("beta2").get<double>();
    adam.eps = a.at("eps").get<double>();
    ck.meta.erase("adam");
    if (adam.m.size() != ck.params.size() || adam.v.size() != ck.params.size()) {
      throw ParseError("checkpoint optimiser state does not cover every parameter");
    }
    ck.adam = std::move(adam);
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  const std::string bytes = encode_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace dpit
