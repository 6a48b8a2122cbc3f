#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dpit/ops.hpp"
#include "dpit/params.hpp"

namespace dpit {

/// Non-overlapping patch partition of an H' x W' x C feature map.
struct PatchGrid {
  std::size_t patch_h = 1, patch_w = 1;
  std::size_t feat_h = 1, feat_w = 1, channels = 1;

  std::size_t rows() const { return feat_h / patch_h; }
  std::size_t cols() const { return feat_w / patch_w; }
  std::size_t count() const { return (feat_h * feat_w) / (patch_h * patch_w); }
  std::size_t patch_dim() const { return patch_h * patch_w * channels; }

  void validate() const {
    if (patch_h == 0 || patch_w == 0 || feat_h == 0 || feat_w == 0 || channels == 0) {
      throw ConfigError("patch grid extents must be positive");
    }
    if (feat_h % patch_h != 0 || feat_w % patch_w != 0) {
      throw ConfigError("feature " + std::to_string(feat_h) + "x" + std::to_string(feat_w) +
                        " not divisible into " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
                        " patches");
    }
  }

  static PatchGrid for_feature(const Shape& feat, std::size_t ph, std::size_t pw) {
    if (feat.size() != 3) throw DimensionError("patch grid needs an H x W x C feature, got " + to_string(feat));
    PatchGrid g{ph, pw, feat[0], feat[1], feat[2]};
    g.validate();
    return g;
  }
};

/// For each output element (token n, offset within the flattened patch) the
/// flat index of the feature element it copies. Tokens run row-major over the
/// patch grid, and each patch is flattened row-major (py, px, c).
inline std::shared_ptr<const std::vector<std::size_t>> patch_gather_index(const PatchGrid& g) {
  auto idx = std::make_shared<std::vector<std::size_t>>();
  idx->reserve(g.count() * g.patch_dim());
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t q = 0; q < g.cols(); ++q) {
      for (std::size_t py = 0; py < g.patch_h; ++py) {
        for (std::size_t px = 0; px < g.patch_w; ++px) {
          const std::size_t y = r * g.patch_h + py, x = q * g.patch_w + px;
          for (std::size_t c = 0; c < g.channels; ++c) idx->push_back((y * g.feat_w + x) * g.channels + c);
        }
      }
    }
  }
  return idx;
}

template <typename T>
Var<T> split_patches(Var<T> feat, const PatchGrid& g) {
  if (feat.shape() != Shape{g.feat_h, g.feat_w, g.channels}) {
    throw DimensionError("split_patches: feature " + to_string(feat.shape()) + " does not match grid");
  }
  g.validate();
  return ops::gather(feat, patch_gather_index(g), {g.count(), g.patch_dim()});
}

/// Inverse of split_patches.
template <typename T>
Var<T> merge_patches(Var<T> patches, const PatchGrid& g) {
  auto fwd = patch_gather_index(g);
  auto inv = std::make_shared<std::vector<std::size_t>>(fwd->size());
  for (std::size_t i = 0; i < fwd->size(); ++i) (*inv)[(*fwd)[i]] = i;
  return ops::gather(patches, std::shared_ptr<const std::vector<std::size_t>>(inv), {g.feat_h, g.feat_w, g.channels});
}

/// Fixed 2-D sine-cosine codes: the first D/2 entries encode the patch row,
/// the last D/2 the patch column, each as interleaved (sin, cos) pairs.
template <typename T>
Tensor<T> sincos_positions(std::size_t rows, std::size_t cols, std::size_t dim) {
  if (dim % 4 != 0) throw ConfigError("positional dim must be divisible by 4");
  const std::size_t half = dim / 2;
  Tensor<T> table({rows * cols, dim});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      T* row = table.ptr() + (r * cols + c) * dim;
      for (std::size_t i = 0; i < half / 2; ++i) {
        const double freq = 1.0 / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(half));
        row[2 * i] = static_cast<T>(std::sin(static_cast<double>(r) * freq));
        row[2 * i + 1] = static_cast<T>(std::cos(static_cast<double>(r) * freq));
        row[half + 2 * i] = static_cast<T>(std::sin(static_cast<double>(c) * freq));
        row[half + 2 * i + 1] = static_cast<T>(std::cos(static_cast<double>(c) * freq));
      }
    }
  }
  return table;
}

/// patches . proj + pos + branch (branch broadcast over tokens).
template <typename T>
Var<T> embed_tokens(Var<T> patches, Var<T> proj, const Tensor<T>& positions, Var<T> branch) {
  if (patches.shape().size() != 2 || proj.shape().size() != 2 || proj.shape()[0] != patches.shape()[1]) {
    throw DimensionError("embed_tokens: projection " + to_string(proj.shape()) + " does not accept patches " +
                         to_string(patches.shape()));
  }
  const Shape out_shape{patches.shape()[0], proj.shape()[1]};
  if (positions.shape() != out_shape) {
    throw DimensionError("embed_tokens: positional table " + to_string(positions.shape()) + " vs tokens " +
                         to_string(out_shape));
  }
  auto tokens = ops::matmul(patches, proj);
  tokens = ops::add(tokens, patches.tape().constant(positions));
  return ops::add_bias(tokens, branch);
}

template <typename T>
Tensor<T> make_keypoint_queries(std::size_t keypoints, std::size_t dim, std::uint64_t seed) {
  if (keypoints == 0 || dim == 0) throw ConfigError("keypoint queries need positive K and D");
  std::mt19937_64 rng(seed);
  return normal_tensor<T>({keypoints, dim}, static_cast<T>(0.02), rng);
}

enum class Segment { keypoint, bu, td };

/// Encoder input: [keypoint queries | bottom-up tokens | top-down tokens].
template <typename T>
struct TokenSequence {
  Var<T> tokens;
  std::vector<Segment> segments;
  std::size_t keypoints = 0, bu = 0, td = 0;

  std::size_t length() const { return segments.size(); }
};

template <typename T>
TokenSequence<T> assemble(Var<T> kpt, std::optional<Var<T>> bu, Var<T> td) {
  const std::size_t dim = kpt.shape().at(1);
  auto check = [dim](const Var<T>& v, const char* what) {
    if (v.shape().size() != 2 || v.shape()[1] != dim) {
      throw DimensionError(std::string("assemble: ") + what + " tokens " + to_string(v.shape()) +
                           " do not share dim " + std::to_string(dim));
    }
  };
  check(td, "top-down");
  std::vector<Var<T>> parts{kpt};
  TokenSequence<T> seq;
  seq.keypoints = kpt.shape()[0];
  if (bu) {
    check(*bu, "bottom-up");
    parts.push_back(*bu);
    seq.bu = bu->shape()[0];
  }
  parts.push_back(td);
  seq.td = td.shape()[0];
  seq.tokens = ops::concat_rows(parts);
  seq.segments.insert(seq.segments.end(), seq.keypoints, Segment::keypoint);
  seq.segments.insert(seq.segments.end(), seq.bu, Segment::bu);
  seq.segments.insert(seq.segments.end(), seq.td, Segment::td);
  return seq;
}

}  // namespace dpit
