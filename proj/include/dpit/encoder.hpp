#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dpit/model_config.hpp"
#include "dpit/ops.hpp"
#include "dpit/params.hpp"
#include "dpit/tokenizer.hpp"

namespace dpit {

/// Receives every attention probability matrix (layer, head, L x L).
template <typename T>
using AttentionObserver = std::function<void(std::size_t layer, std::size_t head, const Tensor<T>& probs)>;

/// W_Q, W_K, W_V, output projection, FFN and both layer norms of one layer.
template <typename T>
struct EncoderLayerWeights {
  Var<T> wq, wk, wv, wo, bo;
  Var<T> w1, b1, w2, b2;
  Var<T> ln1_g, ln1_b, ln2_g, ln2_b;
};

inline std::string layer_param(std::size_t layer, const char* part) {
  return "enc.layer" + std::to_string(layer) + "." + part;
}

template <typename T, typename Rng>
void add_encoder_params(ParameterSet<T>& params, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.hidden, f = cfg.hidden * cfg.ffn_mult;
  const T std_w = static_cast<T>(0.02);
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    params.add(layer_param(l, "wq"), normal_tensor<T>({d, d}, std_w, rng));
    params.add(layer_param(l, "wk"), normal_tensor<T>({d, d}, std_w, rng));
    params.add(layer_param(l, "wv"), normal_tensor<T>({d, d}, std_w, rng));
    params.add(layer_param(l, "wo"), normal_tensor<T>({d, d}, std_w, rng));
    params.add(layer_param(l, "bo"), Tensor<T>({d}));
    params.add(layer_param(l, "w1"), normal_tensor<T>({d, f}, std_w, rng));
    params.add(layer_param(l, "b1"), Tensor<T>({f}));
    params.add(layer_param(l, "w2"), normal_tensor<T>({f, d}, std_w, rng));
    params.add(layer_param(l, "b2"), Tensor<T>({d}));
    params.add(layer_param(l, "ln1_g"), Tensor<T>({d}, T(1)));
    params.add(layer_param(l, "ln1_b"), Tensor<T>({d}));
    params.add(layer_param(l, "ln2_g"), Tensor<T>({d}, T(1)));
    params.add(layer_param(l, "ln2_b"), Tensor<T>({d}));
  }
}

template <typename T>
EncoderLayerWeights<T> bind_layer(const BoundParams<T>& p, std::size_t l) {
  return {p[layer_param(l, "wq")],    p[layer_param(l, "wk")],    p[layer_param(l, "wv")],
          p[layer_param(l, "wo")],    p[layer_param(l, "bo")],    p[layer_param(l, "w1")],
          p[layer_param(l, "b1")],    p[layer_param(l, "w2")],    p[layer_param(l, "b2")],
          p[layer_param(l, "ln1_g")], p[layer_param(l, "ln1_b")], p[layer_param(l, "ln2_g")],
          p[layer_param(l, "ln2_b")]};
}

/// softmax(Q K^T / sqrt(d_k)) V over the whole sequence, no masking.
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, Tensor<T>* probs_out = nullptr) {
  if (q.shape().size() != 2 || k.shape().size() != 2 || v.shape().size() != 2) {
    throw DimensionError("attention expects 2-D Q, K, V");
  }
  if (q.shape()[1] != k.shape()[1]) {
    throw DimensionError("attention: key dim mismatch " + to_string(q.shape()) + " vs " + to_string(k.shape()));
  }
  if (k.shape()[0] != v.shape()[0]) {
    throw DimensionError("attention: " + std::to_string(k.shape()[0]) + " keys but " + std::to_string(v.shape()[0]) +
                         " values");
  }
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(q.shape()[1]));
  auto scores = ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt_dk);
  auto probs = ops::softmax(scores, 1);
  if (probs_out) *probs_out = probs.value();
  return ops::matmul(probs, v);
}

/// Inverted dropout; identity when rate is zero or `rng` is null.
template <typename T>
Var<T> dropout(Var<T> x, double rate, std::mt19937_64* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  Tensor<T> mask(x.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask.data()) m = keep(*rng) ? s : T(0);
  return ops::mul(x, x.tape().constant(std::move(mask)));
}

/// Pre-norm layer: x + MSA(LN(x)), then + FFN(LN(.)).
template <typename T>
Var<T> encoder_layer(Var<T> x, const EncoderLayerWeights<T>& w, const EncoderConfig& cfg,
                     const AttentionObserver<T>* observer = nullptr, std::size_t layer_index = 0,
                     std::mt19937_64* dropout_rng = nullptr) {
  if (x.shape().size() != 2 || x.shape()[1] != cfg.hidden) {
    throw DimensionError("encoder_layer: tokens " + to_string(x.shape()) + " vs hidden " + std::to_string(cfg.hidden));
  }
  const std::size_t dk = cfg.key_dim();
  auto h = ops::layer_norm(x, w.ln1_g, w.ln1_b);
  auto q = ops::matmul(h, w.wq);
  auto k = ops::matmul(h, w.wk);
  auto v = ops::matmul(h, w.wv);
  std::vector<Var<T>> heads;
  heads.reserve(cfg.heads);
  for (std::size_t i = 0; i < cfg.heads; ++i) {
    Tensor<T> probs;
    heads.push_back(attention(ops::slice_cols(q, i * dk, (i + 1) * dk), ops::slice_cols(k, i * dk, (i + 1) * dk),
                              ops::slice_cols(v, i * dk, (i + 1) * dk), observer ? &probs : nullptr));
    if (observer) (*observer)(layer_index, i, probs);
  }
  auto merged = cfg.heads == 1 ? heads.front() : ops::concat_cols(heads);
  auto msa = ops::add_bias(ops::matmul(merged, w.wo), w.bo);
  x = ops::add(x, dropout(msa, cfg.dropout, dropout_rng));

  auto h2 = ops::layer_norm(x, w.ln2_g, w.ln2_b);
  auto f = ops::gelu(ops::add_bias(ops::matmul(h2, w.w1), w.b1));
  f = ops::add_bias(ops::matmul(f, w.w2), w.b2);
  return ops::add(x, dropout(f, cfg.dropout, dropout_rng));
}

template <typename T>
Var<T> encode(Var<T> x, const std::vector<EncoderLayerWeights<T>>& layers, const EncoderConfig& cfg,
              const AttentionObserver<T>* observer = nullptr, std::mt19937_64* dropout_rng = nullptr) {
  if (layers.size() != cfg.depth) {
    throw ConfigError("encoder depth " + std::to_string(cfg.depth) + " but " + std::to_string(layers.size()) +
                      " layers supplied");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) x = encoder_layer(x, layers[l], cfg, observer, l, dropout_rng);
  return x;
}

template <typename T>
TokenSequence<T> encode(const TokenSequence<T>& seq, const std::vector<EncoderLayerWeights<T>>& layers,
                        const EncoderConfig& cfg, const AttentionObserver<T>* observer = nullptr,
                        std::mt19937_64* dropout_rng = nullptr) {
  TokenSequence<T> out = seq;
  out.tokens = encode(seq.tokens, layers, cfg, observer, dropout_rng);
  return out;
}

}  // namespace dpit
