#include "metaseg/attention.hpp"

#include <cmath>

namespace metaseg {

MixerKind parse_mixer(const std::string& name) {
  if (name == "cra") return MixerKind::Cra;
  if (name == "sra") return MixerKind::Sra;
  if (name == "avgpool") return MixerKind::AvgPool;
  if (name == "dwconv") return MixerKind::DepthwiseConv3;
  if (name == "conv") return MixerKind::Conv3;
  throw ConfigError("unknown mixer '" + name + "' (expected cra|sra|avgpool|dwconv|conv)");
}

std::string mixer_name(MixerKind kind) {
  switch (kind) {
    case MixerKind::Cra: return "cra";
    case MixerKind::Sra: return "sra";
    case MixerKind::AvgPool: return "avgpool";
    case MixerKind::DepthwiseConv3: return "dwconv";
    case MixerKind::Conv3: return "conv";
  }
  return "?";
}

Tensor init_weight_matrix(Rng& rng, int in_dim, int out_dim) {
  const double bound = std::sqrt(1.0 / in_dim);
  return rng.uniform_tensor(1, 1, in_dim, out_dim, -bound, bound);
}

Tensor init_conv_weight(Rng& rng, int out_c, int in_c_per_group, int k) {
  const double bound = std::sqrt(1.0 / (static_cast<double>(in_c_per_group) * k * k));
  return rng.uniform_tensor(out_c, in_c_per_group, k, k, -bound, bound);
}

namespace {

void check_attention_geometry(const char* op, const Tensor& f, const Tensor& wq,
                              const Tensor& wk, const Tensor& wv, const Tensor& wo, int heads,
                              int pool_ratio, int qk_head_dim) {
  const int c = f.c;
  if (heads < 1 || c % heads != 0) {
    throw ShapeError(std::string(op) + ": channels " + std::to_string(c) +
                     " not divisible by heads " + std::to_string(heads));
  }
  if (pool_ratio < 1 || f.h % pool_ratio != 0 || f.w % pool_ratio != 0) {
    throw ShapeError(std::string(op) + ": spatial dims " + std::to_string(f.h) + "x" +
                     std::to_string(f.w) + " not divisible by pool ratio " +
                     std::to_string(pool_ratio));
  }
  const int qk_cols = qk_head_dim * heads;
  if (wq.rows() != c || wq.cols() != qk_cols || wk.rows() != c || wk.cols() != qk_cols) {
    throw ShapeError(std::string(op) + ": wq/wk must be " + std::to_string(c) + "x" +
                     std::to_string(qk_cols) + ", got " + wq.shape_str() + " / " +
                     wk.shape_str());
  }
  if (wv.rows() != c || wv.cols() != c || wo.rows() != c || wo.cols() != c) {
    throw ShapeError(std::string(op) + ": wv/wo must be " + std::to_string(c) + "x" +
                     std::to_string(c));
  }
}

void capture_scores(Tape& t, ScoreMaps* capture, const std::vector<Var>& attn_per_head,
                    const Tensor& f, int pool_ratio) {
  if (capture == nullptr) return;
  capture->query_h = f.h;
  capture->query_w = f.w;
  capture->key_h = f.h / pool_ratio;
  capture->key_w = f.w / pool_ratio;
  capture->scores.assign(f.n, {});
  for (int item = 0; item < f.n; ++item) {
    capture->scores[item].reserve(attn_per_head.size());
    for (const Var& av : attn_per_head) {
      const Tensor& a = t.value(av);
      Tensor slice(1, 1, a.h, a.w);
      const std::size_t plane = static_cast<std::size_t>(a.h) * a.w;
      std::copy_n(a.data.data() + plane * item, plane, slice.data.data());
      capture->scores[item].push_back(std::move(slice));
    }
  }
}

// Shared multi-head attention skeleton; qk_head_dim = 1 gives CRA,
// qk_head_dim = C/heads with 1/sqrt(d) scaling gives SRA.
Var pooled_attention(Tape& t, Var f, Var wq, Var wk, Var wv, Var wo, int heads, int pool_ratio,
                     int qk_head_dim, bool scale_scores, ScoreMaps* capture, const char* op) {
  const Tensor& fv = t.value(f);
  check_attention_geometry(op, fv, t.value(wq), t.value(wk), t.value(wv), t.value(wo), heads,
                           pool_ratio, qk_head_dim);
  const int c = fv.c;
  const int head_dim = c / heads;

  Var q_tok = t.to_tokens(f);
  Var pooled = t.avg_pool(f, pool_ratio);
  Var kv_tok = t.to_tokens(pooled);

  Var q_all = t.matmul(q_tok, wq);
  Var k_all = t.matmul(kv_tok, wk);
  Var v_all = t.matmul(kv_tok, wv);

  std::vector<Var> head_outs;
  std::vector<Var> attn_maps;
  head_outs.reserve(heads);
  attn_maps.reserve(heads);
  for (int j = 0; j < heads; ++j) {
    Var qj = t.slice_lastdim(q_all, j * qk_head_dim, qk_head_dim);
    Var kj = t.slice_lastdim(k_all, j * qk_head_dim, qk_head_dim);
    Var scores = t.matmul(qj, t.transpose_last2(kj));
    if (scale_scores) scores = t.scale(scores, 1.0 / std::sqrt(qk_head_dim));
    Var attn = t.softmax_lastdim(scores);
    attn_maps.push_back(attn);
    Var vj = t.slice_lastdim(v_all, j * head_dim, head_dim);
    head_outs.push_back(t.matmul(attn, vj));
  }
  capture_scores(t, capture, attn_maps, fv, pool_ratio);

  Var cat = heads == 1 ? head_outs[0] : t.concat_lastdim(head_outs);
  Var out_tok = t.matmul(cat, wo);
  return t.from_tokens(out_tok, c, fv.h, fv.w);
}

}  // namespace

Var cra_attention(Tape& t, Var f, Var wq, Var wk, Var wv, Var wo, int heads, int pool_ratio,
                  ScoreMaps* capture) {
  return pooled_attention(t, f, wq, wk, wv, wo, heads, pool_ratio, 1, false, capture,
                          "cra_forward");
}

Var sra_attention(Tape& t, Var f, Var wq, Var wk, Var wv, Var wo, int heads, int pool_ratio,
                  ScoreMaps* capture) {
  const int head_dim = t.value(f).c / std::max(heads, 1);
  return pooled_attention(t, f, wq, wk, wv, wo, heads, pool_ratio, head_dim, true, capture,
                          "sra_forward");
}

Tensor cra_forward(const Tensor& f, const CraParams& p, ScoreMaps* capture) {
  Tape t;
  Var out = cra_attention(t, t.leaf(f), t.leaf(p.wq), t.leaf(p.wk), t.leaf(p.wv), t.leaf(p.wo),
                          p.heads, p.pool_ratio, capture);
  return t.value(out);
}

Tensor sra_forward(const Tensor& f, const SraParams& p, ScoreMaps* capture) {
  Tape t;
  Var out = sra_attention(t, t.leaf(f), t.leaf(p.wq), t.leaf(p.wk), t.leaf(p.wv), t.leaf(p.wo),
                          p.heads, p.pool_ratio, capture);
  return t.value(out);
}

Tensor mixer_forward(MixerKind kind, const Tensor& f, const MixerParams& params) {
  switch (kind) {
    case MixerKind::Cra:
      if (const auto* p = std::get_if<CraParams>(&params)) return cra_forward(f, *p);
      break;
    case MixerKind::Sra:
      if (const auto* p = std::get_if<SraParams>(&params)) return sra_forward(f, *p);
      break;
    case MixerKind::DepthwiseConv3:
      if (const auto* p = std::get_if<DwConvParams>(&params)) {
        return ops::conv2d(f, p->w, &p->b, 1, 1, f.c);
      }
      break;
    case MixerKind::Conv3:
      if (const auto* p = std::get_if<ConvParams>(&params)) {
        return ops::conv2d(f, p->w, &p->b, 1, 1, 1);
      }
      break;
    case MixerKind::AvgPool:
      if (std::get_if<AvgPoolParams>(&params) != nullptr) return ops::smooth3x3(f);
      break;
  }
  throw ConfigError("mixer_forward: params do not match mixer kind '" + mixer_name(kind) + "'");
}

CraLayer CraLayer::create(ParamStore& store, Rng& rng, const std::string& prefix, int channels,
                          int heads, int pool_ratio) {
  CraLayer l;
  l.channels = channels;
  l.heads = heads;
  l.pool_ratio = pool_ratio;
  l.wq = prefix + ".wq";
  l.wk = prefix + ".wk";
  l.wv = prefix + ".wv";
  l.wo = prefix + ".wo";
  store.create(l.wq, init_weight_matrix(rng, channels, heads));
  store.create(l.wk, init_weight_matrix(rng, channels, heads));
  store.create(l.wv, init_weight_matrix(rng, channels, channels));
  store.create(l.wo, init_weight_matrix(rng, channels, channels));
  return l;
}

Var CraLayer::apply(Tape& t, Var x, ScoreMaps* capture) const {
  return cra_attention(t, x, t.param(wq), t.param(wk), t.param(wv), t.param(wo), heads,
                       pool_ratio, capture);
}

SraLayer SraLayer::create(ParamStore& store, Rng& rng, const std::string& prefix, int channels,
                          int heads, int pool_ratio) {
  SraLayer l;
  l.channels = channels;
  l.heads = heads;
  l.pool_ratio = pool_ratio;
  l.wq = prefix + ".wq";
  l.wk = prefix + ".wk";
  l.wv = prefix + ".wv";
  l.wo = prefix + ".wo";
  store.create(l.wq, init_weight_matrix(rng, channels, channels));
  store.create(l.wk, init_weight_matrix(rng, channels, channels));
  store.create(l.wv, init_weight_matrix(rng, channels, channels));
  store.create(l.wo, init_weight_matrix(rng, channels, channels));
  return l;
}

Var SraLayer::apply(Tape& t, Var x, ScoreMaps* capture) const {
  return sra_attention(t, x, t.param(wq), t.param(wk), t.param(wv), t.param(wo), heads,
                       pool_ratio, capture);
}

DwConvMixerLayer DwConvMixerLayer::create(ParamStore& store, Rng& rng, const std::string& prefix,
                                          int channels) {
  DwConvMixerLayer l;
  l.channels = channels;
  l.w = prefix + ".w";
  l.b = prefix + ".b";
  store.create(l.w, init_conv_weight(rng, channels, 1, 3));
  store.create(l.b, Tensor::row(channels));
  return l;
}

Var DwConvMixerLayer::apply(Tape& t, Var x) const {
  return t.conv2d(x, t.param(w), t.param(b), 1, 1, channels);
}

ConvMixerLayer ConvMixerLayer::create(ParamStore& store, Rng& rng, const std::string& prefix,
                                      int channels) {
  ConvMixerLayer l;
  l.channels = channels;
  l.w = prefix + ".w";
  l.b = prefix + ".b";
  store.create(l.w, init_conv_weight(rng, channels, channels, 3));
  store.create(l.b, Tensor::row(channels));
  return l;
}

Var ConvMixerLayer::apply(Tape& t, Var x) const {
  return t.conv2d(x, t.param(w), t.param(b), 1, 1, 1);
}

MixerLayer make_mixer_layer(ParamStore& store, Rng& rng, const std::string& prefix,
                            MixerKind kind, int channels, int heads, int pool_ratio) {
  switch (kind) {
    case MixerKind::Cra:
      return CraLayer::create(store, rng, prefix + ".cra", channels, heads, pool_ratio);
    case MixerKind::Sra:
      return SraLayer::create(store, rng, prefix + ".sra", channels, heads, pool_ratio);
    case MixerKind::DepthwiseConv3:
      return DwConvMixerLayer::create(store, rng, prefix + ".dw", channels);
    case MixerKind::Conv3:
      return ConvMixerLayer::create(store, rng, prefix + ".conv", channels);
    case MixerKind::AvgPool:
      return AvgPoolMixerLayer{};
  }
  throw ConfigError("make_mixer_layer: bad mixer kind");
}

Var mixer_apply(Tape& t, const MixerLayer& mixer, Var x, ScoreMaps* capture) {
  return std::visit(
      [&](const auto& m) -> Var {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, CraLayer> || std::is_same_v<T, SraLayer>) {
          return m.apply(t, x, capture);
        } else {
          return m.apply(t, x);
        }
      },
      mixer);
}

}  // namespace metaseg
