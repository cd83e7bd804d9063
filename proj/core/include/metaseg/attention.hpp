#pragma once

#include <string>
#include <variant>
#include <vector>

#include "metaseg/rng.hpp"
#include "metaseg/tape.hpp"

namespace metaseg {

enum class MixerKind { Cra, Sra, AvgPool, DepthwiseConv3, Conv3 };

MixerKind parse_mixer(const std::string& name);
std::string mixer_name(MixerKind kind);

// Per-head attention matrices captured during a forward pass:
// scores[item][head] is {1,1,N,Nk} with N = query_h*query_w tokens and
// Nk = key_h*key_w pooled tokens. Each row is a softmax distribution.
struct ScoreMaps {
  int query_h = 0, query_w = 0;
  int key_h = 0, key_w = 0;
  std::vector<std::vector<Tensor>> scores;
};

// Channel-reduction attention: every head squeezes query and key to one
// channel, keys/values come from an avg-pooled copy of the input.
// wq, wk: {1,1,C,heads} (column j = head j's C->1 projection);
// wv, wo: {1,1,C,C} (head j owns columns [j*C/heads, (j+1)*C/heads)).
struct CraParams {
  Tensor wq, wk, wv, wo;
  int heads = 1;
  int pool_ratio = 1;
};

// Spatial-reduction baseline: full per-head channel width C/heads for
// query and key, scores scaled by 1/sqrt(C/heads). wq/wk/wv/wo {1,1,C,C}.
struct SraParams {
  Tensor wq, wk, wv, wo;
  int heads = 1;
  int pool_ratio = 1;
};

struct DwConvParams {
  Tensor w;  // [C,1,3,3]
  Tensor b;  // {1,1,1,C}
};

struct ConvParams {
  Tensor w;  // [C,C,3,3]
  Tensor b;
};

struct AvgPoolParams {};

using MixerParams = std::variant<CraParams, SraParams, DwConvParams, ConvParams, AvgPoolParams>;

// Tape builders shared by the pure wrappers and the model layers.
Var cra_attention(Tape& t, Var f, Var wq, Var wk, Var wv, Var wo, int heads, int pool_ratio,
                  ScoreMaps* capture);
Var sra_attention(Tape& t, Var f, Var wq, Var wk, Var wv, Var wo, int heads, int pool_ratio,
                  ScoreMaps* capture);

Tensor cra_forward(const Tensor& f, const CraParams& p, ScoreMaps* capture = nullptr);
Tensor sra_forward(const Tensor& f, const SraParams& p, ScoreMaps* capture = nullptr);
Tensor mixer_forward(MixerKind kind, const Tensor& f, const MixerParams& params);

// Store-backed layer forms used by the model.
struct CraLayer {
  std::string wq, wk, wv, wo;
  int channels = 0, heads = 1, pool_ratio = 1;

  static CraLayer create(ParamStore& store, Rng& rng, const std::string& prefix, int channels,
                         int heads, int pool_ratio);
  Var apply(Tape& t, Var x, ScoreMaps* capture) const;
};

struct SraLayer {
  std::string wq, wk, wv, wo;
  int channels = 0, heads = 1, pool_ratio = 1;

  static SraLayer create(ParamStore& store, Rng& rng, const std::string& prefix, int channels,
                         int heads, int pool_ratio);
  Var apply(Tape& t, Var x, ScoreMaps* capture) const;
};

struct DwConvMixerLayer {
  std::string w, b;
  int channels = 0;

  static DwConvMixerLayer create(ParamStore& store, Rng& rng, const std::string& prefix,
                                 int channels);
  Var apply(Tape& t, Var x) const;
};

struct ConvMixerLayer {
  std::string w, b;
  int channels = 0;

  static ConvMixerLayer create(ParamStore& store, Rng& rng, const std::string& prefix,
                               int channels);
  Var apply(Tape& t, Var x) const;
};

struct AvgPoolMixerLayer {
  Var apply(Tape& t, Var x) const { return t.smooth3x3(x); }
};

using MixerLayer =
    std::variant<CraLayer, SraLayer, DwConvMixerLayer, ConvMixerLayer, AvgPoolMixerLayer>;

MixerLayer make_mixer_layer(ParamStore& store, Rng& rng, const std::string& prefix,
                            MixerKind kind, int channels, int heads, int pool_ratio);
Var mixer_apply(Tape& t, const MixerLayer& mixer, Var x, ScoreMaps* capture);

// Seeded uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weight init.
Tensor init_weight_matrix(Rng& rng, int in_dim, int out_dim);
Tensor init_conv_weight(Rng& rng, int out_c, int in_c_per_group, int k);

}  // namespace metaseg
