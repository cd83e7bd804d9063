#pragma once

#include <string>

#include "metaseg/attention.hpp"

namespace metaseg {

constexpr double kLayerNormEps = 1e-6;

// Eq-style value forms, used by the pure wrappers and tests.
struct MlpParams {
  Tensor w1, b1;  // C -> e*C
  Tensor w2, b2;  // e*C -> C
};

struct GmbParams {
  Tensor ln1_gamma, ln1_beta;
  MixerKind mixer_kind = MixerKind::Cra;
  MixerParams mixer = AvgPoolParams{};
  Tensor ln2_gamma, ln2_beta;
  MlpParams mlp;
  double ln_eps = kLayerNormEps;
};

Var channel_mlp(Tape& t, Var x, Var w1, Var b1, Var w2, Var b2);
Tensor channel_mlp_forward(const Tensor& x, const MlpParams& p);
Tensor gmb_forward(const Tensor& f, const GmbParams& p);

// Store-backed layers.
struct LayerNormLayer {
  std::string gamma, beta;
  double eps = kLayerNormEps;

  static LayerNormLayer create(ParamStore& store, const std::string& prefix, int channels);
  Var apply(Tape& t, Var x) const;
};

struct MlpLayer {
  std::string w1, b1, w2, b2;

  static MlpLayer create(ParamStore& store, Rng& rng, const std::string& prefix, int channels,
                         int expansion);
  Var apply(Tape& t, Var x) const;
};

// Global Meta Block: two residual sub-blocks around a pluggable token
// mixer and the two-layer channel MLP.
struct GmbLayer {
  LayerNormLayer ln1, ln2;
  MixerLayer mixer;
  MlpLayer mlp;

  static GmbLayer create(ParamStore& store, Rng& rng, const std::string& prefix, int channels,
                         MixerKind kind, int heads, int pool_ratio, int expansion);
  Var apply(Tape& t, Var x, ScoreMaps* capture = nullptr) const;
};

}  // namespace metaseg
