#pragma once

#include <map>
#include <set>

#include "metaseg/encoder.hpp"

namespace metaseg {

struct DecoderConfig {
  std::set<int> gmb_stages{2, 3, 4};     // stages carrying a GMB; others pass through
  std::array<int, 3> pool_ratios{8, 4, 2};  // r_2, r_3, r_4
  int heads = 8;
  int c_mlp = 256;
  int num_classes = 150;
  MixerKind mixer = MixerKind::Cra;
  int mlp_expansion = 4;
};

// stage -> captured attention maps for that stage's mixer.
using AttnCapture = std::map<int, ScoreMaps>;

// Eq-1 decoder: per-stage GMBs on stages 2..4, bilinear unification to
// the stride-8 grid, channel concat, fusion linear, class head. The
// fusion consumes all three stages regardless of which carry a GMB.
class Decoder {
 public:
  static Decoder create(ParamStore& store, Rng& rng, const DecoderConfig& cfg,
                        const std::array<int, 4>& stage_channels);

  Var apply(Tape& t, const PyramidVars& pyramid, AttnCapture* capture = nullptr) const;
  Tensor forward(ParamStore& store, const FeaturePyramid& pyramid,
                 AttnCapture* capture = nullptr) const;

  const DecoderConfig& config() const { return cfg_; }

 private:
  DecoderConfig cfg_;
  std::map<int, GmbLayer> gmbs_;
  std::string fuse_w, fuse_b, head_w, head_b;
};

// Bilinear-upsample logits to (out_h, out_w) and argmax over classes;
// ties resolve to the lowest class index.
LabelMap predict_mask(const Tensor& logits, int out_h, int out_w);

}  // namespace metaseg
