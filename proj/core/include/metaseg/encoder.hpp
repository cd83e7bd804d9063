#pragma once

#include <array>
#include <vector>

#include "metaseg/metaformer.hpp"

namespace metaseg {

struct EncoderConfig {
  std::array<int, 4> channels{32, 64, 160, 256};
  std::array<int, 4> blocks{1, 1, 1, 1};
  int mlp_expansion = 4;
};

// The four stage outputs F_1..F_4 at strides 4/8/16/32 with channel
// metadata mirroring the tensors.
struct FeaturePyramid {
  std::array<Tensor, 4> features;
  std::array<int, 4> channels{};
  static constexpr std::array<int, 4> strides{4, 8, 16, 32};

  int stage_index(int stage) const { return stage - 1; }
  const Tensor& stage(int s) const { return features[s - 1]; }
};

struct PyramidVars {
  std::array<Var, 4> features;
};

// Hierarchical conv encoder: a two-conv stem to stride 4, then per stage
// a stride-2 3x3 conv followed by MetaFormer blocks with the depthwise
// 3x3 mixer.
class Encoder {
 public:
  static Encoder create(ParamStore& store, Rng& rng, const EncoderConfig& cfg);

  PyramidVars apply(Tape& t, Var image) const;
  FeaturePyramid forward(ParamStore& store, const Tensor& image) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::string stem1_w, stem1_b, stem2_w, stem2_b;
  std::array<std::string, 3> down_w, down_b;  // stages 2..4
  std::array<std::vector<GmbLayer>, 4> blocks_;
};

}  // namespace metaseg
