#include "metaseg/encoder.hpp"

namespace metaseg {

Encoder Encoder::create(ParamStore& store, Rng& rng, const EncoderConfig& cfg) {
  Encoder e;
  e.cfg_ = cfg;
  const auto& ch = cfg.channels;

  e.stem1_w = "encoder.stem.conv1.w";
  e.stem1_b = "encoder.stem.conv1.b";
  e.stem2_w = "encoder.stem.conv2.w";
  e.stem2_b = "encoder.stem.conv2.b";
  store.create(e.stem1_w, init_conv_weight(rng, ch[0], 3, 3));
  store.create(e.stem1_b, Tensor::row(ch[0]));
  store.create(e.stem2_w, init_conv_weight(rng, ch[0], ch[0], 3));
  store.create(e.stem2_b, Tensor::row(ch[0]));

  for (int stage = 1; stage <= 4; ++stage) {
    const int c = ch[stage - 1];
    if (stage >= 2) {
      const int prev = ch[stage - 2];
      const std::string prefix = "encoder.stage" + std::to_string(stage) + ".down";
      e.down_w[stage - 2] = prefix + ".w";
      e.down_b[stage - 2] = prefix + ".b";
      store.create(e.down_w[stage - 2], init_conv_weight(rng, c, prev, 3));
      store.create(e.down_b[stage - 2], Tensor::row(c));
    }
    auto& blocks = e.blocks_[stage - 1];
    for (int b = 0; b < cfg.blocks[stage - 1]; ++b) {
      const std::string prefix =
          "encoder.stage" + std::to_string(stage) + ".block" + std::to_string(b);
      blocks.push_back(GmbLayer::create(store, rng, prefix, c, MixerKind::DepthwiseConv3,
                                        /*heads=*/1, /*pool_ratio=*/1, cfg.mlp_expansion));
    }
  }
  return e;
}

PyramidVars Encoder::apply(Tape& t, Var image) const {
  const Tensor& img = t.value(image);
  if (img.c != 3) {
    throw ShapeError("encode: expected 3 input channels, got " + img.shape_str());
  }
  if (img.h % 32 != 0 || img.w % 32 != 0) {
    throw ConfigError("encode: input dims " + std::to_string(img.h) + "x" +
                      std::to_string(img.w) + " must be divisible by 32");
  }

  PyramidVars pyr;
  Var x = t.conv2d(image, t.param(stem1_w), t.param(stem1_b), 2, 1, 1);
  x = t.gelu(x);
  x = t.conv2d(x, t.param(stem2_w), t.param(stem2_b), 2, 1, 1);
  for (const GmbLayer& b : blocks_[0]) x = b.apply(t, x);
  pyr.features[0] = x;

  for (int stage = 2; stage <= 4; ++stage) {
    x = t.conv2d(x, t.param(down_w[stage - 2]), t.param(down_b[stage - 2]), 2, 1, 1);
    for (const GmbLayer& b : blocks_[stage - 1]) x = b.apply(t, x);
    pyr.features[stage - 1] = x;
  }
  return pyr;
}

FeaturePyramid Encoder::forward(ParamStore& store, const Tensor& image) const {
  Tape t(&store);
  PyramidVars vars = apply(t, t.leaf(image));
  FeaturePyramid pyr;
  for (int i = 0; i < 4; ++i) {
    pyr.features[i] = t.value(vars.features[i]);
    pyr.channels[i] = pyr.features[i].c;
  }
  return pyr;
}

}  // namespace metaseg
