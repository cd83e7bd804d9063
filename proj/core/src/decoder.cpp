#include "metaseg/decoder.hpp"

namespace metaseg {

Decoder Decoder::create(ParamStore& store, Rng& rng, const DecoderConfig& cfg,
                        const std::array<int, 4>& stage_channels) {
  for (int s : cfg.gmb_stages) {
    if (s < 2 || s > 4) {
      throw ConfigError("decoder: GMB stages must lie in {2,3,4}, got " + std::to_string(s));
    }
  }
  Decoder d;
  d.cfg_ = cfg;
  for (int stage = 2; stage <= 4; ++stage) {
    if (cfg.gmb_stages.count(stage) == 0) continue;
    const int c = stage_channels[stage - 1];
    const int r = cfg.pool_ratios[stage - 2];
    const std::string prefix = "decoder.stage" + std::to_string(stage) + ".gmb";
    d.gmbs_.emplace(stage, GmbLayer::create(store, rng, prefix, c, cfg.mixer, cfg.heads, r,
                                            cfg.mlp_expansion));
  }
  const int c_fuse = stage_channels[1] + stage_channels[2] + stage_channels[3];
  d.fuse_w = "decoder.fuse.w";
  d.fuse_b = "decoder.fuse.b";
  d.head_w = "decoder.head.w";
  d.head_b = "decoder.head.b";
  store.create(d.fuse_w, init_weight_matrix(rng, c_fuse, cfg.c_mlp));
  store.create(d.fuse_b, Tensor::row(cfg.c_mlp));
  store.create(d.head_w, init_weight_matrix(rng, cfg.c_mlp, cfg.num_classes));
  store.create(d.head_b, Tensor::row(cfg.num_classes));
  return d;
}

Var Decoder::apply(Tape& t, const PyramidVars& pyramid, AttnCapture* capture) const {
  for (int stage = 2; stage <= 4; ++stage) {
    if (!pyramid.features[stage - 1].valid()) {
      throw ConfigError("decode: pyramid is missing stage " + std::to_string(stage));
    }
  }
  const Tensor& f2 = t.value(pyramid.features[1]);
  const int out_h = f2.h, out_w = f2.w;  // stride-8 grid

  std::vector<Var> upsampled;
  for (int stage = 2; stage <= 4; ++stage) {
    Var f = pyramid.features[stage - 1];
    auto it = gmbs_.find(stage);
    if (it != gmbs_.end()) {
      ScoreMaps* maps = nullptr;
      if (capture != nullptr) maps = &(*capture)[stage];
      f = it->second.apply(t, f, maps);
    }
    upsampled.push_back(t.upsample_bilinear(f, out_h, out_w));
  }
  Var fused = t.linear(t.concat_channels(upsampled), t.param(fuse_w), t.param(fuse_b));
  return t.linear(fused, t.param(head_w), t.param(head_b));
}

Tensor Decoder::forward(ParamStore& store, const FeaturePyramid& pyramid,
                        AttnCapture* capture) const {
  Tape t(&store);
  PyramidVars vars;
  for (int i = 0; i < 4; ++i) vars.features[i] = t.leaf(pyramid.features[i]);
  return t.value(apply(t, vars, capture));
}

LabelMap predict_mask(const Tensor& logits, int out_h, int out_w) {
  if (!logits.all_finite()) throw NumericError("predict_mask: non-finite logits");
  const Tensor up = ops::upsample_bilinear(logits, out_h, out_w);
  LabelMap mask(up.n, up.h, up.w);
  for (int in = 0; in < up.n; ++in) {
    for (int iy = 0; iy < up.h; ++iy) {
      for (int ix = 0; ix < up.w; ++ix) {
        int best = 0;
        double best_v = up.at(in, 0, iy, ix);
        for (int ic = 1; ic < up.c; ++ic) {
          const double v = up.at(in, ic, iy, ix);
          if (v > best_v) {
            best_v = v;
            best = ic;
          }
        }
        mask.at(in, iy, ix) = best;
      }
    }
  }
  return mask;
}

}  // namespace metaseg
