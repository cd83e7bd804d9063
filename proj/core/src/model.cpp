#include "metaseg/model.hpp"

#include <algorithm>
#include <sstream>

namespace metaseg {

int ModelConfig::max_pool_ratio() const {
  int mx = 1;
  for (int s : decoder_stages) mx = std::max(mx, pool_ratios[s - 2]);
  return mx;
}

int ModelConfig::required_divisor() const { return 32 * max_pool_ratio(); }

void ModelConfig::validate() const {
  for (int c : encoder_channels) {
    if (c < 1) throw ConfigError("config: encoder channels must be >= 1");
  }
  for (int b : encoder_blocks) {
    if (b < 0) throw ConfigError("config: encoder blocks must be >= 0");
  }
  for (int s : decoder_stages) {
    if (s < 2 || s > 4) {
      throw ConfigError("config: decoder.stages must be a subset of {2,3,4} (stage 1 carries "
                        "too much low-level detail and is never fused)");
    }
  }
  for (int r : pool_ratios) {
    if (r < 1) throw ConfigError("config: pool ratios must be >= 1");
  }
  if (decoder_heads < 1) throw ConfigError("config: decoder.heads must be >= 1");
  if (num_classes < 2) throw ConfigError("config: num_classes must be >= 2");
  if (c_mlp < 1) throw ConfigError("config: decoder.c_mlp must be >= 1");
  if (mlp_expansion < 1) throw ConfigError("config: mlp.expansion must be >= 1");
  if (decoder_mixer == MixerKind::Cra || decoder_mixer == MixerKind::Sra) {
    for (int s : decoder_stages) {
      const int c = encoder_channels[s - 1];
      if (c % decoder_heads != 0) {
        std::ostringstream os;
        os << "config: stage " << s << " channels " << c << " not divisible by decoder.heads "
           << decoder_heads;
        throw ConfigError(os.str());
      }
    }
  }
  validate_input(input_h, input_w);
}

void ModelConfig::validate_input(int h, int w) const {
  const int div = required_divisor();
  if (h < div || w < div || h % div != 0 || w % div != 0) {
    std::ostringstream os;
    os << "config: input dims " << h << "x" << w << " must be positive multiples of " << div
       << " (32 * max pool ratio)";
    throw ConfigError(os.str());
  }
}

EncoderConfig ModelConfig::encoder_config() const {
  EncoderConfig e;
  e.channels = encoder_channels;
  e.blocks = encoder_blocks;
  e.mlp_expansion = mlp_expansion;
  return e;
}

DecoderConfig ModelConfig::decoder_config() const {
  DecoderConfig d;
  d.gmb_stages = decoder_stages;
  d.pool_ratios = pool_ratios;
  d.heads = decoder_heads;
  d.c_mlp = c_mlp;
  d.num_classes = num_classes;
  d.mixer = decoder_mixer;
  d.mlp_expansion = mlp_expansion;
  return d;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  encoder_ = Encoder::create(store_, rng, cfg_.encoder_config());
  decoder_ = Decoder::create(store_, rng, cfg_.decoder_config(), cfg_.encoder_channels);
}

Var Model::forward(Tape& t, Var image, AttnCapture* capture) const {
  const Tensor& img = t.value(image);
  cfg_.validate_input(img.h, img.w);
  PyramidVars pyr = encoder_.apply(t, image);
  return decoder_.apply(t, pyr, capture);
}

Tensor Model::logits(const Tensor& image, AttnCapture* capture) {
  Tape t(&store_);
  return t.value(forward(t, t.leaf(image), capture));
}

Tensor normalize_image(const Tensor& raw) {
  Tensor out(raw.n, raw.c, raw.h, raw.w);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out.data[i] = (raw.data[i] / 255.0 - 0.5) / 0.5;
  }
  return out;
}

}  // namespace metaseg
