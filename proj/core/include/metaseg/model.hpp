#pragma once

#include <cstdint>

#include "metaseg/decoder.hpp"

namespace metaseg {

// Full architecture description; also the parsed form of the config file.
struct ModelConfig {
  std::uint64_t seed = 1;
  int input_h = 512;
  int input_w = 512;
  int num_classes = 150;
  std::array<int, 4> encoder_channels{32, 64, 160, 256};
  std::array<int, 4> encoder_blocks{1, 1, 1, 1};
  std::set<int> decoder_stages{2, 3, 4};
  MixerKind decoder_mixer = MixerKind::Cra;
  int decoder_heads = 8;
  std::array<int, 3> pool_ratios{8, 4, 2};
  int c_mlp = 256;
  int mlp_expansion = 4;

  int max_pool_ratio() const;
  // Divisor that input dims must satisfy: 32 * max pool ratio over
  // GMB-carrying stages.
  int required_divisor() const;

  void validate() const;
  void validate_input(int h, int w) const;

  EncoderConfig encoder_config() const;
  DecoderConfig decoder_config() const;
};

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  Var forward(Tape& t, Var image, AttnCapture* capture = nullptr) const;
  Tensor logits(const Tensor& image, AttnCapture* capture = nullptr);

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const Encoder& encoder() const { return encoder_; }
  const Decoder& decoder() const { return decoder_; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  Encoder encoder_;
  Decoder decoder_;
};

// Map raw [0,255] RGB planes to the network input range: scale to [0,1]
// then standardize with fixed mean 0.5 / std 0.5 per channel.
Tensor normalize_image(const Tensor& raw);

}  // namespace metaseg
