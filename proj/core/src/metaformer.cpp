#include "metaseg/metaformer.hpp"

namespace metaseg {

Var channel_mlp(Tape& t, Var x, Var w1, Var b1, Var w2, Var b2) {
  return t.linear(t.gelu(t.linear(x, w1, b1)), w2, b2);
}

Tensor channel_mlp_forward(const Tensor& x, const MlpParams& p) {
  Tape t;
  Var out = channel_mlp(t, t.leaf(x), t.leaf(p.w1), t.leaf(p.b1), t.leaf(p.w2), t.leaf(p.b2));
  return t.value(out);
}

namespace {

Var gmb_graph(Tape& t, Var f, Var ln1g, Var ln1b, const std::function<Var(Tape&, Var)>& mixer,
              Var ln2g, Var ln2b, Var w1, Var b1, Var w2, Var b2, double eps) {
  Var m = t.add(mixer(t, t.layer_norm(f, ln1g, ln1b, eps)), f);
  Var out = t.add(channel_mlp(t, t.layer_norm(m, ln2g, ln2b, eps), w1, b1, w2, b2), m);
  return out;
}

}  // namespace

Tensor gmb_forward(const Tensor& f, const GmbParams& p) {
  Tape t;
  auto mixer = [&p](Tape& tt, Var x) -> Var {
    switch (p.mixer_kind) {
      case MixerKind::Cra: {
        const auto& cp = std::get<CraParams>(p.mixer);
        return cra_attention(tt, x, tt.leaf(cp.wq), tt.leaf(cp.wk), tt.leaf(cp.wv),
                             tt.leaf(cp.wo), cp.heads, cp.pool_ratio, nullptr);
      }
      case MixerKind::Sra: {
        const auto& sp = std::get<SraParams>(p.mixer);
        return sra_attention(tt, x, tt.leaf(sp.wq), tt.leaf(sp.wk), tt.leaf(sp.wv),
                             tt.leaf(sp.wo), sp.heads, sp.pool_ratio, nullptr);
      }
      case MixerKind::DepthwiseConv3: {
        const auto& dp = std::get<DwConvParams>(p.mixer);
        return tt.conv2d(x, tt.leaf(dp.w), tt.leaf(dp.b), 1, 1, tt.value(x).c);
      }
      case MixerKind::Conv3: {
        const auto& cp = std::get<ConvParams>(p.mixer);
        return tt.conv2d(x, tt.leaf(cp.w), tt.leaf(cp.b), 1, 1, 1);
      }
      case MixerKind::AvgPool:
        return tt.smooth3x3(x);
    }
    throw ConfigError("gmb_forward: bad mixer kind");
  };
  Var out = gmb_graph(t, t.leaf(f), t.leaf(p.ln1_gamma), t.leaf(p.ln1_beta), mixer,
                      t.leaf(p.ln2_gamma), t.leaf(p.ln2_beta), t.leaf(p.mlp.w1),
                      t.leaf(p.mlp.b1), t.leaf(p.mlp.w2), t.leaf(p.mlp.b2), p.ln_eps);
  return t.value(out);
}

LayerNormLayer LayerNormLayer::create(ParamStore& store, const std::string& prefix,
                                      int channels) {
  LayerNormLayer l;
  l.gamma = prefix + ".gamma";
  l.beta = prefix + ".beta";
  store.create(l.gamma, Tensor::full(1, 1, 1, channels, 1.0));
  store.create(l.beta, Tensor::row(channels));
  return l;
}

Var LayerNormLayer::apply(Tape& t, Var x) const {
  return t.layer_norm(x, t.param(gamma), t.param(beta), eps);
}

MlpLayer MlpLayer::create(ParamStore& store, Rng& rng, const std::string& prefix, int channels,
                          int expansion) {
  MlpLayer l;
  const int hidden = channels * expansion;
  l.w1 = prefix + ".fc1.w";
  l.b1 = prefix + ".fc1.b";
  l.w2 = prefix + ".fc2.w";
  l.b2 = prefix + ".fc2.b";
  store.create(l.w1, init_weight_matrix(rng, channels, hidden));
  store.create(l.b1, Tensor::row(hidden));
  store.create(l.w2, init_weight_matrix(rng, hidden, channels));
  store.create(l.b2, Tensor::row(channels));
  return l;
}

Var MlpLayer::apply(Tape& t, Var x) const {
  return channel_mlp(t, x, t.param(w1), t.param(b1), t.param(w2), t.param(b2));
}

GmbLayer GmbLayer::create(ParamStore& store, Rng& rng, const std::string& prefix, int channels,
                          MixerKind kind, int heads, int pool_ratio, int expansion) {
  GmbLayer l;
  l.ln1 = LayerNormLayer::create(store, prefix + ".ln1", channels);
  l.mixer = make_mixer_layer(store, rng, prefix + ".mixer", kind, channels, heads, pool_ratio);
  l.ln2 = LayerNormLayer::create(store, prefix + ".ln2", channels);
  l.mlp = MlpLayer::create(store, rng, prefix + ".mlp", channels, expansion);
  return l;
}

Var GmbLayer::apply(Tape& t, Var x, ScoreMaps* capture) const {
  Var m = t.add(mixer_apply(t, mixer, ln1.apply(t, x), capture), x);
  Var out = t.add(mlp.apply(t, ln2.apply(t, m)), m);
  return out;
}

}  // namespace metaseg
