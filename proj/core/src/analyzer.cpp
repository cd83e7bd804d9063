#include "metaseg/analyzer.hpp"

#include <cmath>
#include <sstream>

namespace metaseg {

namespace {

std::uint64_t u64(int v) { return static_cast<std::uint64_t>(v); }

}  // namespace

std::uint64_t FlopReport::qk_total() const {
  std::uint64_t t = 0;
  for (const auto& s : stages) t += s.qk_macs;
  return t;
}

std::uint64_t FlopReport::av_total() const {
  std::uint64_t t = 0;
  for (const auto& s : stages) t += s.av_macs;
  return t;
}

std::uint64_t FlopReport::proj_total() const {
  std::uint64_t t = 0;
  for (const auto& s : stages) t += s.proj_macs;
  return t;
}

double reduction_percent(const FlopReport& sra, const FlopReport& cra) {
  const double s = static_cast<double>(sra.headline_macs());
  const double c = static_cast<double>(cra.headline_macs());
  return 100.0 * (1.0 - c / s);
}

FlopReport count_attention_macs(const ModelConfig& cfg, MixerKind mixer, int input_h,
                                int input_w) {
  if (mixer != MixerKind::Cra && mixer != MixerKind::Sra) {
    throw ConfigError("count_attention_macs: mixer must be cra or sra");
  }
  FlopReport report;
  report.mixer = mixer;
  report.input_h = input_h;
  report.input_w = input_w;
  for (int stage : cfg.decoder_stages) {
    const int stride = 1 << (stage + 1);
    const int sh = input_h / stride;
    const int sw = input_w / stride;
    const int r = cfg.pool_ratios[stage - 2];
    const int c = cfg.encoder_channels[stage - 1];
    const std::uint64_t n = u64(sh) * u64(sw);
    const std::uint64_t nk = n / (u64(r) * u64(r));
    StageMacs s;
    s.stage = stage;
    s.channels = c;
    s.tokens = n;
    s.key_tokens = nk;
    if (mixer == MixerKind::Sra) {
      // per head Q[N,d] K[Nk,d]^T with d = C/heads, summed over heads
      s.qk_macs = n * nk * u64(c);
      s.proj_macs = (n + 2 * nk + n) * u64(c) * u64(c);  // q, k, v, o projections
    } else {
      // per head Q[N,1] K[Nk,1]^T
      s.qk_macs = u64(cfg.decoder_heads) * n * nk;
      s.proj_macs = (n + nk) * u64(c) * u64(cfg.decoder_heads)  // q, k squeeze
                    + nk * u64(c) * u64(c)                      // v
                    + n * u64(c) * u64(c);                      // o
    }
    s.av_macs = n * nk * u64(c);
    report.stages.push_back(s);
  }
  return report;
}

Eq4Result eq4_model(double n_tokens, double r, double c) {
  if (n_tokens < 1.0 || r < 1.0 || c < 1.0) {
    throw ConfigError("eq4_model: all arguments must be >= 1");
  }
  const double np = n_tokens / r;
  Eq4Result out;
  out.omega_sra = np * np * c + np * np * c;
  out.omega_cra = np * np * 1.0 + np * np * c;
  return out;
}

ParamCount count_params(const ModelConfig& cfg) {
  ParamCount out;
  const auto& ch = cfg.encoder_channels;
  auto conv_params = [](int out_c, int in_c_per_group, int k) {
    return u64(out_c) * u64(in_c_per_group) * u64(k) * u64(k) + u64(out_c);
  };
  auto linear_params = [](int in_c, int out_c) { return u64(in_c) * u64(out_c) + u64(out_c); };
  auto mixer_params = [&](MixerKind kind, int c, int heads) -> std::uint64_t {
    switch (kind) {
      case MixerKind::Cra:
        return 2 * u64(c) * u64(heads) + 2 * u64(c) * u64(c);  // wq, wk, wv, wo (no biases)
      case MixerKind::Sra:
        return 4 * u64(c) * u64(c);
      case MixerKind::DepthwiseConv3:
        return conv_params(c, 1, 3);
      case MixerKind::Conv3:
        return conv_params(c, c, 3);
      case MixerKind::AvgPool:
        return 0;
    }
    return 0;
  };
  auto gmb_params = [&](MixerKind kind, int c, int heads) {
    const std::uint64_t ln = 2 * 2 * u64(c);
    const std::uint64_t mlp = linear_params(c, c * cfg.mlp_expansion) +
                              linear_params(c * cfg.mlp_expansion, c);
    return ln + mixer_params(kind, c, heads) + mlp;
  };

  std::uint64_t enc = conv_params(ch[0], 3, 3) + conv_params(ch[0], ch[0], 3);
  for (int stage = 1; stage <= 4; ++stage) {
    if (stage >= 2) enc += conv_params(ch[stage - 1], ch[stage - 2], 3);
    enc += u64(cfg.encoder_blocks[stage - 1]) *
           gmb_params(MixerKind::DepthwiseConv3, ch[stage - 1], 1);
  }
  out.per_module.emplace_back("encoder", enc);

  std::uint64_t dec_gmb = 0;
  for (int stage : cfg.decoder_stages) {
    dec_gmb += gmb_params(cfg.decoder_mixer, ch[stage - 1], cfg.decoder_heads);
  }
  out.per_module.emplace_back("decoder.gmb", dec_gmb);

  const int c_fuse = ch[1] + ch[2] + ch[3];
  const std::uint64_t dec_head =
      linear_params(c_fuse, cfg.c_mlp) + linear_params(cfg.c_mlp, cfg.num_classes);
  out.per_module.emplace_back("decoder.fuse+head", dec_head);

  out.total = enc + dec_gmb + dec_head;
  return out;
}

std::string render_flop_report(const FlopReport& report) {
  std::ostringstream os;
  os << "attention MACs, mixer=" << mixer_name(report.mixer) << ", input=" << report.input_h
     << "x" << report.input_w << "\n";
  for (const auto& s : report.stages) {
    os << "  stage" << s.stage << ": N=" << s.tokens << " Nk=" << s.key_tokens
       << " C=" << s.channels << " qk=" << s.qk_macs << " av=" << s.av_macs
       << " proj=" << s.proj_macs << " total=" << s.total_macs() << "\n";
  }
  os << "  qk total   = " << report.qk_total() << "\n";
  os << "  av total   = " << report.av_total() << "\n";
  os << "  proj total = " << report.proj_total() << " (excluded from headline)\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", static_cast<double>(report.headline_macs()) / 1e6);
  os << "  attention total (qk+av) = " << report.headline_macs() << " (" << buf << "M)\n";
  return os.str();
}

std::string render_flop_kv(const FlopReport& report) {
  std::ostringstream os;
  const std::string m = mixer_name(report.mixer);
  for (const auto& s : report.stages) {
    const std::string p = m + ".stage" + std::to_string(s.stage);
    os << p << ".qk_macs=" << s.qk_macs << "\n";
    os << p << ".av_macs=" << s.av_macs << "\n";
    os << p << ".proj_macs=" << s.proj_macs << "\n";
    os << p << ".total_macs=" << s.total_macs() << "\n";
  }
  os << m << ".qk_total=" << report.qk_total() << "\n";
  os << m << ".av_total=" << report.av_total() << "\n";
  os << m << ".headline_macs=" << report.headline_macs() << "\n";
  return os.str();
}

std::string render_param_report(const ParamCount& count) {
  std::ostringstream os;
  os << "parameters\n";
  for (const auto& [name, value] : count.per_module) {
    os << "  " << name << " = " << value << "\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", static_cast<double>(count.total) / 1e6);
  os << "  total = " << count.total << " (" << buf << "M)\n";
  return os.str();
}

}  // namespace metaseg
