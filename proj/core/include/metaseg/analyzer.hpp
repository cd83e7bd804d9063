#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "metaseg/model.hpp"

namespace metaseg {

// Per-stage attention multiply-accumulate counts. qk and av are the
// attention core (Q*K^T and A*V summed over heads); projection costs are
// reported separately and excluded from the headline number.
struct StageMacs {
  int stage = 0;
  int channels = 0;
  std::uint64_t tokens = 0;
  std::uint64_t key_tokens = 0;
  std::uint64_t qk_macs = 0;
  std::uint64_t av_macs = 0;
  std::uint64_t proj_macs = 0;

  std::uint64_t total_macs() const { return qk_macs + av_macs + proj_macs; }
};

struct FlopReport {
  MixerKind mixer = MixerKind::Cra;
  int input_h = 0, input_w = 0;
  std::vector<StageMacs> stages;

  std::uint64_t qk_total() const;
  std::uint64_t av_total() const;
  std::uint64_t proj_total() const;
  // qk + av only; this is the number comparable across mixers.
  std::uint64_t headline_macs() const { return qk_total() + av_total(); }
};

// 1 - cra/sra over the qk+av terms.
double reduction_percent(const FlopReport& sra, const FlopReport& cra);

// Exact shape-based counts for the decoder's attention stages. Only the
// GMB-carrying stages contribute.
FlopReport count_attention_macs(const ModelConfig& cfg, MixerKind mixer, int input_h,
                                int input_w);

// The printed closed forms with their linear-in-r token reduction
// N' = N/r: omega_sra = 2 (N')^2 C, omega_cra = (N')^2 + (N')^2 C.
struct Eq4Result {
  double omega_sra = 0.0;
  double omega_cra = 0.0;

  double ratio() const { return omega_cra / omega_sra; }
};

Eq4Result eq4_model(double n_tokens, double r, double c);

struct ParamCount {
  std::vector<std::pair<std::string, std::uint64_t>> per_module;
  std::uint64_t total = 0;
};

// Closed-form parameter totals from the config; must agree with the
// element count of an instantiated model's ParamStore.
ParamCount count_params(const ModelConfig& cfg);

std::string render_flop_report(const FlopReport& report);
std::string render_flop_kv(const FlopReport& report);
std::string render_param_report(const ParamCount& count);

}  // namespace metaseg
