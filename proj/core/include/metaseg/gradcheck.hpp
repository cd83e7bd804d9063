#pragma once

#include <functional>
#include <string>
#include <vector>

#include "metaseg/param_store.hpp"

namespace metaseg {

// f builds a fresh graph over the store and returns the scalar loss;
// when with_grad is true it must also run backward so the store's grad
// buffers hold the analytic gradient. f must be deterministic.
using ScalarFn = std::function<double(ParamStore&, bool with_grad)>;

// Central differences against the analytic gradient for one named
// parameter. Relative error uses max(|analytic|, |numeric|, 1e-8).
double finite_difference_check(ParamStore& store, const std::string& param_name,
                               const ScalarFn& f, double epsilon);

struct GradCheckResult {
  std::string group;
  std::string worst_param;
  double max_rel_err = 0.0;
  double threshold = 0.0;

  bool ok() const { return max_rel_err < threshold; }
};

// Named check groups over small fixed graphs: per-op checks plus full
// GMB, encoder, and decoder graphs at toy widths. Empty filter runs all.
std::vector<GradCheckResult> run_gradcheck_suite(const std::string& filter, std::uint64_t seed,
                                                 double epsilon = 1e-5);

std::vector<std::string> gradcheck_group_names();

}  // namespace metaseg
