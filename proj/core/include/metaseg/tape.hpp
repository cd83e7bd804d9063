#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "metaseg/ops.hpp"
#include "metaseg/param_store.hpp"
#include "metaseg/tensor.hpp"

namespace metaseg {

class Tape;

// Handle to a node on a specific tape.
struct Var {
  int id = -1;
  const Tape* owner = nullptr;

  bool valid() const { return id >= 0 && owner != nullptr; }
};

// Eager recording tape over whole-tensor ops. Forward values are computed
// at record time; backward() replays the closures in reverse creation
// order, which is a topological order by construction. Gradients of param
// nodes accumulate additively into the bound ParamStore.
class Tape {
 public:
  Tape() = default;
  explicit Tape(ParamStore* store) : store_(store) {}

  Var leaf(Tensor value);
  Var param(const std::string& name);

  Var linear(Var x, Var w);
  Var linear(Var x, Var w, Var b);
  Var conv2d(Var x, Var w, std::optional<Var> b, int stride, int pad, int groups);
  Var layer_norm(Var x, Var gamma, Var beta, double eps);
  Var gelu(Var x);
  Var softmax_lastdim(Var x);
  Var avg_pool(Var x, int r);
  Var smooth3x3(Var x);
  Var upsample_bilinear(Var x, int out_h, int out_w);
  Var concat_channels(const std::vector<Var>& xs);
  Var to_tokens(Var x);
  Var from_tokens(Var t, int c, int h, int w);
  Var matmul(Var a, Var b);
  Var transpose_last2(Var x);
  Var slice_lastdim(Var x, int offset, int len);
  Var concat_lastdim(const std::vector<Var>& xs);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, double s);
  Var sum_all(Var x);
  Var cross_entropy(Var logits, LabelMap labels);

  // Seeds the root gradient (scalar 1 by default) and propagates to all
  // ancestors; param gradients land in the bound store.
  void backward(Var root);
  void backward(Var root, const Tensor& seed);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_ready = false;
    std::string param_name;  // non-empty for param nodes
    std::function<void(Tape&, int)> backprop;
  };

  int check(Var v) const;
  Var push(Tensor value);
  Tensor& grad_buf(int id);

  std::vector<Node> nodes_;
  ParamStore* store_ = nullptr;
};

}  // namespace metaseg
