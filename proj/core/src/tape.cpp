#include "metaseg/tape.hpp"

#include <cmath>
#include <utility>

namespace metaseg {

int Tape::check(Var v) const {
  if (!v.valid() || v.owner != this || v.id >= static_cast<int>(nodes_.size())) {
    throw StateError("tape: variable does not belong to this tape (or was never recorded)");
  }
  return v.id;
}

Var Tape::push(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), false, {}, nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1, this};
}

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    n.grad = Tensor(n.value.n, n.value.c, n.value.h, n.value.w);
    n.grad_ready = true;
  }
  return n.grad;
}

const Tensor& Tape::value(Var v) const { return nodes_[check(v)].value; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_[check(v)];
  if (!n.grad_ready) throw StateError("tape: gradient not computed; run backward first");
  return n.grad;
}

Var Tape::leaf(Tensor value) { return push(std::move(value)); }

Var Tape::param(const std::string& name) {
  if (store_ == nullptr) throw StateError("tape: no param store bound");
  Var v = push(store_->value(name));
  nodes_[v.id].param_name = name;
  return v;
}

Var Tape::linear(Var x, Var w) {
  const int xi = check(x), wi = check(w);
  Var out = push(ops::linear(nodes_[xi].value, nodes_[wi].value, nullptr));
  nodes_[out.id].backprop = [xi, wi](Tape& t, int self) {
    ops::linear_backward(t.nodes_[xi].value, t.nodes_[wi].value, t.nodes_[self].grad,
                         &t.grad_buf(xi), &t.grad_buf(wi), nullptr);
  };
  return out;
}

Var Tape::linear(Var x, Var w, Var b) {
  const int xi = check(x), wi = check(w), bi = check(b);
  Var out = push(ops::linear(nodes_[xi].value, nodes_[wi].value, &nodes_[bi].value));
  nodes_[out.id].backprop = [xi, wi, bi](Tape& t, int self) {
    ops::linear_backward(t.nodes_[xi].value, t.nodes_[wi].value, t.nodes_[self].grad,
                         &t.grad_buf(xi), &t.grad_buf(wi), &t.grad_buf(bi));
  };
  return out;
}

Var Tape::conv2d(Var x, Var w, std::optional<Var> b, int stride, int pad, int groups) {
  const int xi = check(x), wi = check(w);
  const int bi = b.has_value() ? check(*b) : -1;
  Var out = push(ops::conv2d(nodes_[xi].value, nodes_[wi].value,
                             bi >= 0 ? &nodes_[bi].value : nullptr, stride, pad, groups));
  nodes_[out.id].backprop = [xi, wi, bi, stride, pad, groups](Tape& t, int self) {
    ops::conv2d_backward(t.nodes_[xi].value, t.nodes_[wi].value, t.nodes_[self].grad, stride,
                         pad, groups, &t.grad_buf(xi), &t.grad_buf(wi),
                         bi >= 0 ? &t.grad_buf(bi) : nullptr);
  };
  return out;
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const int xi = check(x), gi = check(gamma), bi = check(beta);
  Var out = push(ops::layer_norm(nodes_[xi].value, nodes_[gi].value, nodes_[bi].value, eps));
  nodes_[out.id].backprop = [xi, gi, bi, eps](Tape& t, int self) {
    ops::layer_norm_backward(t.nodes_[xi].value, t.nodes_[gi].value, eps, t.nodes_[self].grad,
                             &t.grad_buf(xi), &t.grad_buf(gi), &t.grad_buf(bi));
  };
  return out;
}

Var Tape::gelu(Var x) {
  const int xi = check(x);
  Var out = push(ops::gelu(nodes_[xi].value));
  nodes_[out.id].backprop = [xi](Tape& t, int self) {
    ops::gelu_backward(t.nodes_[xi].value, t.nodes_[self].grad, &t.grad_buf(xi));
  };
  return out;
}

Var Tape::softmax_lastdim(Var x) {
  const int xi = check(x);
  Var out = push(ops::softmax_lastdim(nodes_[xi].value));
  nodes_[out.id].backprop = [xi](Tape& t, int self) {
    ops::softmax_lastdim_backward(t.nodes_[self].value, t.nodes_[self].grad, &t.grad_buf(xi));
  };
  return out;
}

Var Tape::avg_pool(Var x, int r) {
  const int xi = check(x);
  Var out = push(ops::avg_pool(nodes_[xi].value, r));
  nodes_[out.id].backprop = [xi, r](Tape& t, int self) {
    ops::avg_pool_backward(t.nodes_[self].grad, r, &t.grad_buf(xi));
  };
  return out;
}

Var Tape::smooth3x3(Var x) {
  const int xi = check(x);
  Var out = push(ops::smooth3x3(nodes_[xi].value));
  nodes_[out.id].backprop = [xi](Tape& t, int self) {
    ops::smooth3x3_backward(t.nodes_[self].grad, &t.grad_buf(xi));
  };
  return out;
}

Var Tape::upsample_bilinear(Var x, int out_h, int out_w) {
  const int xi = check(x);
  const int in_h = nodes_[xi].value.h, in_w = nodes_[xi].value.w;
  Var out = push(ops::upsample_bilinear(nodes_[xi].value, out_h, out_w));
  nodes_[out.id].backprop = [xi, in_h, in_w](Tape& t, int self) {
    ops::upsample_bilinear_backward(t.nodes_[self].grad, in_h, in_w, &t.grad_buf(xi));
  };
  return out;
}

Var Tape::concat_channels(const std::vector<Var>& xs) {
  std::vector<int> ids;
  std::vector<const Tensor*> vals;
  for (Var v : xs) {
    ids.push_back(check(v));
    vals.push_back(&nodes_[ids.back()].value);
  }
  Var out = push(ops::concat_channels(vals));
  nodes_[out.id].backprop = [ids](Tape& t, int self) {
    std::vector<Tensor*> grads;
    grads.reserve(ids.size());
    for (int id : ids) grads.push_back(&t.grad_buf(id));
    ops::concat_channels_backward(t.nodes_[self].grad, grads);
  };
  return out;
}

Var Tape::to_tokens(Var x) {
  const int xi = check(x);
  const Tensor& xv = nodes_[xi].value;
  const int c = xv.c, h = xv.h, w = xv.w;
  Var out = push(ops::to_tokens(xv));
  nodes_[out.id].backprop = [xi, c, h, w](Tape& t, int self) {
    Tensor back = ops::from_tokens(t.nodes_[self].grad, c, h, w);
    Tensor& dst = t.grad_buf(xi);
    for (std::size_t i = 0; i < back.size(); ++i) dst.data[i] += back.data[i];
  };
  return out;
}

Var Tape::from_tokens(Var tok, int c, int h, int w) {
  const int ti = check(tok);
  Var out = push(ops::from_tokens(nodes_[ti].value, c, h, w));
  nodes_[out.id].backprop = [ti](Tape& t, int self) {
    Tensor back = ops::to_tokens(t.nodes_[self].grad);
    Tensor& dst = t.grad_buf(ti);
    for (std::size_t i = 0; i < back.size(); ++i) dst.data[i] += back.data[i];
  };
  return out;
}

Var Tape::matmul(Var a, Var b) {
  const int ai = check(a), bi = check(b);
  Var out = push(ops::matmul(nodes_[ai].value, nodes_[bi].value));
  nodes_[out.id].backprop = [ai, bi](Tape& t, int self) {
    ops::matmul_backward(t.nodes_[ai].value, t.nodes_[bi].value, t.nodes_[self].grad,
                         &t.grad_buf(ai), &t.grad_buf(bi));
  };
  return out;
}

Var Tape::transpose_last2(Var x) {
  const int xi = check(x);
  Var out = push(ops::transpose_last2(nodes_[xi].value));
  nodes_[out.id].backprop = [xi](Tape& t, int self) {
    Tensor back = ops::transpose_last2(t.nodes_[self].grad);
    Tensor& dst = t.grad_buf(xi);
    for (std::size_t i = 0; i < back.size(); ++i) dst.data[i] += back.data[i];
  };
  return out;
}

Var Tape::slice_lastdim(Var x, int offset, int len) {
  const int xi = check(x);
  Var out = push(ops::slice_lastdim(nodes_[xi].value, offset, len));
  nodes_[out.id].backprop = [xi, offset](Tape& t, int self) {
    ops::slice_lastdim_backward(t.nodes_[self].grad, offset, &t.grad_buf(xi));
  };
  return out;
}

Var Tape::concat_lastdim(const std::vector<Var>& xs) {
  std::vector<int> ids;
  std::vector<const Tensor*> vals;
  for (Var v : xs) {
    ids.push_back(check(v));
    vals.push_back(&nodes_[ids.back()].value);
  }
  Var out = push(ops::concat_lastdim(vals));
  nodes_[out.id].backprop = [ids](Tape& t, int self) {
    std::vector<Tensor*> grads;
    grads.reserve(ids.size());
    for (int id : ids) grads.push_back(&t.grad_buf(id));
    ops::concat_lastdim_backward(t.nodes_[self].grad, grads);
  };
  return out;
}

Var Tape::add(Var a, Var b) {
  const int ai = check(a), bi = check(b);
  Var out = push(ops::add(nodes_[ai].value, nodes_[bi].value));
  nodes_[out.id].backprop = [ai, bi](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& da = t.grad_buf(ai);
    Tensor& db = t.grad_buf(bi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      da.data[i] += g.data[i];
      db.data[i] += g.data[i];
    }
  };
  return out;
}

Var Tape::mul(Var a, Var b) {
  const int ai = check(a), bi = check(b);
  Var out = push(ops::mul(nodes_[ai].value, nodes_[bi].value));
  nodes_[out.id].backprop = [ai, bi](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& av = t.nodes_[ai].value;
    const Tensor& bv = t.nodes_[bi].value;
    Tensor& da = t.grad_buf(ai);
    Tensor& db = t.grad_buf(bi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      da.data[i] += g.data[i] * bv.data[i];
      db.data[i] += g.data[i] * av.data[i];
    }
  };
  return out;
}

Var Tape::scale(Var x, double s) {
  const int xi = check(x);
  Var out = push(ops::scale(nodes_[xi].value, s));
  nodes_[out.id].backprop = [xi, s](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& dx = t.grad_buf(xi);
    for (std::size_t i = 0; i < g.size(); ++i) dx.data[i] += g.data[i] * s;
  };
  return out;
}

Var Tape::sum_all(Var x) {
  const int xi = check(x);
  Var out = push(Tensor::scalar(ops::sum_all(nodes_[xi].value)));
  nodes_[out.id].backprop = [xi](Tape& t, int self) {
    const double g = t.nodes_[self].grad.data[0];
    Tensor& dx = t.grad_buf(xi);
    for (double& v : dx.data) v += g;
  };
  return out;
}

Var Tape::cross_entropy(Var logits, LabelMap labels) {
  const int li = check(logits);
  Var out = push(Tensor::scalar(ops::cross_entropy_mean(nodes_[li].value, labels)));
  nodes_[out.id].backprop = [li, labels = std::move(labels)](Tape& t, int self) {
    ops::cross_entropy_mean_backward(t.nodes_[li].value, labels, t.nodes_[self].grad.data[0],
                                     &t.grad_buf(li));
  };
  return out;
}

void Tape::backward(Var root) { backward(root, Tensor::scalar(1.0)); }

void Tape::backward(Var root, const Tensor& seed) {
  if (nodes_.empty()) throw StateError("tape: backward before any forward was recorded");
  const int ri = check(root);
  if (!seed.same_shape(nodes_[ri].value)) {
    throw ShapeError("backward: seed " + seed.shape_str() + " does not match root " +
                     nodes_[ri].value.shape_str());
  }
  for (Node& n : nodes_) {
    n.grad_ready = false;
    n.grad = Tensor();
  }
  grad_buf(ri) = seed;
  for (int id = ri; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.grad_ready) continue;
    if (n.backprop) n.backprop(*this, id);
    if (!n.param_name.empty() && store_ != nullptr) {
      Tensor& g = store_->grad(n.param_name);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i];
    }
  }
}

}  // namespace metaseg
