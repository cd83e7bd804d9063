#include "metaseg/tensor.hpp"

#include <cmath>
#include <sstream>

namespace metaseg {

Tensor::Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {
  if (n < 1 || c < 1 || h < 1 || w < 1) {
    std::ostringstream os;
    os << "tensor: all dims must be >= 1, got " << n_ << "x" << c_ << "x" << h_ << "x" << w_;
    throw ShapeError(os.str());
  }
  data.assign(static_cast<std::size_t>(n) * c * h * w, 0.0);
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data[0] = v;
  return t;
}

Tensor Tensor::matrix(int rows, int cols) { return Tensor(1, 1, rows, cols); }

Tensor Tensor::row(int d) { return Tensor(1, 1, 1, d); }

Tensor Tensor::full(int n_, int c_, int h_, int w_, double v) {
  Tensor t(n_, c_, h_, w_);
  t.data.assign(t.data.size(), v);
  return t;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

LabelMap::LabelMap(int n_, int h_, int w_) : n(n_), h(h_), w(w_) {
  if (n < 1 || h < 1 || w < 1) {
    throw ShapeError("label map: all dims must be >= 1");
  }
  data.assign(static_cast<std::size_t>(n) * h * w, 0);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    std::ostringstream os;
    os << op << ": shape mismatch " << a.shape_str() << " vs " << b.shape_str();
    throw ShapeError(os.str());
  }
}

}  // namespace metaseg
