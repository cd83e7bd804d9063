#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "metaseg/errors.hpp"

namespace metaseg {

// Dense 4-D array (batch, channels, rows, cols) of f64, row-major.
// Weight matrices are stored as {1,1,in,out}, channel vectors as {1,1,1,d}.
struct Tensor {
  int n = 1, c = 1, h = 1, w = 1;
  std::vector<double> data;

  Tensor() : data(1, 0.0) {}
  Tensor(int n_, int c_, int h_, int w_);

  static Tensor scalar(double v);
  static Tensor matrix(int rows, int cols);
  static Tensor row(int d);
  static Tensor full(int n_, int c_, int h_, int w_, double v);

  std::size_t size() const { return data.size(); }

  double& at(int in, int ic, int iy, int ix) {
    return data[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  double at(int in, int ic, int iy, int ix) const {
    return data[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
  }

  // Accessors for {1,1,rows,cols} matrices and {1,1,1,d} row vectors.
  double& m(int r, int col) { return data[static_cast<std::size_t>(r) * w + col]; }
  double m(int r, int col) const { return data[static_cast<std::size_t>(r) * w + col]; }
  int rows() const { return h; }
  int cols() const { return w; }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const;
  bool all_finite() const;
};

// Integer class-index map (batch, rows, cols).
struct LabelMap {
  int n = 1, h = 1, w = 1;
  std::vector<int> data;

  LabelMap() : data(1, 0) {}
  LabelMap(int n_, int h_, int w_);

  int& at(int in, int iy, int ix) {
    return data[(static_cast<std::size_t>(in) * h + iy) * w + ix];
  }
  int at(int in, int iy, int ix) const {
    return data[(static_cast<std::size_t>(in) * h + iy) * w + ix];
  }
  std::size_t size() const { return data.size(); }
};

void require_same_shape(const char* op, const Tensor& a, const Tensor& b);

}  // namespace metaseg
