#include "msim/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <stdexcept>

#include "msim/ops.hpp"

namespace msim {

namespace kernels {

// All three kernels process four rows of b per pass: the streamed row of
// the other operand is loaded once per group of four instead of once per
// row, and the four independent accumulation chains keep the FMA units
// busy on a single core.

void mm_nn(double* c, const double* a, const double* b, int m, int k, int n,
           bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<size_t>(m) * n, 0.0);
  int k4 = k & ~3;
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    int p = 0;
    for (; p < k4; p += 4) {
      double a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2],
             a3 = arow[p + 3];
      const double* b0 = b + static_cast<size_t>(p) * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      for (int j = 0; j < n; ++j)
        crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; p < k; ++p) {
      double av = arow[p];
      const double* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void mm_nt_acc(double* c, const double* a, const double* b, int m, int n,
               int k) {
  // Dot-product reductions cannot be vectorized without reassociation, so
  // throughput is bound by the number of independent accumulator chains.
  // Working on two rows of a and four rows of b gives eight chains while
  // keeping each output's summation order unchanged.
  int k4 = k & ~3;
  int m2 = m & ~1;
  int i = 0;
  for (; i < m2; i += 2) {
    const double* arow0 = a + static_cast<size_t>(i) * n;
    const double* arow1 = arow0 + n;
    double* crow0 = c + static_cast<size_t>(i) * k;
    double* crow1 = crow0 + k;
    int p = 0;
    for (; p < k4; p += 4) {
      const double* b0 = b + static_cast<size_t>(p) * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      double s00 = 0.0, s01 = 0.0, s02 = 0.0, s03 = 0.0;
      double s10 = 0.0, s11 = 0.0, s12 = 0.0, s13 = 0.0;
      for (int j = 0; j < n; ++j) {
        double a0 = arow0[j];
        double a1 = arow1[j];
        double v0 = b0[j];
        double v1 = b1[j];
        double v2 = b2[j];
        double v3 = b3[j];
        s00 += a0 * v0;
        s01 += a0 * v1;
        s02 += a0 * v2;
        s03 += a0 * v3;
        s10 += a1 * v0;
        s11 += a1 * v1;
        s12 += a1 * v2;
        s13 += a1 * v3;
      }
      crow0[p] += s00;
      crow0[p + 1] += s01;
      crow0[p + 2] += s02;
      crow0[p + 3] += s03;
      crow1[p] += s10;
      crow1[p + 1] += s11;
      crow1[p + 2] += s12;
      crow1[p + 3] += s13;
    }
    for (; p < k; ++p) {
      const double* brow = b + static_cast<size_t>(p) * n;
      double s0 = 0.0, s1 = 0.0;
      for (int j = 0; j < n; ++j) {
        s0 += arow0[j] * brow[j];
        s1 += arow1[j] * brow[j];
      }
      crow0[p] += s0;
      crow1[p] += s1;
    }
  }
  for (; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * n;
    double* crow = c + static_cast<size_t>(i) * k;
    int p = 0;
    for (; p < k4; p += 4) {
      const double* b0 = b + static_cast<size_t>(p) * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (int j = 0; j < n; ++j) {
        double av = arow[j];
        s0 += av * b0[j];
        s1 += av * b1[j];
        s2 += av * b2[j];
        s3 += av * b3[j];
      }
      crow[p] += s0;
      crow[p + 1] += s1;
      crow[p + 2] += s2;
      crow[p + 3] += s3;
    }
    for (; p < k; ++p) {
      const double* brow = b + static_cast<size_t>(p) * n;
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += arow[j] * brow[j];
      crow[p] += s;
    }
  }
}

void mm_tn_acc(double* c, const double* a, const double* b, int m, int k,
               int n) {
  int k4 = k & ~3;
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    const double* brow = b + static_cast<size_t>(i) * n;
    int p = 0;
    for (; p < k4; p += 4) {
      double a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2],
             a3 = arow[p + 3];
      double* c0 = c + static_cast<size_t>(p) * n;
      double* c1 = c0 + n;
      double* c2 = c1 + n;
      double* c3 = c2 + n;
      for (int j = 0; j < n; ++j) {
        double bv = brow[j];
        c0[j] += a0 * bv;
        c1[j] += a1 * bv;
        c2[j] += a2 * bv;
        c3[j] += a3 * bv;
      }
    }
    for (; p < k; ++p) {
      double av = arow[p];
      double* crow = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace kernels

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double phi_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
double phi_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

Tape* tape_of(std::initializer_list<const Array*> xs) {
  Tape* t = nullptr;
  for (const Array* x : xs) {
    if (!x->tracked()) continue;
    if (t != nullptr && t != x->tape)
      throw std::invalid_argument("op: inputs belong to different tapes");
    t = x->tape;
  }
  return t;
}

Array finish(Tape* t, OpKind op, std::initializer_list<const Array*> ins,
             std::vector<int> shape, std::vector<double> val, int i0 = 0,
             int i1 = 0, double d0 = 0.0) {
  Array out(std::move(shape), std::move(val));
  if (t != nullptr) {
    Tape::Node n;
    n.op = op;
    n.shape = out.shape;
    n.val = out.data;
    n.i0 = i0;
    n.i1 = i1;
    n.d0 = d0;
    for (const Array* x : ins)
      n.in.push_back(x->tracked() ? x->node : t->ensure_node(*x));
    out.tape = t;
    out.node = t->record(std::move(n));
  }
  return out;
}

// Broadcast layout for a binary elementwise op. Each operand must either
// match the output grid, be a scalar, or span a single row / column.
struct Broadcast {
  int rows = 0, cols = 0;
  std::vector<int> out_shape;
};

bool operand_fits(int r, int c, int R, int C) {
  bool row_ok = (r == R) || (r == 1);
  bool col_ok = (c == C) || (c == 1);
  return row_ok && col_ok;
}

Broadcast broadcast_of(const char* opname, const Array& a, const Array& b) {
  Broadcast bc;
  bc.rows = std::max(a.rows(), b.rows());
  bc.cols = std::max(a.cols(), b.cols());
  if (!operand_fits(a.rows(), a.cols(), bc.rows, bc.cols) ||
      !operand_fits(b.rows(), b.cols(), bc.rows, bc.cols))
    throw std::invalid_argument(std::string(opname) + ": cannot broadcast " +
                                a.shape_str() + " with " + b.shape_str());
  if (a.rows() == bc.rows && a.cols() == bc.cols)
    bc.out_shape = a.shape;
  else if (b.rows() == bc.rows && b.cols() == bc.cols)
    bc.out_shape = b.shape;
  else if (bc.cols == 1)
    bc.out_shape = {bc.rows};
  else
    bc.out_shape = {bc.rows, bc.cols};
  return bc;
}

inline double bval(const double* d, int r, int c, int i, int j) {
  return d[static_cast<size_t>(r == 1 ? 0 : i) * c + (c == 1 ? 0 : j)];
}

template <typename F>
Array ewise_binary(const char* name, OpKind op, const Array& a, const Array& b,
                   F f) {
  Broadcast bc = broadcast_of(name, a, b);
  std::vector<double> out(static_cast<size_t>(bc.rows) * bc.cols);
  const int C = bc.cols;
  size_t idx = 0;
  for (int i = 0; i < bc.rows; ++i)
    for (int j = 0; j < C; ++j, ++idx)
      out[idx] = f(bval(a.data.data(), a.rows(), a.cols(), i, j),
                   bval(b.data.data(), b.rows(), b.cols(), i, j));
  return finish(tape_of({&a, &b}), op, {&a, &b}, bc.out_shape, std::move(out));
}

}  // namespace

Array add(const Array& a, const Array& b) {
  return ewise_binary("add", OpKind::kAdd, a, b,
                      [](double x, double y) { return x + y; });
}

Array sub(const Array& a, const Array& b) {
  return ewise_binary("sub", OpKind::kSub, a, b,
                      [](double x, double y) { return x - y; });
}

Array mul(const Array& a, const Array& b) {
  return ewise_binary("mul", OpKind::kMul, a, b,
                      [](double x, double y) { return x * y; });
}

Array div(const Array& a, const Array& b) {
  for (double v : b.data)
    if (v == 0.0) throw std::domain_error("div: zero denominator entry");
  return ewise_binary("div", OpKind::kDiv, a, b,
                      [](double x, double y) { return x / y; });
}

Array elem_max(const Array& a, const Array& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("elem_max: shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
  return ewise_binary("elem_max", OpKind::kElemMax, a, b,
                      [](double x, double y) { return x >= y ? x : y; });
}

namespace {
template <typename F>
Array ewise_unary(OpKind op, const Array& a, F f, double d0 = 0.0) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.data[i]);
  return finish(tape_of({&a}), op, {&a}, a.shape, std::move(out), 0, 0, d0);
}
}  // namespace

Array scale(const Array& a, double c) {
  return ewise_unary(OpKind::kScale, a, [c](double x) { return x * c; }, c);
}

Array shift(const Array& a, double c) {
  return ewise_unary(OpKind::kShift, a, [c](double x) { return x + c; }, c);
}

Array exp(const Array& a) {
  return ewise_unary(OpKind::kExp, a, [](double x) { return std::exp(x); });
}

Array sqrt(const Array& a) {
  for (double v : a.data)
    if (v < 0.0) throw std::domain_error("sqrt: negative entry");
  return ewise_unary(OpKind::kSqrt, a, [](double x) { return std::sqrt(x); });
}

Array gelu(const Array& a) {
  return ewise_unary(OpKind::kGelu, a,
                     [](double x) { return x * phi_cdf(x); });
}

Array matmul(const Array& a, const Array& b) {
  if (a.rank() != 2) throw std::invalid_argument("matmul: lhs must be rank 2");
  int m = a.rows(), k = a.cols();
  int bk = b.rank() == 2 ? b.rows() : static_cast<int>(b.size());
  int n = b.rank() == 2 ? b.cols() : 1;
  if (bk != k)
    throw std::invalid_argument("matmul: inner dims " + a.shape_str() + " * " +
                                b.shape_str());
  std::vector<double> out(static_cast<size_t>(m) * n);
  kernels::mm_nn(out.data(), a.data.data(), b.data.data(), m, k, n, false);
  std::vector<int> shape = (b.rank() == 1) ? std::vector<int>{m}
                                           : std::vector<int>{m, n};
  return finish(tape_of({&a, &b}), OpKind::kMatmul, {&a, &b}, std::move(shape),
                std::move(out));
}

Array transpose(const Array& a) {
  int r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(j) * r + i] = a.data[static_cast<size_t>(i) * c + j];
  return finish(tape_of({&a}), OpKind::kTranspose, {&a}, {c, r},
                std::move(out));
}

Array softmax_axis(const Array& a, int axis) {
  if (axis != 0 && axis != 1)
    throw std::invalid_argument("softmax_axis: axis must be 0 or 1");
  if (a.rank() == 1 && axis != 0)
    throw std::invalid_argument("softmax_axis: rank-1 input needs axis 0");
  int r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  auto one = [&](int len, int stride, size_t base) {
    double m = a.data[base];
    for (int i = 1; i < len; ++i)
      m = std::max(m, a.data[base + static_cast<size_t>(i) * stride]);
    double s = 0.0;
    for (int i = 0; i < len; ++i) {
      double e = std::exp(a.data[base + static_cast<size_t>(i) * stride] - m);
      out[base + static_cast<size_t>(i) * stride] = e;
      s += e;
    }
    for (int i = 0; i < len; ++i)
      out[base + static_cast<size_t>(i) * stride] /= s;
  };
  if (axis == 0)
    for (int j = 0; j < c; ++j) one(r, c, static_cast<size_t>(j));
  else
    for (int i = 0; i < r; ++i) one(c, 1, static_cast<size_t>(i) * c);
  return finish(tape_of({&a}), OpKind::kSoftmaxAxis, {&a}, a.shape,
                std::move(out), axis);
}

Array sum_all(const Array& a) {
  double s = 0.0;
  for (double v : a.data) s += v;
  return finish(tape_of({&a}), OpKind::kSumAll, {&a}, {1}, {s});
}

Array mean_all(const Array& a) {
  double s = 0.0;
  for (double v : a.data) s += v;
  return finish(tape_of({&a}), OpKind::kMeanAll, {&a}, {1},
                {s / static_cast<double>(a.size())});
}

Array sum_axis(const Array& a, int axis) {
  if (axis != 0 && axis != 1)
    throw std::invalid_argument("sum_axis: axis must be 0 or 1");
  int r = a.rows(), c = a.cols();
  if (axis == 0) {
    std::vector<double> out(static_cast<size_t>(c), 0.0);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) out[j] += a.at(i, j);
    return finish(tape_of({&a}), OpKind::kSumAxis, {&a}, {1, c},
                  std::move(out), 0);
  }
  std::vector<double> out(static_cast<size_t>(r), 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[i] += a.at(i, j);
  return finish(tape_of({&a}), OpKind::kSumAxis, {&a}, {r, 1}, std::move(out),
                1);
}

Array l2norm_cols(const Array& a) {
  int r = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<size_t>(c), 0.0);
  for (int j = 0; j < c; ++j) {
    double s = 0.0;
    for (int i = 0; i < r; ++i) {
      double v = a.at(i, j);
      s += v * v;
    }
    out[j] = std::sqrt(s);
  }
  std::vector<int> shape =
      (a.rank() == 1) ? std::vector<int>{1} : std::vector<int>{1, c};
  return finish(tape_of({&a}), OpKind::kL2NormCols, {&a}, std::move(shape),
                std::move(out));
}

namespace {
Array concat_impl(const std::vector<Array>& parts, bool rows) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  int other = rows ? parts[0].cols() : parts[0].rows();
  int total = 0;
  bool all_rank1 = true;
  Tape* t = nullptr;
  for (const Array& p : parts) {
    int po = rows ? p.cols() : p.rows();
    if (po != other)
      throw std::invalid_argument("concat: mismatched extents " +
                                  parts[0].shape_str() + " vs " +
                                  p.shape_str());
    total += rows ? p.rows() : p.cols();
    if (p.rank() != 1) all_rank1 = false;
    if (p.tracked()) {
      if (t != nullptr && t != p.tape)
        throw std::invalid_argument("concat: inputs belong to different tapes");
      t = p.tape;
    }
  }
  int R = rows ? total : other;
  int C = rows ? other : total;
  std::vector<double> out(static_cast<size_t>(R) * C);
  if (rows) {
    size_t off = 0;
    for (const Array& p : parts) {
      std::copy(p.data.begin(), p.data.end(), out.begin() + off);
      off += p.size();
    }
  } else {
    int coff = 0;
    for (const Array& p : parts) {
      for (int i = 0; i < R; ++i)
        for (int j = 0; j < p.cols(); ++j)
          out[static_cast<size_t>(i) * C + coff + j] = p.at(i, j);
      coff += p.cols();
    }
  }
  std::vector<int> shape = (rows && all_rank1 && C == 1)
                               ? std::vector<int>{R}
                               : std::vector<int>{R, C};
  Array result(std::move(shape), std::move(out));
  if (t != nullptr) {
    Tape::Node n;
    n.op = rows ? OpKind::kConcatRows : OpKind::kConcatCols;
    n.shape = result.shape;
    n.val = result.data;
    for (const Array& p : parts)
      n.in.push_back(p.tracked() ? p.node : t->ensure_node(p));
    result.tape = t;
    result.node = t->record(std::move(n));
  }
  return result;
}
}  // namespace

Array concat_rows(const std::vector<Array>& parts) {
  return concat_impl(parts, true);
}

Array concat_cols(const std::vector<Array>& parts) {
  return concat_impl(parts, false);
}

Array slice_rows(const Array& a, int r0, int r1) {
  if (r0 < 0 || r1 > a.rows() || r0 >= r1)
    throw std::invalid_argument("slice_rows: bad range");
  int c = a.cols();
  std::vector<double> out(static_cast<size_t>(r1 - r0) * c);
  std::copy(a.data.begin() + static_cast<size_t>(r0) * c,
            a.data.begin() + static_cast<size_t>(r1) * c, out.begin());
  std::vector<int> shape = (a.rank() == 1) ? std::vector<int>{r1 - r0}
                                           : std::vector<int>{r1 - r0, c};
  return finish(tape_of({&a}), OpKind::kSliceRows, {&a}, std::move(shape),
                std::move(out), r0, r1);
}

Array slice_cols(const Array& a, int c0, int c1) {
  if (c0 < 0 || c1 > a.cols() || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range");
  int r = a.rows(), c = a.cols(), w = c1 - c0;
  std::vector<double> out(static_cast<size_t>(r) * w);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < w; ++j)
      out[static_cast<size_t>(i) * w + j] = a.data[static_cast<size_t>(i) * c + c0 + j];
  return finish(tape_of({&a}), OpKind::kSliceCols, {&a}, {r, w},
                std::move(out), c0, c1);
}

Array reshape(const Array& a, std::vector<int> shape) {
  if (shape.empty() || shape.size() > 2)
    throw std::invalid_argument("reshape: rank must be 1 or 2");
  size_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("reshape: nonpositive extent");
    n *= static_cast<size_t>(e);
  }
  if (n != a.size())
    throw std::invalid_argument("reshape: element count mismatch for " +
                                a.shape_str());
  std::vector<double> out = a.data;
  return finish(tape_of({&a}), OpKind::kReshape, {&a}, std::move(shape),
                std::move(out));
}

Array repeat_rows(const Array& a, int k) {
  if (k < 1) throw std::invalid_argument("repeat_rows: k must be >= 1");
  int r = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<size_t>(r) * k * c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < k; ++j)
      std::copy(a.data.begin() + static_cast<size_t>(i) * c,
                a.data.begin() + static_cast<size_t>(i + 1) * c,
                out.begin() + (static_cast<size_t>(i) * k + j) * c);
  std::vector<int> shape = (a.rank() == 1) ? std::vector<int>{r * k}
                                           : std::vector<int>{r * k, c};
  return finish(tape_of({&a}), OpKind::kRepeatRows, {&a}, std::move(shape),
                std::move(out), k);
}

Array block_sum_rows(const Array& a, int k) {
  if (k < 1) throw std::invalid_argument("block_sum_rows: k must be >= 1");
  int r = a.rows(), c = a.cols();
  if (r % k != 0)
    throw std::invalid_argument("block_sum_rows: rows of " + a.shape_str() +
                                " not divisible by block size");
  int ro = r / k;
  std::vector<double> out(static_cast<size_t>(ro) * c, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(i / k) * c + j] +=
          a.data[static_cast<size_t>(i) * c + j];
  std::vector<int> shape = (a.rank() == 1) ? std::vector<int>{ro}
                                           : std::vector<int>{ro, c};
  return finish(tape_of({&a}), OpKind::kBlockSumRows, {&a}, std::move(shape),
                std::move(out), k);
}

Array detach(const Array& a) {
  Array out;
  out.shape = a.shape;
  out.data = a.data;
  return out;
}

// ---------------------------------------------------------------------------
// Tape

Array Tape::leaf(const Array& value, const std::string& name) {
  Node n;
  n.op = OpKind::kLeaf;
  n.shape = value.shape;
  n.val = value.data;
  n.name = name;
  n.wants_grad = true;
  Array out = value;
  out.tape = this;
  out.node = record(std::move(n));
  return out;
}

int Tape::record(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::ensure_node(const Array& a) {
  Node n;
  n.op = OpKind::kLeaf;
  n.shape = a.shape;
  n.val = a.data;
  return record(std::move(n));
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
}

namespace {

// adds g (laid out on the [R x C] output grid) into the gradient buffer of
// an operand with dims [xr x xc], summing over broadcast axes
void reduce_into(std::vector<double>& dst, const std::vector<double>& g,
                 int R, int C, int xr, int xc) {
  if (xr == R && xc == C) {
    for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  } else if (xr == 1 && xc == 1) {
    double s = 0.0;
    for (double v : g) s += v;
    dst[0] += s;
  } else if (xc == 1 && xr == R) {
    int r4 = R & ~3;
    int i = 0;
    for (; i < r4; i += 4) {
      const double* g0 = g.data() + static_cast<size_t>(i) * C;
      const double* g1 = g0 + C;
      const double* g2 = g1 + C;
      const double* g3 = g2 + C;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (int j = 0; j < C; ++j) {
        s0 += g0[j];
        s1 += g1[j];
        s2 += g2[j];
        s3 += g3[j];
      }
      dst[i] += s0;
      dst[i + 1] += s1;
      dst[i + 2] += s2;
      dst[i + 3] += s3;
    }
    for (; i < R; ++i) {
      double s = 0.0;
      for (int j = 0; j < C; ++j) s += g[static_cast<size_t>(i) * C + j];
      dst[i] += s;
    }
  } else {  // xr == 1 && xc == C
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < C; ++j) dst[j] += g[static_cast<size_t>(i) * C + j];
  }
}

}  // namespace

void Tape::backward(const Array& loss) {
  if (loss.tape != this)
    throw std::invalid_argument("backward: loss is not on this tape");
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar");
  grads_.assign(nodes_.size(), {});
  // A node's gradient is worth computing only if some registered leaf sits
  // below it; constants wrapped on the fly (data batches, noise draws, fixed
  // mixing matrices) head subgraphs we can skip entirely.
  std::vector<char> needs(nodes_.size(), 0);
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    char v = n.wants_grad ? 1 : 0;
    for (size_t k = 0; !v && k < n.in.size(); ++k)
      v = needs[static_cast<size_t>(n.in[k])];
    needs[i] = v;
  }
  auto gbuf = [&](int id) -> std::vector<double>& {
    std::vector<double>& g = grads_[static_cast<size_t>(id)];
    if (g.empty()) g.assign(nodes_[static_cast<size_t>(id)].val.size(), 0.0);
    return g;
  };
  auto wanted = [&](int id) { return needs[static_cast<size_t>(id)] != 0; };
  gbuf(loss.node)[0] = 1.0;

  for (int id = loss.node; id >= 0; --id) {
    if (grads_[static_cast<size_t>(id)].empty() || !wanted(id)) continue;
    const Node& n = nodes_[static_cast<size_t>(id)];
    const std::vector<double>& g = grads_[static_cast<size_t>(id)];
    auto in_val = [&](int k) -> const std::vector<double>& {
      return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(k)])].val;
    };
    auto in_shape = [&](int k) -> const std::vector<int>& {
      return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(k)])].shape;
    };
    auto dims = [&](int k) {
      const std::vector<int>& s = in_shape(k);
      int r = s.empty() ? 1 : s[0];
      int c = s.size() >= 2 ? s[1] : 1;
      return std::pair<int, int>(r, c);
    };
    int R = n.shape.empty() ? 1 : n.shape[0];
    int C = n.shape.size() >= 2 ? n.shape[1] : 1;

    switch (n.op) {
      case OpKind::kLeaf:
        break;
      case OpKind::kAdd:
      case OpKind::kSub: {
        auto [ar, ac] = dims(0);
        auto [br, bc] = dims(1);
        if (wanted(n.in[0])) reduce_into(gbuf(n.in[0]), g, R, C, ar, ac);
        if (wanted(n.in[1])) {
          if (n.op == OpKind::kAdd) {
            reduce_into(gbuf(n.in[1]), g, R, C, br, bc);
          } else {
            std::vector<double> neg(g.size());
            for (size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
            reduce_into(gbuf(n.in[1]), neg, R, C, br, bc);
          }
        }
        break;
      }
      case OpKind::kMul:
      case OpKind::kDiv: {
        auto [ar, ac] = dims(0);
        auto [br, bc] = dims(1);
        const std::vector<double>& av = in_val(0);
        const std::vector<double>& bv = in_val(1);
        std::vector<double> ta(g.size()), tb(g.size());
        size_t idx = 0;
        for (int i = 0; i < R; ++i)
          for (int j = 0; j < C; ++j, ++idx) {
            double x = bval(av.data(), ar, ac, i, j);
            double y = bval(bv.data(), br, bc, i, j);
            if (n.op == OpKind::kMul) {
              ta[idx] = g[idx] * y;
              tb[idx] = g[idx] * x;
            } else {
              ta[idx] = g[idx] / y;
              tb[idx] = -g[idx] * x / (y * y);
            }
          }
        if (wanted(n.in[0])) reduce_into(gbuf(n.in[0]), ta, R, C, ar, ac);
        if (wanted(n.in[1])) reduce_into(gbuf(n.in[1]), tb, R, C, br, bc);
        break;
      }
      case OpKind::kElemMax: {
        const std::vector<double>& av = in_val(0);
        const std::vector<double>& bv = in_val(1);
        std::vector<double>& ga = gbuf(n.in[0]);
        std::vector<double>& gb = gbuf(n.in[1]);
        for (size_t i = 0; i < g.size(); ++i) {
          if (av[i] >= bv[i])
            ga[i] += g[i];
          else
            gb[i] += g[i];
        }
        break;
      }
      case OpKind::kScale: {
        std::vector<double>& ga = gbuf(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.d0;
        break;
      }
      case OpKind::kShift: {
        std::vector<double>& ga = gbuf(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case OpKind::kExp: {
        std::vector<double>& ga = gbuf(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.val[i];
        break;
      }
      case OpKind::kSqrt: {
        std::vector<double>& ga = gbuf(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * 0.5 / n.val[i];
        break;
      }
      case OpKind::kGelu: {
        const std::vector<double>& av = in_val(0);
        std::vector<double>& ga = gbuf(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i) {
          double x = av[i];
          ga[i] += g[i] * (phi_cdf(x) + x * phi_pdf(x));
        }
        break;
      }
      case OpKind::kMatmul: {
        auto [m, k] = dims(0);
        auto [k2, nn] = dims(1);
        (void)k2;
        const std::vector<double>& av = in_val(0);
        const std::vector<double>& bv = in_val(1);
        if (wanted(n.in[0]))
          kernels::mm_nt_acc(gbuf(n.in[0]).data(), g.data(), bv.data(), m, nn,
                             k);
        if (wanted(n.in[1]))
          kernels::mm_tn_acc(gbuf(n.in[1]).data(), av.data(), g.data(), m, k,
                             nn);
        break;
      }
      case OpKind::kTranspose: {
        std::vector<double>& ga = gbuf(n.in[0]);
        for (int i = 0; i < R; ++i)
          for (int j = 0; j < C; ++j)
            ga[static_cast<size_t>(j) * R + i] +=
                g[static_cast<size_t>(i) * C + j];
        break;
      }
      case OpKind::kSoftmaxAxis: {
        std::vector<double>& ga = gbuf(n.in[0]);
        auto one = [&](int len, int stride, size_t base) {
          double dot = 0.0;
          for (int i = 0; i < len; ++i) {
            size_t p = base + static_cast<size_t>(i) * stride;
            dot += g[p] * n.val[p];
          }
          for (int i = 0; i < len; ++i) {
            size_t p = base + static_cast<size_t>(i) * stride;
            ga[p] += n.val[p] * (g[p] - dot);
          }
        };
        if (n.i0 == 0)
          for (int j = 0; j < C; ++j) one(R, C, static_cast<size_t>(j));
        else
          for (int i = 0; i < R; ++i) one(C, 1, static_cast<size_t>(i) * C);
        break;
      }
      case OpKind::kSumAll:
      case OpKind::kMeanAll: {
        std::vector<double>& ga = gbuf(n.in[0]);
        double w = (n.op == OpKind::kMeanAll)
                       ? g[0] / static_cast<double>(ga.size())
                       : g[0];
        for (double& v : ga) v += w;
        break;
      }
      case OpKind::kSumAxis: {
        auto [ar, ac] = dims(0);
        std::vector<double>& ga = gbuf(n.in[0]);
        for (int i = 0; i < ar; ++i)
          for (int j = 0; j < ac; ++j)
            ga[static_cast<size_t>(i) * ac + j] +=
                (n.i0 == 0) ? g[static_cast<size_t>(j)]
                            : g[static_cast<size_t>(i)];
        break;
      }
      case OpKind::kL2NormCols: {
        auto [ar, ac] = dims(0);
        const std::vector<double>& av = in_val(0);
        std::vector<double>& ga = gbuf(n.in[0]);
        for (int j = 0; j < ac; ++j) {
          double norm = n.val[static_cast<size_t>(j)];
          if (norm == 0.0) continue;
          double w = g[static_cast<size_t>(j)] / norm;
          for (int i = 0; i < ar; ++i)
            ga[static_cast<size_t>(i) * ac + j] +=
                w * av[static_cast<size_t>(i) * ac + j];
        }
        break;
      }
      case OpKind::kConcatRows: {
        size_t off = 0;
        for (int input : n.in) {
          size_t len = nodes_[static_cast<size_t>(input)].val.size();
          if (wanted(input)) {
            std::vector<double>& ga = gbuf(input);
            for (size_t i = 0; i < len; ++i) ga[i] += g[off + i];
          }
          off += len;
        }
        break;
      }
      case OpKind::kConcatCols: {
        int coff = 0;
        for (size_t k = 0; k < n.in.size(); ++k) {
          auto [pr, pc] = dims(static_cast<int>(k));
          std::vector<double>& ga = gbuf(n.in[k]);
          for (int i = 0; i < pr; ++i)
            for (int j = 0; j < pc; ++j)
              ga[static_cast<size_t>(i) * pc + j] +=
                  g[static_cast<size_t>(i) * C + coff + j];
          coff += pc;
        }
        break;
      }
      case OpKind::kSliceRows: {
        auto [ar, ac] = dims(0);
        (void)ar;
        std::vector<double>& ga = gbuf(n.in[0]);
        size_t base = static_cast<size_t>(n.i0) * ac;
        for (size_t i = 0; i < g.size(); ++i) ga[base + i] += g[i];
        break;
      }
      case OpKind::kSliceCols: {
        auto [ar, ac] = dims(0);
        (void)ar;
        std::vector<double>& ga = gbuf(n.in[0]);
        for (int i = 0; i < R; ++i)
          for (int j = 0; j < C; ++j)
            ga[static_cast<size_t>(i) * ac + n.i0 + j] +=
                g[static_cast<size_t>(i) * C + j];
        break;
      }
      case OpKind::kReshape: {
        std::vector<double>& ga = gbuf(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case OpKind::kRepeatRows: {
        std::vector<double>& ga = gbuf(n.in[0]);
        int k = n.i0;
        for (int i = 0; i < R; ++i)
          for (int j = 0; j < C; ++j)
            ga[static_cast<size_t>(i / k) * C + j] +=
                g[static_cast<size_t>(i) * C + j];
        break;
      }
      case OpKind::kBlockSumRows: {
        std::vector<double>& ga = gbuf(n.in[0]);
        int k = n.i0;
        auto [ar, ac] = dims(0);
        (void)ac;
        for (int i = 0; i < ar; ++i)
          for (int j = 0; j < C; ++j)
            ga[static_cast<size_t>(i) * C + j] +=
                g[static_cast<size_t>(i / k) * C + j];
        break;
      }
    }
  }
}

Array Tape::grad(const Array& a) const {
  if (a.tape != this)
    throw std::invalid_argument("grad: array is not on this tape");
  const Node& n = nodes_[static_cast<size_t>(a.node)];
  if (grads_.empty() || grads_[static_cast<size_t>(a.node)].empty())
    return Array::zeros(n.shape);
  return Array(n.shape, grads_[static_cast<size_t>(a.node)]);
}

std::map<std::string, Array> Tape::named_grads() const {
  std::map<std::string, Array> out;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.name.empty()) continue;
    if (!grads_.empty() && !grads_[i].empty())
      out[n.name] = Array(n.shape, grads_[i]);
    else
      out[n.name] = Array::zeros(n.shape);
  }
  return out;
}

void Tape::named_grads_into(ParamMap& out) const {
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.name.empty()) continue;
    auto it = out.find(n.name);
    if (it == out.end())
      it = out.emplace(n.name, Array::zeros(n.shape)).first;
    else if (it->second.shape != n.shape)
      throw std::invalid_argument("named_grads_into: shape mismatch for " +
                                  n.name);
    std::vector<double>& dst = it->second.data;
    if (!grads_.empty() && !grads_[i].empty())
      std::copy(grads_[i].begin(), grads_[i].end(), dst.begin());
    else
      std::fill(dst.begin(), dst.end(), 0.0);
  }
}

}  // namespace msim
