#pragma once

#include <vector>

#include "msim/array.hpp"
#include "msim/tape.hpp"

namespace msim {

// Differentiable array ops. Every op works in two modes: if any input is
// attached to a Tape the result is recorded on that tape; if all inputs are
// plain values the op evaluates eagerly and returns a plain value. Mixing
// inputs from two different tapes is an error.
//
// Elementwise binary ops broadcast: identical shapes, scalar against
// anything, column vector [r x 1] against [r x c], or row vector [1 x c]
// against [r x c]. Gradients sum-reduce over the broadcast axes.

Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array mul(const Array& a, const Array& b);
Array div(const Array& a, const Array& b);  // error on zero denominator
Array scale(const Array& a, double c);
Array shift(const Array& a, double c);
Array exp(const Array& a);
Array sqrt(const Array& a);  // error on negative entries
Array gelu(const Array& a);  // exact form, x * Phi(x)
Array elem_max(const Array& a, const Array& b);  // same shape; ties to a

Array matmul(const Array& a, const Array& b);  // [m x k] * [k x n]
Array transpose(const Array& a);

// softmax along `axis` (0: each column sums to 1, 1: each row sums to 1),
// computed with max subtraction
Array softmax_axis(const Array& a, int axis);

Array sum_all(const Array& a);
Array mean_all(const Array& a);
Array sum_axis(const Array& a, int axis);  // 0 -> [1 x c], 1 -> [r x 1]

// per-column Euclidean norm, [m x c] -> [1 x c]; the subgradient at a zero
// column is zero
Array l2norm_cols(const Array& a);

Array concat_rows(const std::vector<Array>& parts);
Array concat_cols(const std::vector<Array>& parts);
Array slice_rows(const Array& a, int r0, int r1);  // half-open [r0, r1)
Array slice_cols(const Array& a, int c0, int c1);

// same element count, row-major element order preserved
Array reshape(const Array& a, std::vector<int> shape);
// [r x c] -> [r*k x c], each row repeated k times consecutively
Array repeat_rows(const Array& a, int k);
// [r*k x c] -> [r x c], sums each run of k consecutive rows
Array block_sum_rows(const Array& a, int k);

// plain-value copy of a (drops tape attachment)
Array detach(const Array& a);

// dense matmul kernels, also used directly by non-differentiated paths
namespace kernels {
// C (+)= A[m x k] * B[k x n]
void mm_nn(double* c, const double* a, const double* b, int m, int k, int n,
           bool accumulate);
// C += A[m x n] * B[k x n]^T, C is [m x k]
void mm_nt_acc(double* c, const double* a, const double* b, int m, int n,
               int k);
// C += A[m x k]^T * B[m x n], C is [k x n]
void mm_tn_acc(double* c, const double* a, const double* b, int m, int k,
               int n);
}  // namespace kernels

}  // namespace msim
