#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "msim/ops.hpp"
#include "msim/params.hpp"
#include "msim/tape.hpp"

namespace msim {

// View of a parameter set used while building a graph. tracked_bank
// registers every parameter as a named tape leaf (gradients flow and show
// up in named_grads); plain_bank yields untracked constants, so the same
// network code runs in inference mode or with frozen weights.
struct Bank {
  std::map<std::string, Array> node;

  bool has(const std::string& name) const { return node.count(name) != 0; }
  const Array& operator()(const std::string& name) const;
};

Bank tracked_bank(Tape& tape, const ParamMap& params);
Bank plain_bank(const ParamMap& params);

// Per-column layer normalization with learnable gain g and bias b (both
// length rows(x)): (x - mean) / sqrt(var + 1e-5) * g + b.
Array layernorm_cols(const Array& x, const Array& g, const Array& b);

// Constant rearrangement matrices. All are plain (untracked) 0/1 or 1/per
// matrices applied with a single matmul.
//
// averaging_matrix: [groups*per x groups]; X * M averages each group of
// `per` consecutive columns into one column.
Array averaging_matrix(int groups, int per);
// replication_matrix: [groups x groups*per]; X * M repeats each column
// `per` times consecutively.
Array replication_matrix(int groups, int per);

// Picks the listed columns of x (in list order) via slice+concat, so the
// cost is a copy rather than a dense matmul. Contiguous runs are sliced in
// one piece.
Array select_cols(const Array& x, const std::vector<int>& picks);

// Column indices t in [t0, t1) of every group, for column layout
// col(g, t) = g*period + t.
std::vector<int> group_cols(int groups, int period, int t0, int t1);

// Sinusoidal embedding of integer indices: column j embeds n[j] with
// interleaved sin/cos at geometrically spaced frequencies; dim must be even.
Array step_embedding(const std::vector<int>& n, int dim);

// Inverted-dropout mask as a plain constant: entries are 0 with probability
// p, else 1/(1-p). The stream is keyed by the caller-supplied rng.
Array dropout_mask(std::vector<int> shape, double p, CounterRng rng);

}  // namespace msim
