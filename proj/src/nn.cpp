#include "msim/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace msim {

const Array& Bank::operator()(const std::string& name) const {
  auto it = node.find(name);
  if (it == node.end())
    throw std::runtime_error("Bank: missing parameter " + name);
  return it->second;
}

Bank tracked_bank(Tape& tape, const ParamMap& params) {
  Bank b;
  for (const auto& [name, value] : params) b.node.emplace(name, tape.leaf(value, name));
  return b;
}

Bank plain_bank(const ParamMap& params) {
  Bank b;
  for (const auto& [name, value] : params) b.node.emplace(name, value);
  return b;
}

Array layernorm_cols(const Array& x, const Array& g, const Array& b) {
  int r = x.rows();
  if (g.rows() != r || b.rows() != r || g.cols() != 1 || b.cols() != 1)
    throw std::invalid_argument("layernorm_cols: gain/bias must be [rows x 1]");
  double inv_r = 1.0 / static_cast<double>(r);
  Array mu = scale(sum_axis(x, 0), inv_r);
  Array centered = sub(x, mu);
  Array var = scale(sum_axis(mul(centered, centered), 0), inv_r);
  Array sd = sqrt(shift(var, 1e-5));
  return add(mul(div(centered, sd), g), b);
}

Array averaging_matrix(int groups, int per) {
  Array m = Array::zeros({groups * per, groups});
  for (int g = 0; g < groups; ++g)
    for (int i = 0; i < per; ++i)
      m.at(g * per + i, g) = 1.0 / static_cast<double>(per);
  return m;
}

Array replication_matrix(int groups, int per) {
  Array m = Array::zeros({groups, groups * per});
  for (int g = 0; g < groups; ++g)
    for (int i = 0; i < per; ++i) m.at(g, g * per + i) = 1.0;
  return m;
}

Array select_cols(const Array& x, const std::vector<int>& picks) {
  if (picks.empty()) throw std::invalid_argument("select_cols: empty pick list");
  int c = x.cols();
  std::vector<Array> parts;
  size_t i = 0;
  while (i < picks.size()) {
    int start = picks[i];
    if (start < 0 || start >= c)
      throw std::invalid_argument("select_cols: index out of range");
    size_t j = i + 1;
    while (j < picks.size() && picks[j] == picks[j - 1] + 1 && picks[j] < c) ++j;
    parts.push_back(slice_cols(x, start, picks[j - 1] + 1));
    i = j;
  }
  if (parts.size() == 1) return parts[0];
  return concat_cols(parts);
}

std::vector<int> group_cols(int groups, int period, int t0, int t1) {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(groups) * (t1 - t0));
  for (int g = 0; g < groups; ++g)
    for (int t = t0; t < t1; ++t) out.push_back(g * period + t);
  return out;
}

Array step_embedding(const std::vector<int>& n, int dim) {
  if (dim % 2 != 0) throw std::invalid_argument("step_embedding: dim must be even");
  int cols = static_cast<int>(n.size());
  Array e = Array::zeros({dim, cols});
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < dim / 2; ++i) {
      double freq = std::exp(-std::log(10000.0) * (2.0 * i) / dim);
      double angle = static_cast<double>(n[static_cast<size_t>(j)]) * freq;
      e.at(2 * i, j) = std::sin(angle);
      e.at(2 * i + 1, j) = std::cos(angle);
    }
  }
  return e;
}

Array dropout_mask(std::vector<int> shape, double p, CounterRng rng) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout_mask: p must be in [0, 1)");
  Array m = Array::zeros(std::move(shape));
  double keep = 1.0 / (1.0 - p);
  for (double& v : m.data) v = (rng.uniform() < p) ? 0.0 : keep;
  return m;
}

}  // namespace msim
