#include "msim/fusion.hpp"

#include <stdexcept>

namespace msim {

namespace {

std::string proj_name(int modality) {
  if (modality < 0 || modality >= kNumModalities)
    throw std::invalid_argument("fusion: unknown modality id " +
                                std::to_string(modality));
  return std::string("fusion.") +
         kModalities[static_cast<size_t>(modality)].name + ".proj";
}

// exp(g - max over present) per modality plus the shared denominator;
// max-subtraction keeps the softmax finite without changing its value
struct SoftmaxParts {
  std::array<Array, 4> e;
  Array denom;
};

SoftmaxParts softmax_parts(const std::array<Array, 4>& gated,
                           const ModalityMask& mask) {
  SoftmaxParts out;
  Array peak;
  bool started = false;
  for (int m = 0; m < kNumModalities; ++m) {
    if (!mask[static_cast<size_t>(m)]) continue;
    const Array& g = gated[static_cast<size_t>(m)];
    peak = started ? elem_max(peak, g) : g;
    started = true;
  }
  started = false;
  for (int m = 0; m < kNumModalities; ++m) {
    if (!mask[static_cast<size_t>(m)]) continue;
    Array e = exp(sub(gated[static_cast<size_t>(m)], peak));
    out.denom = started ? add(out.denom, e) : e;
    out.e[static_cast<size_t>(m)] = std::move(e);
    started = true;
  }
  return out;
}

void check_fusable(const std::array<Array, 4>& gated,
                   const ModalityMask& mask) {
  if (mask_count(mask) == 0)
    throw std::invalid_argument("fuse: empty modality mask");
  const Array* first = nullptr;
  for (int m = 0; m < kNumModalities; ++m) {
    if (!mask[static_cast<size_t>(m)]) continue;
    const Array& g = gated[static_cast<size_t>(m)];
    if (g.size() == 0)
      throw std::invalid_argument("fuse: missing feature for present modality " +
                                  std::string(kModalities[static_cast<size_t>(m)].name));
    if (first == nullptr)
      first = &g;
    else if (!first->same_shape(g))
      throw std::invalid_argument("fuse: feature shape mismatch " +
                                  first->shape_str() + " vs " + g.shape_str());
  }
}

}  // namespace

void init_fusion_params(ParamMap& p, int d, int expert_width,
                        const std::string& variant, uint64_t seed) {
  for (int m = 0; m < kNumModalities; ++m) {
    std::string name = proj_name(m);
    p.emplace(name, xavier_init({d, expert_width}, seed, name));
  }
  if (variant == "concat")
    p.emplace("fusion.concat.w",
              xavier_init({d, d * kNumModalities}, seed, "fusion.concat.w"));
}

Array project_to_anchor(const Bank& b, int modality, const Array& z) {
  const Array& w = b(proj_name(modality));
  if (w.cols() != z.rows())
    throw std::invalid_argument(proj_name(modality) + ": expected " +
                                std::to_string(w.cols()) + " input rows, got " +
                                z.shape_str());
  return matmul(w, z);
}

Array channel_attend(const Array& zbar, const Array& z) {
  if (!zbar.same_shape(z))
    throw std::invalid_argument("channel_attend: shape mismatch " +
                                zbar.shape_str() + " vs " + z.shape_str());
  int d = zbar.rows();
  int cols = zbar.cols();
  Array zx_flat = reshape(transpose(zbar), {cols * d});     // (col, i) pairs
  Array z_rep = repeat_rows(transpose(z), d);               // row (col, i) = z(col)
  Array logits = mul(z_rep, zx_flat);                       // (col,i),l = zbar_i * z_l
  Array rows = softmax_axis(logits, 1);
  Array gate = transpose(block_sum_rows(rows, d));          // [d x cols]
  return reshape(mul(gate, z), z.shape);
}

Array fuse(const std::array<Array, 4>& gated, const ModalityMask& mask,
           const std::string& variant, const Bank* bank) {
  check_fusable(gated, mask);
  if (variant == "softmax") {
    SoftmaxParts parts = softmax_parts(gated, mask);
    Array num;
    bool started = false;
    for (int m = 0; m < kNumModalities; ++m) {
      if (!mask[static_cast<size_t>(m)]) continue;
      Array term = mul(parts.e[static_cast<size_t>(m)],
                       gated[static_cast<size_t>(m)]);
      num = started ? add(num, term) : term;
      started = true;
    }
    return div(num, parts.denom);
  }
  if (variant == "max") {
    Array out;
    bool started = false;
    for (int m = 0; m < kNumModalities; ++m) {
      if (!mask[static_cast<size_t>(m)]) continue;
      const Array& g = gated[static_cast<size_t>(m)];
      out = started ? elem_max(out, g) : g;
      started = true;
    }
    return out;
  }
  if (variant == "mean") {
    Array sum;
    bool started = false;
    for (int m = 0; m < kNumModalities; ++m) {
      if (!mask[static_cast<size_t>(m)]) continue;
      const Array& g = gated[static_cast<size_t>(m)];
      sum = started ? add(sum, g) : g;
      started = true;
    }
    return scale(sum, 1.0 / mask_count(mask));
  }
  if (variant == "concat") {
    if (bank == nullptr)
      throw std::invalid_argument("fuse: concat variant needs the parameter bank");
    const Array* present = nullptr;
    for (int m = 0; m < kNumModalities; ++m)
      if (mask[static_cast<size_t>(m)]) present = &gated[static_cast<size_t>(m)];
    std::vector<Array> parts;
    for (int m = 0; m < kNumModalities; ++m) {
      if (mask[static_cast<size_t>(m)])
        parts.push_back(gated[static_cast<size_t>(m)]);
      else
        parts.push_back(Array::zeros(present->shape));
    }
    return matmul((*bank)("fusion.concat.w"), concat_rows(parts));
  }
  throw std::invalid_argument("fuse: unknown variant " + variant);
}

Array fuse_list(const std::vector<std::pair<int, Array>>& features,
                const std::string& variant, const Bank* bank) {
  std::array<Array, 4> gated;
  ModalityMask mask{false, false, false, false};
  for (const auto& [m, feat] : features) {
    if (m < 0 || m >= kNumModalities)
      throw std::invalid_argument("fuse_list: unknown modality id " +
                                  std::to_string(m));
    if (mask[static_cast<size_t>(m)])
      throw std::invalid_argument("fuse_list: duplicate modality id " +
                                  std::to_string(m));
    mask[static_cast<size_t>(m)] = true;
    gated[static_cast<size_t>(m)] = feat;
  }
  return fuse(gated, mask, variant, bank);
}

std::array<Array, 4> fuse_weights(const std::array<Array, 4>& gated,
                                  const ModalityMask& mask) {
  check_fusable(gated, mask);
  SoftmaxParts parts = softmax_parts(gated, mask);
  std::array<Array, 4> w;
  for (int m = 0; m < kNumModalities; ++m)
    if (mask[static_cast<size_t>(m)])
      w[static_cast<size_t>(m)] = div(parts.e[static_cast<size_t>(m)], parts.denom);
  return w;
}

}  // namespace msim
