#include "msim/moe.hpp"

#include <stdexcept>

namespace msim {

namespace {

std::string expert_prefix(int modality, const char* head) {
  if (modality < 0 || modality >= kNumModalities)
    throw std::invalid_argument("moe: unknown modality id " +
                                std::to_string(modality));
  return std::string("moe.") + kModalities[static_cast<size_t>(modality)].name +
         "." + head;
}

}  // namespace

void init_moe_params(ParamMap& p, int expert_width, uint64_t seed) {
  int h = expert_width;
  for (int m = 0; m < kNumModalities; ++m) {
    int in = kModalities[static_cast<size_t>(m)].dim;
    std::string enc = expert_prefix(m, "enc");
    std::string dec = expert_prefix(m, "dec");
    const int ew[5] = {in, h, h, h, h};
    const int dw[5] = {h, h, h, h, in};
    for (int k = 0; k < 4; ++k) {
      std::string ek = enc + ".w" + std::to_string(k);
      p.emplace(ek, xavier_init({ew[k + 1], ew[k]}, seed, ek));
      p.emplace(enc + ".b" + std::to_string(k), Array::zeros({ew[k + 1]}));
      std::string dk = dec + ".w" + std::to_string(k);
      p.emplace(dk, xavier_init({dw[k + 1], dw[k]}, seed, dk));
      p.emplace(dec + ".b" + std::to_string(k), Array::zeros({dw[k + 1]}));
    }
    for (int k = 0; k < 2; ++k) {
      p.emplace(enc + ".ln" + std::to_string(k) + ".g", Array::full({h}, 1.0));
      p.emplace(enc + ".ln" + std::to_string(k) + ".b", Array::zeros({h}));
    }
  }
}

Array moe_encode(const Bank& b, int modality, const Array& a, bool train,
                 double dropout, CounterRng drop_rng) {
  std::string enc = expert_prefix(modality, "enc");
  int in = kModalities[static_cast<size_t>(modality)].dim;
  if (a.rows() != in)
    throw std::invalid_argument(enc + ": expected " + std::to_string(in) +
                                " input rows, got " + a.shape_str());
  Array x = a;
  for (int k = 0; k < 4; ++k) {
    x = add(matmul(b(enc + ".w" + std::to_string(k)), x),
            b(enc + ".b" + std::to_string(k)));
    if (k < 2)
      x = layernorm_cols(x, b(enc + ".ln" + std::to_string(k) + ".g"),
                         b(enc + ".ln" + std::to_string(k) + ".b"));
    if (k < 3) {
      x = gelu(x);
      if (train && dropout > 0.0) {
        CounterRng layer_rng = drop_rng;
        layer_rng.key(static_cast<uint64_t>(k));
        x = mul(x, dropout_mask(x.shape, dropout, layer_rng));
      }
    }
  }
  return x;
}

Array moe_decode(const Bank& b, int modality, const Array& z) {
  std::string dec = expert_prefix(modality, "dec");
  Array x = z;
  for (int k = 0; k < 4; ++k) {
    x = add(matmul(b(dec + ".w" + std::to_string(k)), x),
            b(dec + ".b" + std::to_string(k)));
    if (k < 3) x = gelu(x);
  }
  return x;
}

Array ssl_loss(const std::array<Array, 4>& recon,
               const std::array<Array, 4>& target, const ModalityMask& mask,
               int timesteps, int batch) {
  int present = mask_count(mask);
  if (present == 0) throw std::invalid_argument("ssl_loss: empty mask");
  Array total;
  bool started = false;
  for (int m = 0; m < kNumModalities; ++m) {
    if (!mask[static_cast<size_t>(m)]) continue;
    const Array& r = recon[static_cast<size_t>(m)];
    const Array& t = target[static_cast<size_t>(m)];
    if (!r.same_shape(t))
      throw std::invalid_argument("ssl_loss: shape mismatch for " +
                                  std::string(kModalities[static_cast<size_t>(m)].name));
    Array err = sub(r, t);
    Array sq = sum_all(mul(err, err));
    total = started ? add(total, sq) : sq;
    started = true;
  }
  double norm = static_cast<double>(present) * timesteps * batch;
  return scale(total, 1.0 / norm);
}

}  // namespace msim
