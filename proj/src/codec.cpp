#include "msim/codec.hpp"

#include <stdexcept>

namespace msim {

namespace {

Array zeros_param(std::vector<int> shape) { return Array::zeros(std::move(shape)); }

Array dense(const Bank& b, const std::string& prefix, int layer, const Array& x) {
  std::string id = prefix + ".w" + std::to_string(layer);
  const Array& w = b(id);
  if (w.cols() != x.rows())
    throw std::invalid_argument(id + ": expected " + std::to_string(w.cols()) +
                                " input rows, got " + x.shape_str());
  return add(matmul(w, x), b(prefix + ".b" + std::to_string(layer)));
}

}  // namespace

void init_codec_params(ParamMap& p, const CodecDims& dims, uint64_t seed) {
  const int w[4] = {dims.hw, dims.h0, dims.h1, dims.d};
  for (int k = 0; k < 3; ++k) {
    std::string e = "codec.enc.w" + std::to_string(k);
    p.emplace(e, xavier_init({w[k + 1], w[k]}, seed, e));
    p.emplace("codec.enc.b" + std::to_string(k), zeros_param({w[k + 1]}));
    std::string d = "codec.dec.w" + std::to_string(k);
    p.emplace(d, xavier_init({w[2 - k], w[3 - k]}, seed, d));
    p.emplace("codec.dec.b" + std::to_string(k), zeros_param({w[2 - k]}));
  }
}

Array codec_encode(const Bank& b, const Array& frames) {
  Array a0 = gelu(dense(b, "codec.enc", 0, frames));
  Array a1 = gelu(dense(b, "codec.enc", 1, a0));
  return dense(b, "codec.enc", 2, a1);
}

Array codec_decode(const Bank& b, const Array& z) {
  Array a0 = gelu(dense(b, "codec.dec", 0, z));
  Array a1 = gelu(dense(b, "codec.dec", 1, a0));
  return dense(b, "codec.dec", 2, a1);
}

Array codec_frame_loss(const Bank& b, const Array& frames) {
  Array err = sub(codec_decode(b, codec_encode(b, frames)), frames);
  return mean_all(mul(err, err));
}

Array anchor_mean(const Array& ctx_latents, int groups, int per) {
  if (groups < 1 || per < 1)
    throw std::invalid_argument("anchor_mean: empty context");
  if (ctx_latents.cols() != groups * per)
    throw std::invalid_argument("anchor_mean: expected " +
                                std::to_string(groups * per) + " columns, got " +
                                ctx_latents.shape_str());
  return matmul(ctx_latents, averaging_matrix(groups, per));
}

}  // namespace msim
