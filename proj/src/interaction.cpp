#include "msim/interaction.hpp"

#include <cmath>
#include <stdexcept>

namespace msim {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_same_dim(const std::vector<double>& y,
                    const std::vector<double>& z) {
  if (y.size() != z.size() || y.empty())
    throw std::invalid_argument("interaction: dimension mismatch");
}

}  // namespace

std::vector<double> project_out(const std::vector<double>& y,
                                const std::vector<double>& z_ctx,
                                double eps_z, InteractionStats* stats) {
  check_same_dim(y, z_ctx);
  double norm = std::sqrt(dot(z_ctx, z_ctx));
  if (norm <= eps_z) {
    if (stats != nullptr) ++stats->degenerate;
    return y;
  }
  std::vector<double> zhat(z_ctx);
  for (double& v : zhat) v /= norm;
  double along = dot(y, zhat);
  std::vector<double> out(y);
  for (size_t i = 0; i < out.size(); ++i) out[i] -= along * zhat[i];
  return out;
}

std::vector<double> hyperplane_relax(const std::vector<double>& y,
                                     const std::vector<double>& z_ctx,
                                     double eps_z, InteractionStats* stats) {
  check_same_dim(y, z_ctx);
  if (dot(y, z_ctx) >= 0.0) return y;
  return project_out(y, z_ctx, eps_z, stats);
}

double norm_loss_single(const std::vector<double>& y_prime,
                        const std::vector<double>& z_t,
                        const std::vector<double>& z_prev) {
  check_same_dim(z_t, z_prev);
  double dz = 0.0;
  for (size_t i = 0; i < z_t.size(); ++i) {
    double delta = z_t[i] - z_prev[i];
    dz += delta * delta;
  }
  double gap = std::sqrt(dot(y_prime, y_prime)) - std::sqrt(dz);
  return gap * gap;
}

int select_context_index(int context_len) {
  if (context_len < 1)
    throw std::invalid_argument("select_context: no context latents");
  return context_len - 1;
}

Array interaction_apply(const Array& y, const Array& z_ctx,
                        const std::string& mode, double eps_z,
                        InteractionStats* stats) {
  if (mode == "none") return y;
  if (mode != "hyperplane" && mode != "projection")
    throw std::invalid_argument("interaction: unknown mode " + mode);
  if (!y.same_shape(z_ctx))
    throw std::invalid_argument("interaction: shape mismatch " + y.shape_str() +
                                " vs " + z_ctx.shape_str());
  if (y.rank() == 1) {
    Array wide = interaction_apply(reshape(y, {y.rows(), 1}),
                                   reshape(z_ctx, {z_ctx.rows(), 1}), mode,
                                   eps_z, stats);
    return reshape(wide, y.shape);
  }
  int d = y.rows();
  int cols = y.cols();

  // Branch selection from forward values: a column is projected when it is
  // non-degenerate and (for hyperplane) its unnormalized inner product is
  // negative. The masks are constants, so gradients follow the chosen
  // branch only.
  Array project_cols = Array::zeros({1, cols});
  Array keep_cols = Array::zeros({1, cols});
  for (int c = 0; c < cols; ++c) {
    double nz = 0.0, yz = 0.0;
    for (int i = 0; i < d; ++i) {
      double zv = z_ctx.at(i, c);
      nz += zv * zv;
      yz += y.at(i, c) * zv;
    }
    bool degenerate = std::sqrt(nz) <= eps_z;
    if (degenerate && stats != nullptr) ++stats->degenerate;
    bool project = !degenerate && (mode == "projection" || yz < 0.0);
    project_cols.at(0, c) = project ? 1.0 : 0.0;
    keep_cols.at(0, c) = project ? 0.0 : 1.0;
  }

  Array guard = elem_max(l2norm_cols(z_ctx), Array::full({1, cols}, eps_z));
  Array zhat = div(z_ctx, guard);
  Array along = sum_axis(mul(y, zhat), 0);
  Array projected = sub(y, mul(zhat, along));
  return add(mul(y, keep_cols), mul(projected, project_cols));
}

Array interaction_norm_loss(const Array& y_prime, const Array& z_t,
                            const Array& z_prev) {
  if (!z_t.same_shape(z_prev) || z_t.cols() != y_prime.cols())
    throw std::invalid_argument("norm_loss: shape mismatch");
  Array ny = l2norm_cols(y_prime);
  Array nz = l2norm_cols(sub(z_t, z_prev));
  Array gap = sub(ny, nz);
  return mean_all(mul(gap, gap));
}

}  // namespace msim
