#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msim/nn.hpp"

namespace msim {

// Regularizes the fused action vector against the context latent: hard
// orthogonal projection, the relaxed hyperplane rule (project only when the
// inner product is negative), or pass-through ("none"). A context vector
// with norm at or below eps_z leaves y unchanged and counts as a degenerate
// event rather than erroring.
inline constexpr double kContextNormEps = 1e-8;

struct InteractionStats {
  int64_t degenerate = 0;
};

// Reference single-vector forms used by the property tests and by the
// batched graph below; both share the same branch rules.
std::vector<double> project_out(const std::vector<double>& y,
                                const std::vector<double>& z_ctx,
                                double eps_z = kContextNormEps,
                                InteractionStats* stats = nullptr);
std::vector<double> hyperplane_relax(const std::vector<double>& y,
                                     const std::vector<double>& z_ctx,
                                     double eps_z = kContextNormEps,
                                     InteractionStats* stats = nullptr);
// ( ||y_prime|| - ||z_t - z_prev|| )^2 for one sample
double norm_loss_single(const std::vector<double>& y_prime,
                        const std::vector<double>& z_t,
                        const std::vector<double>& z_prev);

// Index of the context latent conditioning every future step: the last
// observed frame, at both training and sampling time.
int select_context_index(int context_len);

// Column-batched interaction on the tape. y and z_ctx are [d x cols];
// mode is one of hyperplane / projection / none. Branches are selected
// from forward values and applied with 0/1 masks, so each column follows
// exactly one branch and pass-through columns keep their bits.
Array interaction_apply(const Array& y, const Array& z_ctx,
                        const std::string& mode,
                        double eps_z = kContextNormEps,
                        InteractionStats* stats = nullptr);

// Mean over columns of ( ||y_prime|| - ||z_t - z_prev|| )^2.
Array interaction_norm_loss(const Array& y_prime, const Array& z_t,
                            const Array& z_prev);

}  // namespace msim
