#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "msim/world.hpp"

namespace msim {

// Canonical modality order; every signal container, file record, loss sum
// and mask bit uses this order.
struct ModalitySpec {
  const char* name;
  int dim;
};
inline constexpr std::array<ModalitySpec, 4> kModalities{{
    {"hand_pose", 4},
    {"body_pose", 3},
    {"hand_force", 16},
    {"muscle_emg", 2},
}};
constexpr int kNumModalities = 4;
int modality_index(std::string_view name);  // -1 if unknown

// Presence flag per modality, indexed like kModalities. The same mask type
// drives train-time dropping and test-time masking, so the two paths share
// one code path by construction.
using ModalityMask = std::array<bool, 4>;
inline constexpr ModalityMask kAllPresent{{true, true, true, true}};
int mask_count(const ModalityMask& mask);
// Comma-separated modality names to drop; "" drops nothing. Unknown names
// and masks that drop everything are errors.
ModalityMask mask_dropping(const std::string& csv);
std::string mask_label(const ModalityMask& mask);  // "all" or "drop_a+b"

struct Episode {
  int id = 0;
  int T = 12, H = 16, W = 16;
  std::string script;
  int pair = -1;  // twin episode id for grip/pass pairs
  uint64_t seed = 0;
  std::vector<float> frames;                   // T*H*W, row-major
  std::array<std::vector<float>, 4> signals;   // [m][t*dim + k]

  const float* frame(int t) const {
    return frames.data() + static_cast<size_t>(t) * H * W;
  }
  const float* signal(int m, int t) const {
    return signals[static_cast<size_t>(m)].data() +
           static_cast<size_t>(t) * kModalities[static_cast<size_t>(m)].dim;
  }
};

struct WorldConfig {
  std::string kind = "manip";  // "manip" or "toy"
  int episodes = 64;
  int T = 12, H = 16, W = 16;
  int context = 4;
  double train_frac = 0.8;
  double mix_reach = 0.25;
  double mix_grip_carry = 0.25;
  double mix_pass_over = 0.25;
  double mix_release = 0.25;
  double weight_lo = 0.8, weight_hi = 2.0;
};

// throws std::invalid_argument naming the offending field
void validate_config(const WorldConfig& cfg);

struct Dataset {
  std::string kind = "manip";
  uint64_t seed = 0;
  WorldConfig config;
  std::vector<Episode> episodes;
  std::vector<int> train_ids, test_ids;
};

// Deterministic generation: dataset bytes are a pure function of
// (config, master_seed). Every grip-carry episode is generated alongside a
// pass-over twin with a bit-identical pose stream, so pose alone cannot
// reveal whether the object moves.
Dataset generate_dataset(const WorldConfig& cfg, uint64_t master_seed);

// Writes `path` plus a sidecar manifest at `path + ".manifest.json"`.
void save_dataset(const std::string& path, const Dataset& ds);
// Loads and validates (frame range, signal ranges, episode shape).
Dataset load_dataset(const std::string& path);

// throws on any violated episode invariant
void validate_dataset(const Dataset& ds);

// Exact future frames for one episode, recomputed by replaying the world
// dynamics from its stored future signals (grip state recovered from force
// mass, object located from the context frames). Throws on signals this
// world cannot have produced.
std::vector<float> oracle_rollout(const Episode& ep, int context_len);

}  // namespace msim
