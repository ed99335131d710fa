#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "msim/rng.hpp"

namespace msim {

// Scripted 2-D manipulation world. A body blob drifts, a hand moves along
// a scripted path and can grip the single object; while gripped the object
// tracks the hand exactly. Everything lives in [0,1]^2.
//
// All state coordinates are kept quantized to f32 precision (stored back
// into doubles) because episodes persist signals as f32: replaying the
// dynamics from stored signals must reproduce pixel stamps bit for bit.

constexpr double kGripRadius = 0.08;

inline double q32(double x) { return static_cast<double>(static_cast<float>(x)); }

struct WorldState {
  double base_x = 0.5, base_y = 0.5;
  double hand_x = 0.5, hand_y = 0.5;
  double object_x = 0.5, object_y = 0.5;
  bool grip = false;
  double object_weight = 1.0;  // in [0.5, 2.0]
};

struct Control {
  double dbase_x = 0.0, dbase_y = 0.0;
  double dhand_x = 0.0, dhand_y = 0.0;
  bool grip_bit = false;  // request a grip toggle this step
};

// Per-frame sensor readings, in the fixed modality order used everywhere:
// hand_pose, body_pose, hand_force, muscle_emg.
struct ModalityBundle {
  std::array<float, 4> hand_pose{};   // x, y, heading, aperture
  std::array<float, 3> body_pose{};   // x, y, heading
  std::array<float, 16> hand_force{}; // 4x4 contact pressure grid
  std::array<float, 2> muscle_emg{};
};

WorldState step(const WorldState& state, const Control& control);

// 16x16-ish top-down view: body blob 3x3 at 0.4, hand 2x2 at 0.8, object
// 2x2 at 0.6, nearest-pixel stamps, overlaps take the max, background 0.
std::vector<float> render(const WorldState& state, int H, int W);

// Pixel anchor for a coordinate in [0,1] on an axis with `extent` pixels.
inline int pixel_anchor(double x, int extent) {
  return static_cast<int>(std::lround(x * (extent - 1)));
}

// Render from precomputed anchors; used by the rollout oracle when only the
// object's pixel (not its continuous position) is recoverable.
std::vector<float> render_px(int base_px, int base_py, int hand_px,
                             int hand_py, int obj_px, int obj_py, int H,
                             int W);

// Sensor emission. `pose_rng` carries the pose jitter stream (shared
// between paired episodes) and `force_rng` the force/EMG noise stream;
// both must already be keyed to this frame.
ModalityBundle emit_signals(const WorldState& state, const Control& control,
                            CounterRng pose_rng, CounterRng force_rng);

// A fully scripted episode: initial state plus one control per subsequent
// frame (frame t is rendered after applying controls[t-1]).
struct EpisodeScript {
  WorldState initial;
  std::vector<Control> controls;  // length T-1
};

enum class ScriptKind { kReach, kGripCarry, kPassOver, kRelease };
const char* script_name(ScriptKind k);

// Builds the trajectory for one episode. Paired grip-carry / pass-over
// episodes call this with the same `rng` state and differ only in `kind`
// (the pass-over keeps every draw but drops the grip bits).
EpisodeScript make_script(ScriptKind kind, int T, double weight_lo,
                          double weight_hi, CounterRng rng);

}  // namespace msim
