#include "msim/world.hpp"

#include <algorithm>
#include <cmath>

namespace msim {

namespace {

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

double heading_of(double dx, double dy) {
  if (std::abs(dx) < 1e-9 && std::abs(dy) < 1e-9) return 0.0;
  return std::atan2(dy, dx);
}

void stamp(std::vector<float>& f, int H, int W, int px, int py, int size,
           int off, float intensity) {
  for (int dy = off; dy < off + size; ++dy)
    for (int dx = off; dx < off + size; ++dx) {
      int x = px + dx, y = py + dy;
      if (x < 0 || x >= W || y < 0 || y >= H) continue;
      float& cell = f[static_cast<size_t>(y) * W + x];
      cell = std::max(cell, intensity);
    }
}

}  // namespace

WorldState step(const WorldState& state, const Control& control) {
  WorldState next = state;
  next.base_x = q32(clamp01(state.base_x + control.dbase_x));
  next.base_y = q32(clamp01(state.base_y + control.dbase_y));
  next.hand_x = q32(clamp01(state.hand_x + control.dhand_x));
  next.hand_y = q32(clamp01(state.hand_y + control.dhand_y));
  if (control.grip_bit) {
    double dx = next.hand_x - next.object_x;
    double dy = next.hand_y - next.object_y;
    if (std::sqrt(dx * dx + dy * dy) <= kGripRadius) next.grip = !state.grip;
  }
  if (next.grip) {
    next.object_x = next.hand_x;
    next.object_y = next.hand_y;
  }
  return next;
}

std::vector<float> render_px(int base_px, int base_py, int hand_px,
                             int hand_py, int obj_px, int obj_py, int H,
                             int W) {
  std::vector<float> f(static_cast<size_t>(H) * W, 0.0f);
  stamp(f, H, W, base_px, base_py, 3, -1, 0.4f);
  stamp(f, H, W, obj_px, obj_py, 2, 0, 0.6f);
  stamp(f, H, W, hand_px, hand_py, 2, 0, 0.8f);
  return f;
}

std::vector<float> render(const WorldState& state, int H, int W) {
  return render_px(pixel_anchor(state.base_x, W), pixel_anchor(state.base_y, H),
                   pixel_anchor(state.hand_x, W), pixel_anchor(state.hand_y, H),
                   pixel_anchor(state.object_x, W),
                   pixel_anchor(state.object_y, H), H, W);
}

ModalityBundle emit_signals(const WorldState& state, const Control& control,
                            CounterRng pose_rng, CounterRng force_rng) {
  ModalityBundle out;
  out.hand_pose[0] = static_cast<float>(state.hand_x);
  out.hand_pose[1] = static_cast<float>(state.hand_y);
  out.hand_pose[2] =
      static_cast<float>(heading_of(control.dhand_x, control.dhand_y));
  double aperture = 0.5 + 0.02 * pose_rng.normal();
  out.hand_pose[3] = static_cast<float>(std::min(1.0, std::max(0.0, aperture)));

  out.body_pose[0] = static_cast<float>(state.base_x);
  out.body_pose[1] = static_cast<float>(state.base_y);
  out.body_pose[2] =
      static_cast<float>(heading_of(control.dbase_x, control.dbase_y));

  // 4x4 pressure grid: a Gaussian bump of total mass object_weight while
  // gripping, otherwise zero, plus clamped per-cell noise
  double bump[16];
  double total = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double dx = j - 1.5, dy = i - 1.5;
      bump[i * 4 + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * 0.9 * 0.9));
      total += bump[i * 4 + j];
    }
  for (int c = 0; c < 16; ++c) {
    double base = state.grip ? state.object_weight * bump[c] / total : 0.0;
    double v = base + 0.01 * force_rng.normal();
    out.hand_force[c] = static_cast<float>(std::max(0.0, v));
  }
  double mass = 0.0;
  for (float v : out.hand_force) mass += static_cast<double>(v);
  out.muscle_emg[0] =
      static_cast<float>(std::max(0.0, 0.8 * mass + 0.05 * force_rng.normal()));
  out.muscle_emg[1] =
      static_cast<float>(std::max(0.0, 0.6 * mass + 0.05 * force_rng.normal()));
  return out;
}

const char* script_name(ScriptKind k) {
  switch (k) {
    case ScriptKind::kReach: return "reach";
    case ScriptKind::kGripCarry: return "grip_carry";
    case ScriptKind::kPassOver: return "pass_over";
    case ScriptKind::kRelease: return "release";
  }
  return "?";
}

namespace {

struct Vec2 {
  double x, y;
};

double dist(Vec2 a, Vec2 b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

Vec2 draw_point(CounterRng& rng, double lo, double hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

// rejection draw inside an annulus around `from`; the band keeps per-frame
// speeds moderate once the move is spread over a handful of frames
Vec2 draw_point_away(CounterRng& rng, double lo, double hi, Vec2 from,
                     double min_dist, double max_dist) {
  for (;;) {
    Vec2 p = draw_point(rng, lo, hi);
    double d = dist(p, from);
    if (d >= min_dist && d <= max_dist) return p;
  }
}

// linear move of the hand from `from` to `to` spread over frames
// (start_frame, arrive_frame]
void plan_move(std::vector<Control>& controls, Vec2 from, Vec2 to,
               int start_frame, int arrive_frame) {
  int steps = arrive_frame - start_frame;
  if (steps <= 0) return;
  for (int s = 0; s < steps; ++s) {
    // controls[t-1] produces frame t
    Control& c = controls[static_cast<size_t>(start_frame + s)];
    c.dhand_x = (to.x - from.x) / steps;
    c.dhand_y = (to.y - from.y) / steps;
  }
}

}  // namespace

EpisodeScript make_script(ScriptKind kind, int T, double weight_lo,
                          double weight_hi, CounterRng rng) {
  EpisodeScript ep;
  ep.controls.assign(static_cast<size_t>(T - 1), Control{});

  // Waypoint frames are drawn on the 12-frame reference timeline and then
  // rescaled to T, clamped so every script phase keeps at least one frame.
  // At T = 12 the mapping is the identity.
  auto scaled = [T](int frame12, int lo, int hi) {
    int f = static_cast<int>(std::lround(frame12 * (T - 1) / 11.0));
    return std::min(hi, std::max(lo, f));
  };

  Vec2 obj = draw_point(rng, 0.2, 0.8);
  double weight = rng.uniform(weight_lo, weight_hi);
  Vec2 base = draw_point(rng, 0.15, 0.85);
  double drift_x = rng.uniform(-0.015, 0.015);
  double drift_y = rng.uniform(-0.015, 0.015);
  for (Control& c : ep.controls) {
    c.dbase_x = drift_x;
    c.dbase_y = drift_y;
  }

  ep.initial.object_x = q32(obj.x);
  ep.initial.object_y = q32(obj.y);
  ep.initial.object_weight = q32(weight);
  ep.initial.base_x = q32(base.x);
  ep.initial.base_y = q32(base.y);

  switch (kind) {
    case ScriptKind::kReach: {
      Vec2 hand = draw_point_away(rng, 0.1, 0.9, obj, 0.25, 0.7);
      // stop short of the object, outside the grip radius
      double gap = rng.uniform(0.10, 0.16);
      double angle = rng.uniform(0.0, 6.283185307179586);
      Vec2 target{obj.x + gap * std::cos(angle), obj.y + gap * std::sin(angle)};
      target.x = std::min(0.9, std::max(0.1, target.x));
      target.y = std::min(0.9, std::max(0.1, target.y));
      int arrive = scaled(static_cast<int>(rng.range(7, 10)), 1, T - 1);
      plan_move(ep.controls, hand, target, 0, arrive);
      ep.initial.hand_x = q32(hand.x);
      ep.initial.hand_y = q32(hand.y);
      break;
    }
    case ScriptKind::kGripCarry:
    case ScriptKind::kPassOver: {
      // identical draws for both kinds; the pass-over keeps the trajectory
      // but never raises the grip bit, so its pose stream matches its twin
      Vec2 hand = draw_point_away(rng, 0.1, 0.9, obj, 0.25, 0.55);
      int grab = scaled(static_cast<int>(rng.range(3, 6)), 1, T - 2);
      Vec2 target = draw_point_away(rng, 0.15, 0.85, obj, 0.25, 0.6);
      plan_move(ep.controls, hand, obj, 0, grab);
      plan_move(ep.controls, obj, target, grab, T - 1);
      if (kind == ScriptKind::kGripCarry)
        ep.controls[static_cast<size_t>(grab - 1)].grip_bit = true;
      ep.initial.hand_x = q32(hand.x);
      ep.initial.hand_y = q32(hand.y);
      break;
    }
    case ScriptKind::kRelease: {
      // starts already carrying: hand on the object, grip engaged. The hand
      // pauses for one frame at the drop point: a grip toggle only fires
      // with the hand inside the grip radius, and mid-move the object trails
      // a full step behind.
      Vec2 stop = draw_point_away(rng, 0.15, 0.85, obj, 0.2, 0.55);
      int drop = scaled(static_cast<int>(rng.range(4, 8)), 2, T - 2);
      Vec2 away = draw_point_away(rng, 0.1, 0.9, stop, 0.25, 0.6);
      plan_move(ep.controls, obj, stop, 0, drop - 1);
      ep.controls[static_cast<size_t>(drop - 1)].grip_bit = true;  // toggle off
      plan_move(ep.controls, stop, away, drop, T - 1);
      ep.initial.hand_x = ep.initial.object_x;
      ep.initial.hand_y = ep.initial.object_y;
      ep.initial.grip = true;
      break;
    }
  }
  for (Control& c : ep.controls) {
    c.dbase_x = q32(c.dbase_x);
    c.dbase_y = q32(c.dbase_y);
    c.dhand_x = q32(c.dhand_x);
    c.dhand_y = q32(c.dhand_y);
  }
  return ep;
}

}  // namespace msim
