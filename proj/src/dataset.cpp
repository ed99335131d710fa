#include "msim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace msim {

using nlohmann::json;

int modality_index(std::string_view name) {
  for (int m = 0; m < kNumModalities; ++m)
    if (name == kModalities[static_cast<size_t>(m)].name) return m;
  return -1;
}

int mask_count(const ModalityMask& mask) {
  int n = 0;
  for (bool p : mask) n += p ? 1 : 0;
  return n;
}

ModalityMask mask_dropping(const std::string& csv) {
  ModalityMask mask = kAllPresent;
  size_t pos = 0;
  while (pos < csv.size()) {
    size_t comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    std::string name = csv.substr(pos, comma - pos);
    if (!name.empty()) {
      int m = modality_index(name);
      if (m < 0)
        throw std::invalid_argument("mask: unknown modality " + name);
      mask[static_cast<size_t>(m)] = false;
    }
    pos = comma + 1;
  }
  if (mask_count(mask) == 0)
    throw std::invalid_argument("mask: at least one modality must remain");
  return mask;
}

std::string mask_label(const ModalityMask& mask) {
  if (mask_count(mask) == kNumModalities) return "all";
  std::string label = "drop_";
  bool first = true;
  for (int m = 0; m < kNumModalities; ++m) {
    if (mask[static_cast<size_t>(m)]) continue;
    if (!first) label += "+";
    label += kModalities[static_cast<size_t>(m)].name;
    first = false;
  }
  return label;
}

void validate_config(const WorldConfig& cfg) {
  auto fail = [](const std::string& field) {
    throw std::invalid_argument("world config: invalid " + field);
  };
  if (cfg.kind != "manip" && cfg.kind != "toy") fail("world.kind");
  if (cfg.episodes <= 0) fail("world.episodes");
  if (cfg.T < 2) fail("world.T");
  if (cfg.kind == "manip" && cfg.T < 4)
    fail("world.T (manip scripts need T >= 4)");
  if (cfg.H < 8) fail("world.H");
  if (cfg.W < 8) fail("world.W");
  if (cfg.context < 1 || cfg.context >= cfg.T) fail("world.context");
  if (cfg.train_frac <= 0.0 || cfg.train_frac >= 1.0) fail("world.train_frac");
  double mix_sum = cfg.mix_reach + cfg.mix_grip_carry + cfg.mix_pass_over +
                   cfg.mix_release;
  if (cfg.mix_reach < 0 || cfg.mix_grip_carry < 0 || cfg.mix_pass_over < 0 ||
      cfg.mix_release < 0 || std::abs(mix_sum - 1.0) > 1e-9)
    fail("world.script_mix (must be nonnegative and sum to 1)");
  if (std::abs(cfg.mix_pass_over - cfg.mix_grip_carry) > 1e-9)
    fail("world.script_mix.pass_over (must equal grip_carry for pairing)");
  if (cfg.weight_lo < 0.5 || cfg.weight_hi > 2.0 ||
      cfg.weight_lo > cfg.weight_hi)
    fail("world.weight_range (must lie in [0.5, 2.0])");
}

namespace {

uint64_t derive_seed(uint64_t master, const char* label, uint64_t index) {
  CounterRng r(master);
  r.key(label).key(index);
  return r.next_u64();
}

Episode simulate_episode(const WorldConfig& cfg, ScriptKind kind,
                         uint64_t unit_seed, uint64_t ep_seed) {
  EpisodeScript script =
      make_script(kind, cfg.T, cfg.weight_lo, cfg.weight_hi,
                  CounterRng(unit_seed).key("script"));
  Episode ep;
  ep.T = cfg.T;
  ep.H = cfg.H;
  ep.W = cfg.W;
  ep.script = script_name(kind);
  ep.seed = ep_seed;
  ep.frames.reserve(static_cast<size_t>(cfg.T) * cfg.H * cfg.W);
  for (int m = 0; m < kNumModalities; ++m)
    ep.signals[static_cast<size_t>(m)].reserve(
        static_cast<size_t>(cfg.T) * kModalities[static_cast<size_t>(m)].dim);

  WorldState state = script.initial;
  for (int t = 0; t < cfg.T; ++t) {
    Control control;  // frame 0 carries zero control
    if (t > 0) {
      control = script.controls[static_cast<size_t>(t - 1)];
      state = step(state, control);
    }
    std::vector<float> frame = render(state, cfg.H, cfg.W);
    ep.frames.insert(ep.frames.end(), frame.begin(), frame.end());
    // pose jitter is keyed by the unit seed so grip/pass twins share it;
    // force noise is keyed per episode
    ModalityBundle sig =
        emit_signals(state, control, CounterRng(unit_seed).key("pose").key(t),
                     CounterRng(ep_seed).key("force").key(t));
    ep.signals[0].insert(ep.signals[0].end(), sig.hand_pose.begin(),
                         sig.hand_pose.end());
    ep.signals[1].insert(ep.signals[1].end(), sig.body_pose.begin(),
                         sig.body_pose.end());
    ep.signals[2].insert(ep.signals[2].end(), sig.hand_force.begin(),
                         sig.hand_force.end());
    ep.signals[3].insert(ep.signals[3].end(), sig.muscle_emg.begin(),
                         sig.muscle_emg.end());
  }
  return ep;
}

Episode toy_episode(const WorldConfig& cfg, int index, uint64_t ep_seed) {
  Episode ep;
  ep.T = cfg.T;
  ep.H = cfg.H;
  ep.W = cfg.W;
  ep.script = "toy";
  ep.seed = ep_seed;
  float future_value = (index % 2 == 0) ? 0.2f : 0.8f;
  for (int t = 0; t < cfg.T; ++t) {
    float v = (t < cfg.context) ? 0.5f : future_value;
    ep.frames.insert(ep.frames.end(), static_cast<size_t>(cfg.H) * cfg.W, v);
  }
  for (int m = 0; m < kNumModalities; ++m)
    ep.signals[static_cast<size_t>(m)].assign(
        static_cast<size_t>(cfg.T) * kModalities[static_cast<size_t>(m)].dim,
        0.0f);
  return ep;
}

struct Unit {
  std::vector<ScriptKind> members;  // 1 or 2 episodes (grip/pass pair)
};

}  // namespace

Dataset generate_dataset(const WorldConfig& cfg, uint64_t master_seed) {
  validate_config(cfg);
  Dataset ds;
  ds.kind = cfg.kind;
  ds.seed = master_seed;
  ds.config = cfg;

  std::vector<Unit> units;
  if (cfg.kind == "toy") {
    for (int i = 0; i < cfg.episodes; ++i)
      units.push_back(Unit{{ScriptKind::kReach}});  // kind unused for toy
  } else {
    int n = cfg.episodes;
    int n_grip = static_cast<int>(std::lround(cfg.mix_grip_carry * n));
    int n_reach = static_cast<int>(std::lround(cfg.mix_reach * n));
    int n_release = n - 2 * n_grip - n_reach;
    if (n_release < 0)
      throw std::invalid_argument(
          "world config: invalid world.script_mix (counts exceed episodes)");
    for (int i = 0; i < n_grip; ++i)
      units.push_back(Unit{{ScriptKind::kGripCarry, ScriptKind::kPassOver}});
    for (int i = 0; i < n_reach; ++i)
      units.push_back(Unit{{ScriptKind::kReach}});
    for (int i = 0; i < n_release; ++i)
      units.push_back(Unit{{ScriptKind::kRelease}});
  }

  // deterministic layout shuffle, twins always adjacent
  CounterRng layout(master_seed);
  layout.key("layout");
  for (size_t i = units.size(); i > 1; --i)
    std::swap(units[i - 1],
              units[static_cast<size_t>(layout.range(0, static_cast<int64_t>(i) - 1))]);

  // greedy exact-fill split assignment over whole units
  int train_quota =
      static_cast<int>(std::lround(cfg.train_frac * cfg.episodes));
  std::vector<const Unit*> train_units, test_units;
  int remaining = train_quota;
  for (const Unit& u : units) {
    int sz = static_cast<int>(u.members.size());
    if (sz <= remaining) {
      train_units.push_back(&u);
      remaining -= sz;
    } else {
      test_units.push_back(&u);
    }
  }
  if (remaining != 0)
    throw std::invalid_argument(
        "world config: invalid world.train_frac (cannot split paired "
        "episodes at this fraction)");

  auto emit_unit = [&](const Unit& u, size_t unit_index,
                       std::vector<int>& id_list) {
    uint64_t unit_seed = derive_seed(master_seed, "unit", unit_index);
    std::vector<int> twin_ids;
    for (ScriptKind kind : u.members) {
      int id = static_cast<int>(ds.episodes.size());
      uint64_t ep_seed =
          derive_seed(master_seed, "episode", static_cast<uint64_t>(id));
      Episode ep = (cfg.kind == "toy")
                       ? toy_episode(cfg, id, ep_seed)
                       : simulate_episode(cfg, kind, unit_seed, ep_seed);
      ep.id = id;
      ds.episodes.push_back(std::move(ep));
      id_list.push_back(id);
      twin_ids.push_back(id);
    }
    if (twin_ids.size() == 2) {
      ds.episodes[static_cast<size_t>(twin_ids[0])].pair = twin_ids[1];
      ds.episodes[static_cast<size_t>(twin_ids[1])].pair = twin_ids[0];
    }
  };

  // unit indices follow the shuffled layout so seeds are split-independent
  size_t unit_index = 0;
  for (const Unit* u : train_units) emit_unit(*u, unit_index++, ds.train_ids);
  for (const Unit* u : test_units) emit_unit(*u, unit_index++, ds.test_ids);

  validate_dataset(ds);
  return ds;
}

void validate_dataset(const Dataset& ds) {
  if (ds.episodes.empty()) throw std::runtime_error("dataset: no episodes");
  for (const Episode& ep : ds.episodes) {
    if (ep.T != ds.config.T)
      throw std::runtime_error("dataset: episode length mismatch");
    if (ep.frames.size() != static_cast<size_t>(ep.T) * ep.H * ep.W)
      throw std::runtime_error("dataset: frame buffer size mismatch");
    for (float v : ep.frames)
      if (!(v >= 0.0f && v <= 1.0f))
        throw std::runtime_error("dataset: frame value outside [0,1]");
    for (int m = 0; m < kNumModalities; ++m) {
      const auto& sig = ep.signals[static_cast<size_t>(m)];
      if (sig.size() != static_cast<size_t>(ep.T) *
                            kModalities[static_cast<size_t>(m)].dim)
        throw std::runtime_error("dataset: signal buffer size mismatch");
    }
    for (int t = 0; t < ep.T; ++t) {
      float aperture = ep.signal(0, t)[3];
      if (!(aperture >= 0.0f && aperture <= 1.0f))
        throw std::runtime_error("dataset: aperture outside [0,1]");
      for (int c = 0; c < 16; ++c)
        if (!(ep.signal(2, t)[c] >= 0.0f))
          throw std::runtime_error("dataset: negative force entry");
      for (int c = 0; c < 2; ++c)
        if (!(ep.signal(3, t)[c] >= 0.0f))
          throw std::runtime_error("dataset: negative emg entry");
    }
  }
  std::set<int> seen;
  for (int id : ds.train_ids) seen.insert(id);
  for (int id : ds.test_ids) seen.insert(id);
  if (seen.size() != ds.episodes.size())
    throw std::runtime_error("dataset: split does not cover all episodes");
}

namespace {

void put_u32(std::string& out, uint32_t v) {
  char b[4];
  b[0] = static_cast<char>(v & 0xff);
  b[1] = static_cast<char>((v >> 8) & 0xff);
  b[2] = static_cast<char>((v >> 16) & 0xff);
  b[3] = static_cast<char>((v >> 24) & 0xff);
  out.append(b, 4);
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  uint32_t u32() {
    if (pos + 4 > buf.size()) throw std::runtime_error("dataset: truncated");
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<unsigned char>(buf[pos + static_cast<size_t>(i)]);
    pos += 4;
    return v;
  }
  std::string bytes(size_t n) {
    if (pos + n > buf.size()) throw std::runtime_error("dataset: truncated");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

json config_to_json(const WorldConfig& c) {
  return json{{"kind", c.kind},
              {"episodes", c.episodes},
              {"T", c.T},
              {"H", c.H},
              {"W", c.W},
              {"context", c.context},
              {"train_frac", c.train_frac},
              {"mix_reach", c.mix_reach},
              {"mix_grip_carry", c.mix_grip_carry},
              {"mix_pass_over", c.mix_pass_over},
              {"mix_release", c.mix_release},
              {"weight_lo", c.weight_lo},
              {"weight_hi", c.weight_hi}};
}

WorldConfig config_from_json(const json& j) {
  WorldConfig c;
  c.kind = j.at("kind").get<std::string>();
  c.episodes = j.at("episodes").get<int>();
  c.T = j.at("T").get<int>();
  c.H = j.at("H").get<int>();
  c.W = j.at("W").get<int>();
  c.context = j.at("context").get<int>();
  c.train_frac = j.at("train_frac").get<double>();
  c.mix_reach = j.at("mix_reach").get<double>();
  c.mix_grip_carry = j.at("mix_grip_carry").get<double>();
  c.mix_pass_over = j.at("mix_pass_over").get<double>();
  c.mix_release = j.at("mix_release").get<double>();
  c.weight_lo = j.at("weight_lo").get<double>();
  c.weight_hi = j.at("weight_hi").get<double>();
  return c;
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
  std::string out("MSWD1\n", 6);
  put_u32(out, 1);  // version
  put_u32(out, static_cast<uint32_t>(ds.episodes.size()));
  for (const Episode& ep : ds.episodes) {
    put_u32(out, static_cast<uint32_t>(ep.T));
    put_u32(out, static_cast<uint32_t>(ep.H));
    put_u32(out, static_cast<uint32_t>(ep.W));
    for (float v : ep.frames) put_f32(out, v);
    for (int m = 0; m < kNumModalities; ++m) {
      const ModalitySpec& spec = kModalities[static_cast<size_t>(m)];
      put_u32(out, static_cast<uint32_t>(std::strlen(spec.name)));
      out += spec.name;
      put_u32(out, static_cast<uint32_t>(ep.T));
      put_u32(out, static_cast<uint32_t>(spec.dim));
      for (float v : ep.signals[static_cast<size_t>(m)]) put_f32(out, v);
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dataset: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("dataset: write failed for " + path);

  json manifest;
  manifest["kind"] = ds.kind;
  manifest["seed"] = ds.seed;
  manifest["config"] = config_to_json(ds.config);
  manifest["split"] = json{{"train", ds.train_ids}, {"test", ds.test_ids}};
  json eps = json::array();
  for (const Episode& ep : ds.episodes)
    eps.push_back(json{{"id", ep.id},
                       {"script", ep.script},
                       {"seed", ep.seed},
                       {"pair", ep.pair}});
  manifest["episodes"] = eps;
  std::ofstream mf(path + ".manifest.json");
  if (!mf) throw std::runtime_error("dataset: cannot open manifest for " + path);
  mf << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dataset: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  std::string buf = ss.str();
  if (buf.size() < 6 || buf.compare(0, 6, "MSWD1\n") != 0)
    throw std::runtime_error("dataset: bad magic in " + path);
  Reader r{buf, 6};
  uint32_t version = r.u32();
  if (version != 1)
    throw std::runtime_error("dataset: unsupported version in " + path);
  uint32_t count = r.u32();

  Dataset ds;
  for (uint32_t e = 0; e < count; ++e) {
    Episode ep;
    ep.id = static_cast<int>(e);
    ep.T = static_cast<int>(r.u32());
    ep.H = static_cast<int>(r.u32());
    ep.W = static_cast<int>(r.u32());
    size_t npix = static_cast<size_t>(ep.T) * ep.H * ep.W;
    ep.frames.resize(npix);
    for (size_t i = 0; i < npix; ++i) ep.frames[i] = r.f32();
    for (int m = 0; m < kNumModalities; ++m) {
      const ModalitySpec& spec = kModalities[static_cast<size_t>(m)];
      std::string name = r.bytes(r.u32());
      if (name != spec.name)
        throw std::runtime_error("dataset: modality order mismatch, got " +
                                 name);
      uint32_t t = r.u32(), dim = r.u32();
      if (t != static_cast<uint32_t>(ep.T) ||
          dim != static_cast<uint32_t>(spec.dim))
        throw std::runtime_error("dataset: signal shape mismatch for " + name);
      auto& sig = ep.signals[static_cast<size_t>(m)];
      sig.resize(static_cast<size_t>(t) * dim);
      for (size_t i = 0; i < sig.size(); ++i) sig[i] = r.f32();
    }
    ds.episodes.push_back(std::move(ep));
  }
  if (r.pos != buf.size())
    throw std::runtime_error("dataset: trailing bytes in " + path);

  std::ifstream mf(path + ".manifest.json");
  if (!mf)
    throw std::runtime_error("dataset: missing manifest for " + path);
  json manifest = json::parse(mf);
  ds.kind = manifest.at("kind").get<std::string>();
  ds.seed = manifest.at("seed").get<uint64_t>();
  ds.config = config_from_json(manifest.at("config"));
  ds.train_ids = manifest.at("split").at("train").get<std::vector<int>>();
  ds.test_ids = manifest.at("split").at("test").get<std::vector<int>>();
  for (const json& je : manifest.at("episodes")) {
    int id = je.at("id").get<int>();
    if (id < 0 || id >= static_cast<int>(ds.episodes.size()))
      throw std::runtime_error("dataset: manifest episode id out of range");
    Episode& ep = ds.episodes[static_cast<size_t>(id)];
    ep.script = je.at("script").get<std::string>();
    ep.seed = je.at("seed").get<uint64_t>();
    ep.pair = je.at("pair").get<int>();
  }
  validate_dataset(ds);
  return ds;
}

// ---------------------------------------------------------------------------
// Rollout oracle

namespace {

double force_mass(const Episode& ep, int t) {
  double s = 0.0;
  for (int c = 0; c < 16; ++c)
    s += static_cast<double>(ep.signal(2, t)[c]);
  return s;
}

bool grip_at(const Episode& ep, int t) {
  double mass = force_mass(ep, t);
  if (mass > 0.25 && mass < 0.6)
    throw std::runtime_error(
        "oracle: inconsistent signals (force mass in the ambiguity band at "
        "frame " +
        std::to_string(t) + ")");
  return mass > 0.5;
}

struct Anchor {
  int x, y;
  bool operator<(const Anchor& o) const {
    return x != o.x ? x < o.x : y < o.y;
  }
};

// candidate object anchors in one frame: a 2x2 stamp (clipped at edges)
// whose pixels are all either visible at exactly 0.6 or hidden under the
// hand stamp, with at least one visible pixel and no stray 0.6 elsewhere
std::set<Anchor> object_candidates(const Episode& ep, int t, int hand_px,
                                   int hand_py) {
  const float* frame = ep.frame(t);
  int H = ep.H, W = ep.W;
  auto hand_covers = [&](int x, int y) {
    return x >= hand_px && x <= hand_px + 1 && y >= hand_py &&
           y <= hand_py + 1;
  };
  std::set<Anchor> object_pixels;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (frame[static_cast<size_t>(y) * W + x] == 0.6f)
        object_pixels.insert({x, y});
  std::set<Anchor> out;
  for (int ay = 0; ay < H; ++ay)
    for (int ax = 0; ax < W; ++ax) {
      bool any_visible = false, ok = true;
      std::set<Anchor> covered;
      for (int dy = 0; dy < 2 && ok; ++dy)
        for (int dx = 0; dx < 2 && ok; ++dx) {
          int x = ax + dx, y = ay + dy;
          if (x >= W || y >= H) continue;
          float v = frame[static_cast<size_t>(y) * W + x];
          if (v == 0.6f) {
            any_visible = true;
            covered.insert({x, y});
          } else if (!hand_covers(x, y)) {
            ok = false;
          }
        }
      if (!ok || !any_visible) continue;
      if (covered.size() == object_pixels.size()) out.insert({ax, ay});
    }
  return out;
}

}  // namespace

std::vector<float> oracle_rollout(const Episode& ep, int context_len) {
  if (context_len < 1 || context_len >= ep.T)
    throw std::invalid_argument("oracle: bad context length");
  int T = ep.T, H = ep.H, W = ep.W;

  std::vector<double> hx(static_cast<size_t>(T)), hy(static_cast<size_t>(T)),
      bx(static_cast<size_t>(T)), by(static_cast<size_t>(T));
  std::vector<bool> grip(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    hx[static_cast<size_t>(t)] = static_cast<double>(ep.signal(0, t)[0]);
    hy[static_cast<size_t>(t)] = static_cast<double>(ep.signal(0, t)[1]);
    bx[static_cast<size_t>(t)] = static_cast<double>(ep.signal(1, t)[0]);
    by[static_cast<size_t>(t)] = static_cast<double>(ep.signal(1, t)[1]);
    grip[static_cast<size_t>(t)] = grip_at(ep, t);
  }

  // track the object through the context: continuous position while (or
  // after) gripping, otherwise a pixel anchor recovered from the frames
  double ox = 0.0, oy = 0.0;
  bool cont_known = false;
  int opx = -1, opy = -1;
  for (int t = 0; t < context_len; ++t) {
    if (grip[static_cast<size_t>(t)]) {
      // after a release it rests at the hand position of the last gripped
      // step, which is exactly what this loop leaves behind
      ox = hx[static_cast<size_t>(t)];
      oy = hy[static_cast<size_t>(t)];
      cont_known = true;
    }
  }
  if (!cont_known) {
    // never gripped during the context: the object is static, find its
    // stamp; intersect candidates across frames to break overlap ambiguity
    std::set<Anchor> candidates;
    bool have = false;
    for (int t = context_len - 1; t >= 0; --t) {
      std::set<Anchor> cur = object_candidates(
          ep, t, pixel_anchor(hx[static_cast<size_t>(t)], W),
          pixel_anchor(hy[static_cast<size_t>(t)], H));
      if (cur.empty()) continue;
      if (!have) {
        candidates = cur;
        have = true;
      } else {
        std::set<Anchor> inter;
        std::set_intersection(candidates.begin(), candidates.end(),
                              cur.begin(), cur.end(),
                              std::inserter(inter, inter.begin()));
        if (!inter.empty()) candidates = inter;
      }
      if (candidates.size() == 1) break;
    }
    if (!have || candidates.size() != 1)
      throw std::runtime_error(
          "oracle: inconsistent signals (cannot locate the object in the "
          "context frames)");
    opx = candidates.begin()->x;
    opy = candidates.begin()->y;
  }

  std::vector<float> out;
  out.reserve(static_cast<size_t>(T - context_len) * H * W);
  for (int t = context_len; t < T; ++t) {
    bool was = grip[static_cast<size_t>(t - 1)];
    bool now = grip[static_cast<size_t>(t)];
    if (now && !was) {
      // engagement: the hand must actually be at the object
      double tol = kGripRadius + (cont_known ? 1e-6 : 0.06);
      double refx = cont_known ? ox : static_cast<double>(opx) / (W - 1);
      double refy = cont_known ? oy : static_cast<double>(opy) / (H - 1);
      double d = std::hypot(hx[static_cast<size_t>(t)] - refx,
                            hy[static_cast<size_t>(t)] - refy);
      if (d > tol)
        throw std::runtime_error(
            "oracle: inconsistent signals (grip engaged away from the object "
            "at frame " +
            std::to_string(t) + ")");
      cont_known = true;
    }
    if (now) {
      ox = hx[static_cast<size_t>(t)];
      oy = hy[static_cast<size_t>(t)];
    }
    int obj_px = cont_known ? pixel_anchor(ox, W) : opx;
    int obj_py = cont_known ? pixel_anchor(oy, H) : opy;
    std::vector<float> frame = render_px(
        pixel_anchor(bx[static_cast<size_t>(t)], W),
        pixel_anchor(by[static_cast<size_t>(t)], H),
        pixel_anchor(hx[static_cast<size_t>(t)], W),
        pixel_anchor(hy[static_cast<size_t>(t)], H), obj_px, obj_py, H, W);
    out.insert(out.end(), frame.begin(), frame.end());
  }
  return out;
}

}  // namespace msim
