#include "msim/trainer.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "msim/adam.hpp"
#include "msim/checkpoint.hpp"
#include "msim/nn.hpp"
#include "msim/rng.hpp"
#include "msim/tape.hpp"

namespace msim {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string mask_csv(const ModalityMask& mask) {
  std::string out;
  for (int m = 0; m < kNumModalities; ++m) {
    out += mask[static_cast<size_t>(m)] ? '1' : '0';
  }
  return out;
}

// FNV-1a over the dataset bytes; resume identity tracks content, not path.
std::string file_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("train: cannot read " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    std::streamsize got = is.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx",
                static_cast<unsigned long long>(h));
  return out;
}

// One line capturing every field a resumed run must agree on.
std::string config_line(const TrainConfig& cfg) {
  std::ostringstream os;
  // steps and save_every are deliberately absent: extending a finished run
  // or changing the save cadence yields bit-identical prefixes, so neither
  // invalidates existing state.
  os << "dataset_fnv=" << file_digest(cfg.dataset_path) << " seed=" << cfg.seed
     << " batch=" << cfg.batch
     << " lambdas=" << fmt(cfg.lambdas.vdm) << "," << fmt(cfg.lambdas.ssl)
     << "," << fmt(cfg.lambdas.norm) << "," << fmt(cfg.lambdas.frame)
     << " fusion=" << cfg.fusion << " interaction=" << cfg.interaction
     << " mask=" << mask_csv(cfg.train_mask) << " history=" << cfg.history
     << " lr=" << fmt(cfg.lr) << " betas=" << fmt(cfg.beta1) << ","
     << fmt(cfg.beta2) << " eps=" << fmt(cfg.adam_eps)
     << " ema=" << fmt(cfg.ema_decay) << "/" << cfg.ema_every
     << " diffusion=" << cfg.diffusion_steps << "," << fmt(cfg.beta_start)
     << "," << fmt(cfg.beta_end) << " model=" << cfg.model.d << ","
     << cfg.model.expert_width << "," << cfg.model.codec_h0 << ","
     << cfg.model.codec_h1 << "," << cfg.model.step_embed << ","
     << cfg.model.frame_embed << "," << cfg.model.ctx_embed << ","
     << fmt(cfg.model.dropout) << ","
     << (cfg.model.context_actions ? 1 : 0);
  return os.str();
}

constexpr char kStateMagic[] = "MSTS1\n";

void put_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_i64(std::ostream& os, int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_f64s(std::ostream& os, const std::vector<double>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}
uint32_t get_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
int64_t get_i64(std::istream& is) {
  int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
void get_f64s(std::istream& is, std::vector<double>& v, size_t n) {
  v.resize(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
}

struct TrainState {
  int64_t next_step = 0;
  ParamMap params, ema;
  AdamState adam;
};

void save_state(const std::string& path, const std::string& cfg_line,
                const TrainState& st) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("train: cannot write " + tmp);
    os.write(kStateMagic, 6);
    put_u32(os, static_cast<uint32_t>(cfg_line.size()));
    os.write(cfg_line.data(), static_cast<std::streamsize>(cfg_line.size()));
    put_i64(os, st.next_step);
    put_i64(os, st.adam.t);
    put_u32(os, static_cast<uint32_t>(st.params.size()));
    for (const auto& [name, p] : st.params) {
      put_u32(os, static_cast<uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      put_u32(os, static_cast<uint32_t>(p.shape.size()));
      for (int e : p.shape) put_u32(os, static_cast<uint32_t>(e));
      put_f64s(os, p.data);
      put_f64s(os, st.ema.at(name).data);
      put_f64s(os, st.adam.m.at(name));
      put_f64s(os, st.adam.v.at(name));
    }
    if (!os) throw std::runtime_error("train: short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_state(const std::string& path, const std::string& cfg_line) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("train: cannot read " + path);
  char magic[6];
  is.read(magic, 6);
  if (!is || std::string(magic, 6) != kStateMagic)
    throw std::runtime_error("train: " + path + " is not a trainer state");
  uint32_t clen = get_u32(is);
  std::string stored(clen, '\0');
  is.read(stored.data(), clen);
  if (stored != cfg_line)
    throw std::runtime_error(
        "train: existing run in out_dir used a different config");
  TrainState st;
  st.next_step = get_i64(is);
  st.adam.t = get_i64(is);
  uint32_t count = get_u32(is);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t nlen = get_u32(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    uint32_t rank = get_u32(is);
    std::vector<int> shape;
    size_t n = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<int>(get_u32(is)));
      n *= static_cast<size_t>(shape.back());
    }
    Array p = Array::zeros(shape);
    get_f64s(is, p.data, n);
    Array e = Array::zeros(shape);
    get_f64s(is, e.data, n);
    std::vector<double> m, v;
    get_f64s(is, m, n);
    get_f64s(is, v, n);
    if (!is) throw std::runtime_error("train: truncated state " + path);
    st.params.emplace(name, std::move(p));
    st.ema.emplace(name, std::move(e));
    st.adam.m.emplace(name, std::move(m));
    st.adam.v.emplace(name, std::move(v));
  }
  return st;
}

// Keeps the header plus the first `rows` data rows; a resumed run appends
// from there so the finished file has exactly cfg.steps rows.
void truncate_csv(const std::string& path, int64_t rows) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("train: cannot read " + path);
  std::string line, kept;
  int64_t seen = -1;  // header is line 0
  while (std::getline(is, line) && seen < rows) {
    kept += line;
    kept += '\n';
    ++seen;
  }
  is.close();
  std::ofstream os(path, std::ios::trunc);
  os << kept;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("train config: invalid " + what);
  };
  if (dataset_path.empty()) fail("dataset_path (empty)");
  if (out_dir.empty()) fail("out_dir (empty)");
  if (steps <= 0) fail("steps (need > 0)");
  if (batch <= 0) fail("batch (need > 0)");
  if (history != 1 && history != 4) fail("history (must be 1 or 4)");
  if (fusion != "softmax" && fusion != "max" && fusion != "mean" &&
      fusion != "concat")
    fail("fusion (softmax|max|mean|concat)");
  if (interaction != "hyperplane" && interaction != "projection" &&
      interaction != "none")
    fail("interaction (hyperplane|projection|none)");
  if (mask_count(train_mask) == 0) fail("train_mask (drops every modality)");
  if (!(lr > 0.0)) fail("lr (need > 0)");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 (need [0,1))");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 (need [0,1))");
  if (!(adam_eps > 0.0)) fail("adam_eps (need > 0)");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) fail("ema_decay (need [0,1])");
  if (ema_every <= 0) fail("ema_every (need > 0)");
  if (save_every <= 0) fail("save_every (need > 0)");
  if (diffusion_steps < 1) fail("diffusion_steps (need >= 1)");
  if (!(beta_start > 0.0 && beta_start < 1.0)) fail("beta_start");
  if (!(beta_end >= beta_start && beta_end < 1.0)) fail("beta_end");
}

ModelConfig model_config_for(const Dataset& ds, const TrainConfig& cfg) {
  ModelConfig mc = cfg.model;
  mc.H = ds.config.H;
  mc.W = ds.config.W;
  mc.context = ds.config.context;
  mc.horizon = ds.config.T - ds.config.context;
  mc.history = cfg.history;
  mc.fusion = cfg.fusion;
  mc.interaction = cfg.interaction;
  mc.validate();
  return mc;
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  Dataset ds = load_dataset(cfg.dataset_path);
  ModelConfig mcfg = model_config_for(ds, cfg);
  NoiseSchedule sched =
      make_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end);
  if (ds.train_ids.empty()) throw std::runtime_error("train: empty train split");

  std::filesystem::create_directories(cfg.out_dir);
  const std::string ckpt_path = cfg.out_dir + "/ckpt.swck";
  const std::string ema_path = cfg.out_dir + "/ckpt_ema.swck";
  const std::string state_path = cfg.out_dir + "/state.bin";
  const std::string csv_path = cfg.out_dir + "/loss.csv";
  const std::string cfgline = config_line(cfg);

  TrainState st;
  if (std::filesystem::exists(state_path)) {
    st = load_state(state_path, cfgline);
    if (st.next_step > cfg.steps)
      throw std::runtime_error(
          "train: existing run already passed the requested step count");
    truncate_csv(csv_path, st.next_step);
  } else {
    st.params = init_model_params(mcfg, cfg.seed);
    st.ema = st.params;
    for (const auto& [name, p] : st.params) {
      st.adam.m.emplace(name, std::vector<double>(p.size(), 0.0));
      st.adam.v.emplace(name, std::vector<double>(p.size(), 0.0));
    }
    std::ofstream os(csv_path, std::ios::trunc);
    os << "step,total,vdm,ssl,norm,frame\n";
  }

  AdamConfig acfg;
  acfg.lr = cfg.lr;
  acfg.beta1 = cfg.beta1;
  acfg.beta2 = cfg.beta2;
  acfg.eps = cfg.adam_eps;

  std::ofstream csv(csv_path, std::ios::app);
  if (!csv) throw std::runtime_error("train: cannot write " + csv_path);

  auto save_all = [&](int64_t next_step) {
    csv.flush();
    save_checkpoint(ckpt_path, st.params);
    save_checkpoint(ema_path, st.ema);
    st.next_step = next_step;
    save_state(state_path, cfgline, st);
  };

  const int64_t train_n = static_cast<int64_t>(ds.train_ids.size());
  ParamMap grad_buf;
  TrainResult result;
  result.ckpt_path = ckpt_path;
  result.ema_path = ema_path;
  result.loss_csv_path = csv_path;

  for (int64_t step = st.next_step; step < cfg.steps; ++step) {
    CounterRng draw(cfg.seed);
    draw.key("batch").key(static_cast<uint64_t>(step));
    std::vector<int> ids;
    ids.reserve(static_cast<size_t>(cfg.batch));
    for (int j = 0; j < cfg.batch; ++j)
      ids.push_back(ds.train_ids[static_cast<size_t>(
          draw.range(0, train_n - 1))]);
    Batch batch = make_batch(ds, ids, mcfg);

    Tape tape;
    Bank bank = tracked_bank(tape, st.params);
    LossParts parts =
        total_loss_graph(bank, mcfg, batch, sched, cfg.train_mask,
                         cfg.lambdas, true, cfg.seed, step);
    tape.backward(parts.total);
    tape.named_grads_into(grad_buf);
    adam_step(st.params, grad_buf, st.adam, acfg);
    ema_update(st.ema, st.params, cfg.ema_decay, cfg.ema_every, step + 1);

    result.final_total = parts.total.item();
    csv << step << ',' << fmt(parts.total.item()) << ','
        << fmt(parts.vdm.item()) << ',' << fmt(parts.ssl.item()) << ','
        << fmt(parts.norm.item()) << ',' << fmt(parts.frame.item()) << '\n';
    ++result.steps_run;

    if ((step + 1) % cfg.save_every == 0 || step + 1 == cfg.steps)
      save_all(step + 1);
  }

  if (st.next_step < cfg.steps) save_all(cfg.steps);
  if (!std::filesystem::exists(ckpt_path)) save_all(st.next_step);
  return result;
}

double mse(const Array& pred, const Array& gt) {
  if (!pred.same_shape(gt))
    throw std::invalid_argument("mse: shape mismatch " + pred.shape_str() +
                                " vs " + gt.shape_str());
  double s = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    double d = pred.data[i] - gt.data[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.data.size());
}

double psnr_db(double mse_value) {
  if (mse_value < 0.0) throw std::invalid_argument("psnr: negative mse");
  if (mse_value < 1e-10) return 100.0;
  return 10.0 * std::log10(1.0 / mse_value);
}

std::vector<double> drift_curve(const Array& pred, const Array& gt, int B,
                                int F) {
  if (!pred.same_shape(gt))
    throw std::invalid_argument("drift_curve: shape mismatch");
  if (B <= 0 || F <= 0 || pred.cols() != B * F)
    throw std::invalid_argument("drift_curve: bad episode layout");
  int hw = pred.rows();
  std::vector<double> curve(static_cast<size_t>(F), 0.0);
  for (int e = 0; e < B; ++e)
    for (int j = 0; j < F; ++j) {
      int c = e * F + j;
      double s = 0.0;
      for (int i = 0; i < hw; ++i) {
        double d = pred.at(i, c) - gt.at(i, c);
        s += d * d;
      }
      curve[static_cast<size_t>(j)] += s / static_cast<double>(hw);
    }
  for (double& v : curve) v /= static_cast<double>(B);
  return curve;
}

EvalResult evaluate(const ParamMap& params, const ModelConfig& mcfg,
                    const Dataset& ds, const NoiseSchedule& sched,
                    const EvalRequest& req) {
  std::vector<int> ids = req.episode_ids.empty()
                             ? ds.test_ids
                             : req.episode_ids;
  if (ids.empty()) throw std::invalid_argument("evaluate: no episodes");
  Batch batch = make_batch(ds, ids, mcfg);
  Array pred = predict_frames(params, mcfg, batch, sched, req.mask, req.seed);

  int B = batch.B;
  int F = mcfg.horizon;
  Array gt = Array::zeros({mcfg.hw(), B * F});
  for (int e = 0; e < B; ++e)
    for (int j = 0; j < F; ++j)
      for (int i = 0; i < mcfg.hw(); ++i)
        gt.at(i, e * F + j) = batch.frames.at(i, e * mcfg.T() + mcfg.context + j);

  EvalResult r;
  r.mse = mse(pred, gt);
  r.psnr = psnr_db(r.mse);
  r.frame_mse = drift_curve(pred, gt, B, F);
  r.episodes = B;

  if (!req.dump_dir.empty()) {
    for (int e = 0; e < B; ++e) {
      std::string dir = req.dump_dir + "/episode_" +
                        std::to_string(batch.ep_ids[static_cast<size_t>(e)]);
      std::filesystem::create_directories(dir);
      std::vector<double> frame(static_cast<size_t>(mcfg.hw()));
      for (int j = 0; j < F; ++j) {
        for (int i = 0; i < mcfg.hw(); ++i)
          frame[static_cast<size_t>(i)] = pred.at(i, e * F + j);
        write_pgm(dir + "/frame_" + std::to_string(j) + ".pgm", mcfg.H,
                  mcfg.W, frame.data());
      }
    }
  }
  return r;
}

LossParts eval_loss(const ParamMap& params, const ModelConfig& mcfg,
                    const Batch& batch, const NoiseSchedule& sched,
                    const ModalityMask& mask, uint64_t seed, int64_t step) {
  Tape tape;
  Bank bank = tracked_bank(tape, params);
  Lambdas lam;
  return total_loss_graph(bank, mcfg, batch, sched, mask, lam, false, seed,
                          step);
}

void write_pgm(const std::string& path, int H, int W, const double* data) {
  if (H <= 0 || W <= 0) throw std::invalid_argument("write_pgm: bad size");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_pgm: cannot write " + path);
  os << "P5\n" << W << " " << H << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(W));
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      double v = data[static_cast<size_t>(i) * W + j];
      v = std::min(1.0, std::max(0.0, v));
      row[static_cast<size_t>(j)] =
          static_cast<unsigned char>(std::lround(v * 255.0));
    }
    os.write(reinterpret_cast<const char*>(row.data()), W);
  }
  if (!os) throw std::runtime_error("write_pgm: short write to " + path);
}

std::string metrics_csv_header(int F) {
  std::string h = "condition,seed,mse,psnr";
  for (int j = 0; j < F; ++j) h += ",frame_mse_" + std::to_string(j);
  return h;
}

std::string metrics_csv_row(const std::string& condition, uint64_t seed,
                            const EvalResult& r) {
  std::string row = condition + "," + std::to_string(seed) + "," +
                    fmt(r.mse) + "," + fmt(r.psnr);
  for (double v : r.frame_mse) row += "," + fmt(v);
  return row;
}

}  // namespace msim
