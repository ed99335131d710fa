#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msim/dataset.hpp"
#include "msim/diffusion.hpp"
#include "msim/model.hpp"
#include "msim/params.hpp"

namespace msim {

// Everything a training run depends on. Two runs with equal configs and
// equal dataset bytes produce byte-identical artifacts.
struct TrainConfig {
  std::string dataset_path;
  std::string out_dir;
  uint64_t seed = 0;
  int64_t steps = 20000;
  int batch = 16;
  Lambdas lambdas;
  // Width/depth template; frame size, episode layout, history, fusion and
  // interaction are overwritten from the dataset and the fields below.
  ModelConfig model;
  std::string fusion = "softmax";
  std::string interaction = "hyperplane";
  ModalityMask train_mask = kAllPresent;
  int history = 4;  // context depth fed to the denoiser; 1 or 4
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  double ema_decay = 0.995;
  int64_t ema_every = 10;
  int64_t save_every = 1000;
  int diffusion_steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  // throws std::invalid_argument naming the offending field
  void validate() const;
};

// Model dimensions implied by the dataset plus the run's choices.
ModelConfig model_config_for(const Dataset& ds, const TrainConfig& cfg);

struct TrainResult {
  std::string ckpt_path;      // raw parameters (f32 checkpoint)
  std::string ema_path;       // EMA parameters (f32 checkpoint)
  std::string loss_csv_path;  // per-step loss components
  int64_t steps_run = 0;      // optimizer steps executed by this call
  double final_total = 0.0;   // total loss at the last step
};

// Runs (or resumes) a training run in cfg.out_dir. Artifacts:
//   loss.csv      header step,total,vdm,ssl,norm,frame; exactly cfg.steps rows
//   ckpt.swck     raw parameters
//   ckpt_ema.swck EMA parameters (what evaluation loads)
//   state.bin     full-precision optimizer state for exact resume
// Resuming with a different config or dataset is an error.
TrainResult train(const TrainConfig& cfg);

// Mean squared error over two equal-shape frame blocks in [0,1].
double mse(const Array& pred, const Array& gt);
// 10*log10(1/mse), capped at 100 dB once mse drops below 1e-10.
double psnr_db(double mse_value);
// Per-future-frame-index MSE, averaged over episodes and pixels.
// pred/gt are [hw x B*F] in episode-major column order.
std::vector<double> drift_curve(const Array& pred, const Array& gt, int B,
                                int F);

struct EvalRequest {
  ModalityMask mask = kAllPresent;
  uint64_t seed = 0;
  std::vector<int> episode_ids;  // empty: every test episode
  std::string dump_dir;          // non-empty: write PGMs per episode
};

struct EvalResult {
  double mse = 0.0;
  double psnr = 0.0;
  std::vector<double> frame_mse;  // length = horizon
  int episodes = 0;
};

// Samples future frames for the requested episodes and scores them against
// the stored ground truth. Read-only: repeated calls give identical results.
EvalResult evaluate(const ParamMap& params, const ModelConfig& mcfg,
                    const Dataset& ds, const NoiseSchedule& sched,
                    const EvalRequest& req);

// Loss parts on a fixed batch without dropout or parameter updates; the
// mask argument follows the same semantics as TrainConfig.train_mask.
LossParts eval_loss(const ParamMap& params, const ModelConfig& mcfg,
                    const Batch& batch, const NoiseSchedule& sched,
                    const ModalityMask& mask, uint64_t seed, int64_t step);

// 8-bit binary PGM (P5, maxval 255); values are clamped to [0,1] first.
void write_pgm(const std::string& path, int H, int W, const double* data);

std::string metrics_csv_header(int F);
std::string metrics_csv_row(const std::string& condition, uint64_t seed,
                            const EvalResult& r);

}  // namespace msim
