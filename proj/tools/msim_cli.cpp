#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msim/checkpoint.hpp"
#include "msim/config.hpp"
#include "msim/dataset.hpp"
#include "msim/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct ConfigFlags {
  std::string path;
  std::vector<std::string> overrides;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& cf) {
  cmd->add_option("--config", cf.path, "JSON run configuration");
  cmd->add_option("--set", cf.overrides,
                  "dotted-key override, e.g. train.steps=500 (repeatable)");
}

// Resolves the effective configuration: file (or the config.resolved next
// to `anchor_file`, when present), then overrides in order.
msim::RunConfig resolve(const ConfigFlags& cf, const std::string& anchor_file) {
  std::string path = cf.path;
  if (path.empty() && !anchor_file.empty()) {
    fs::path sibling = fs::path(anchor_file).parent_path() / "config.resolved";
    if (fs::exists(sibling)) path = sibling.string();
  }
  msim::RunConfig rc = msim::load_run_config(path);
  for (const std::string& a : cf.overrides) msim::apply_override(rc, a);
  return rc;
}

void echo_resolved(const msim::RunConfig& rc, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cli: cannot write " + path);
  os << msim::resolved_config(rc);
}

void write_metrics(const std::string& path, int F, const std::string& row) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cli: cannot write " + path);
  os << msim::metrics_csv_header(F) << "\n" << row << "\n";
}

int run_gen_data(const ConfigFlags& cf, uint64_t seed,
                 const std::string& out) {
  msim::RunConfig rc = resolve(cf, "");
  msim::Dataset ds = msim::generate_dataset(rc.world, seed);
  fs::path parent = fs::path(out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  msim::save_dataset(out, ds);
  echo_resolved(rc, out + ".config.resolved");
  std::cout << "dataset " << out << " episodes=" << ds.episodes.size()
            << " train=" << ds.train_ids.size()
            << " test=" << ds.test_ids.size() << "\n";
  return 0;
}

int run_train(const ConfigFlags& cf, const std::string& data,
              bool seed_given, uint64_t seed, const std::string& out) {
  msim::RunConfig rc = resolve(cf, "");
  rc.train.dataset_path = data;
  rc.train.out_dir = out;
  if (seed_given) rc.train.seed = seed;
  rc.train.validate();
  fs::create_directories(out);
  echo_resolved(rc, out + "/config.resolved");
  msim::TrainResult res = msim::train(rc.train);
  std::cout << "trained steps=" << rc.train.steps
            << " new_steps=" << res.steps_run
            << " final_total=" << res.final_total << " ckpt=" << res.ckpt_path
            << " ema=" << res.ema_path << "\n";
  return 0;
}

int run_simulate(const ConfigFlags& cf, const std::string& ckpt,
                 const std::string& data, int episode, uint64_t seed,
                 const std::string& out) {
  msim::RunConfig rc = resolve(cf, ckpt);
  msim::Dataset ds = msim::load_dataset(data);
  if (episode < 0 || static_cast<size_t>(episode) >= ds.test_ids.size())
    throw std::invalid_argument(
        "simulate: episode index out of range (test split has " +
        std::to_string(ds.test_ids.size()) + " episodes)");
  int id = ds.test_ids[static_cast<size_t>(episode)];
  msim::ParamMap params = msim::load_checkpoint(ckpt);
  msim::ModelConfig mcfg = msim::model_config_for(ds, rc.train);
  msim::NoiseSchedule sched = msim::make_schedule(
      rc.train.diffusion_steps, rc.train.beta_start, rc.train.beta_end);
  fs::create_directories(out);
  echo_resolved(rc, out + "/config.resolved");
  msim::EvalRequest req;
  req.mask = msim::mask_dropping(rc.eval.drop);
  req.seed = seed;
  req.episode_ids = {id};
  req.dump_dir = out;
  msim::EvalResult r = msim::evaluate(params, mcfg, ds, sched, req);
  std::string row =
      msim::metrics_csv_row("episode_" + std::to_string(id), seed, r);
  write_metrics(out + "/metrics.csv", mcfg.horizon, row);
  std::cout << msim::metrics_csv_header(mcfg.horizon) << "\n" << row << "\n";
  return 0;
}

int run_eval(const ConfigFlags& cf, const std::string& ckpt,
             const std::string& data, const std::string& mask_csv,
             const std::string& out) {
  msim::RunConfig rc = resolve(cf, ckpt);
  msim::Dataset ds = msim::load_dataset(data);
  msim::ParamMap params = msim::load_checkpoint(ckpt);
  msim::ModelConfig mcfg = msim::model_config_for(ds, rc.train);
  msim::NoiseSchedule sched = msim::make_schedule(
      rc.train.diffusion_steps, rc.train.beta_start, rc.train.beta_end);
  fs::create_directories(out);
  echo_resolved(rc, out + "/config.resolved");
  msim::EvalRequest req;
  req.mask = msim::mask_dropping(mask_csv);
  req.seed = rc.eval.seed;
  msim::EvalResult r = msim::evaluate(params, mcfg, ds, sched, req);
  std::string row =
      msim::metrics_csv_row(msim::mask_label(req.mask), rc.train.seed, r);
  write_metrics(out + "/metrics.csv", mcfg.horizon, row);
  std::cout << msim::metrics_csv_header(mcfg.horizon) << "\n" << row << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"action-conditioned multisensory video simulator"};
  app.require_subcommand(1);

  ConfigFlags gen_cf;
  uint64_t gen_seed = 0;
  std::string gen_out;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_config_flags(gen, gen_cf);
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--out", gen_out, "output dataset file")->required();

  ConfigFlags tr_cf;
  std::string tr_data, tr_out;
  uint64_t tr_seed = 0;
  CLI::App* tr = app.add_subcommand("train", "train the simulator");
  add_config_flags(tr, tr_cf);
  tr->add_option("--data", tr_data, "dataset file")->required();
  CLI::Option* tr_seed_opt = tr->add_option("--seed", tr_seed, "training seed");
  tr->add_option("--out", tr_out, "run directory")->required();

  ConfigFlags sim_cf;
  std::string sim_ckpt, sim_data, sim_out;
  int sim_episode = 0;
  uint64_t sim_seed = 0;
  CLI::App* sim = app.add_subcommand("simulate", "sample one test episode");
  add_config_flags(sim, sim_cf);
  sim->add_option("--ckpt", sim_ckpt, "checkpoint file")->required();
  sim->add_option("--data", sim_data, "dataset file")->required();
  sim->add_option("--episode", sim_episode, "test-split episode index")
      ->required();
  sim->add_option("--seed", sim_seed, "sampling seed");
  sim->add_option("--out", sim_out, "output directory")->required();

  ConfigFlags ev_cf;
  std::string ev_ckpt, ev_data, ev_mask, ev_out;
  CLI::App* ev = app.add_subcommand("eval", "score a checkpoint on the test split");
  add_config_flags(ev, ev_cf);
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset file")->required();
  ev->add_option("--mask", ev_mask, "modalities dropped at test time");
  ev->add_option("--out", ev_out, "output directory")->required();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_gen_data(gen_cf, gen_seed, gen_out);
    if (tr->parsed())
      return run_train(tr_cf, tr_data, tr_seed_opt->count() > 0, tr_seed,
                       tr_out);
    if (sim->parsed())
      return run_simulate(sim_cf, sim_ckpt, sim_data, sim_episode, sim_seed,
                          sim_out);
    if (ev->parsed()) return run_eval(ev_cf, ev_ckpt, ev_data, ev_mask, ev_out);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
