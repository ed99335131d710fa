#include "msim/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace msim {

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
  throw std::invalid_argument("config: " + key + " (" + why + ")");
}

int as_int(const std::string& key, const json& v) {
  if (!v.is_number_integer() && !v.is_number_unsigned())
    bad_key(key, "expected integer");
  return v.get<int>();
}

int64_t as_i64(const std::string& key, const json& v) {
  if (!v.is_number_integer() && !v.is_number_unsigned())
    bad_key(key, "expected integer");
  return v.get<int64_t>();
}

uint64_t as_u64(const std::string& key, const json& v) {
  if (!v.is_number_integer() && !v.is_number_unsigned())
    bad_key(key, "expected integer");
  if (v.is_number_integer() && v.get<int64_t>() < 0)
    bad_key(key, "expected non-negative integer");
  return v.get<uint64_t>();
}

double as_double(const std::string& key, const json& v) {
  if (!v.is_number()) bad_key(key, "expected number");
  return v.get<double>();
}

std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) bad_key(key, "expected string");
  return v.get<std::string>();
}

bool as_bool(const std::string& key, const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer() || v.is_number_unsigned())
    return v.get<int64_t>() != 0;
  bad_key(key, "expected boolean");
}

std::string drop_csv(const ModalityMask& mask) {
  std::string out;
  for (int m = 0; m < kNumModalities; ++m) {
    if (mask[static_cast<size_t>(m)]) continue;
    if (!out.empty()) out += ',';
    out += kModalities[static_cast<size_t>(m)].name;
  }
  return out;
}

void set_key(RunConfig& rc, const std::string& key, const json& v) {
  WorldConfig& w = rc.world;
  TrainConfig& t = rc.train;
  ModelConfig& m = rc.train.model;
  if (key == "world.kind") w.kind = as_string(key, v);
  else if (key == "world.episodes") w.episodes = as_int(key, v);
  else if (key == "world.T") w.T = as_int(key, v);
  else if (key == "world.H") w.H = as_int(key, v);
  else if (key == "world.W") w.W = as_int(key, v);
  else if (key == "world.context") w.context = as_int(key, v);
  else if (key == "world.train_frac") w.train_frac = as_double(key, v);
  else if (key == "world.mix_reach") w.mix_reach = as_double(key, v);
  else if (key == "world.mix_grip_carry") w.mix_grip_carry = as_double(key, v);
  else if (key == "world.mix_pass_over") w.mix_pass_over = as_double(key, v);
  else if (key == "world.mix_release") w.mix_release = as_double(key, v);
  else if (key == "world.weight_lo") w.weight_lo = as_double(key, v);
  else if (key == "world.weight_hi") w.weight_hi = as_double(key, v);
  else if (key == "model.d") m.d = as_int(key, v);
  else if (key == "model.expert_width") m.expert_width = as_int(key, v);
  else if (key == "model.codec_h0") m.codec_h0 = as_int(key, v);
  else if (key == "model.codec_h1") m.codec_h1 = as_int(key, v);
  else if (key == "model.step_embed") m.step_embed = as_int(key, v);
  else if (key == "model.frame_embed") m.frame_embed = as_int(key, v);
  else if (key == "model.ctx_embed") m.ctx_embed = as_int(key, v);
  else if (key == "model.dropout") m.dropout = as_double(key, v);
  else if (key == "model.context_actions") m.context_actions = as_bool(key, v);
  else if (key == "diffusion.steps") t.diffusion_steps = as_int(key, v);
  else if (key == "diffusion.beta_start") t.beta_start = as_double(key, v);
  else if (key == "diffusion.beta_end") t.beta_end = as_double(key, v);
  else if (key == "train.seed") t.seed = as_u64(key, v);
  else if (key == "train.steps") t.steps = as_i64(key, v);
  else if (key == "train.batch") t.batch = as_int(key, v);
  else if (key == "train.lambda_vdm") t.lambdas.vdm = as_double(key, v);
  else if (key == "train.lambda_ssl") t.lambdas.ssl = as_double(key, v);
  else if (key == "train.lambda_norm") t.lambdas.norm = as_double(key, v);
  else if (key == "train.lambda_frame") t.lambdas.frame = as_double(key, v);
  else if (key == "train.fusion") t.fusion = as_string(key, v);
  else if (key == "train.interaction") t.interaction = as_string(key, v);
  else if (key == "train.drop") t.train_mask = mask_dropping(as_string(key, v));
  else if (key == "train.history") t.history = as_int(key, v);
  else if (key == "train.lr") t.lr = as_double(key, v);
  else if (key == "train.beta1") t.beta1 = as_double(key, v);
  else if (key == "train.beta2") t.beta2 = as_double(key, v);
  else if (key == "train.adam_eps") t.adam_eps = as_double(key, v);
  else if (key == "train.ema_decay") t.ema_decay = as_double(key, v);
  else if (key == "train.ema_every") t.ema_every = as_i64(key, v);
  else if (key == "train.save_every") t.save_every = as_i64(key, v);
  else if (key == "eval.seed") rc.eval.seed = as_u64(key, v);
  else if (key == "eval.drop") rc.eval.drop = as_string(key, v);
  else if (key == "policy.mode") rc.policy.mode = as_string(key, v);
  else if (key == "policy.steps") rc.policy.steps = as_i64(key, v);
  else if (key == "policy.batch") rc.policy.batch = as_int(key, v);
  else if (key == "policy.lr") rc.policy.lr = as_double(key, v);
  else if (key == "policy.hidden") rc.policy.hidden = as_int(key, v);
  else if (key == "policy.sample_steps") rc.policy.sample_steps = as_int(key, v);
  else if (key == "policy.sim_weight") rc.policy.sim_weight = as_double(key, v);
  else if (key == "policy.seed") rc.policy.seed = as_u64(key, v);
  else bad_key(key, "unknown key");
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot read " + path);
  json root;
  try {
    root = json::parse(is);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: " + path + " is not valid JSON (" +
                                std::string(e.what()) + ")");
  }
  if (!root.is_object())
    throw std::invalid_argument("config: top level must be an object");
  for (const auto& [section, body] : root.items()) {
    if (!body.is_object())
      bad_key(section, "sections must be objects");
    for (const auto& [key, value] : body.items())
      set_key(rc, section + "." + key, value);
  }
  return rc;
}

void apply_override(RunConfig& rc, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("config: override must look like key=value (" +
                                assignment + ")");
  std::string key = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);
  json v = json::parse(raw, nullptr, false);
  if (v.is_discarded() || v.is_object() || v.is_array()) v = raw;
  set_key(rc, key, v);
}

std::string resolved_config(const RunConfig& rc) {
  json root;
  const WorldConfig& w = rc.world;
  root["world"] = {
      {"kind", w.kind},           {"episodes", w.episodes},
      {"T", w.T},                 {"H", w.H},
      {"W", w.W},                 {"context", w.context},
      {"train_frac", w.train_frac}, {"mix_reach", w.mix_reach},
      {"mix_grip_carry", w.mix_grip_carry},
      {"mix_pass_over", w.mix_pass_over},
      {"mix_release", w.mix_release}, {"weight_lo", w.weight_lo},
      {"weight_hi", w.weight_hi}};
  const ModelConfig& m = rc.train.model;
  root["model"] = {{"d", m.d},
                   {"expert_width", m.expert_width},
                   {"codec_h0", m.codec_h0},
                   {"codec_h1", m.codec_h1},
                   {"step_embed", m.step_embed},
                   {"frame_embed", m.frame_embed},
                   {"ctx_embed", m.ctx_embed},
                   {"dropout", m.dropout},
                   {"context_actions", m.context_actions}};
  const TrainConfig& t = rc.train;
  root["diffusion"] = {{"steps", t.diffusion_steps},
                       {"beta_start", t.beta_start},
                       {"beta_end", t.beta_end}};
  root["train"] = {{"seed", t.seed},
                   {"steps", t.steps},
                   {"batch", t.batch},
                   {"lambda_vdm", t.lambdas.vdm},
                   {"lambda_ssl", t.lambdas.ssl},
                   {"lambda_norm", t.lambdas.norm},
                   {"lambda_frame", t.lambdas.frame},
                   {"fusion", t.fusion},
                   {"interaction", t.interaction},
                   {"drop", drop_csv(t.train_mask)},
                   {"history", t.history},
                   {"lr", t.lr},
                   {"beta1", t.beta1},
                   {"beta2", t.beta2},
                   {"adam_eps", t.adam_eps},
                   {"ema_decay", t.ema_decay},
                   {"ema_every", t.ema_every},
                   {"save_every", t.save_every}};
  root["eval"] = {{"seed", rc.eval.seed}, {"drop", rc.eval.drop}};
  root["policy"] = {{"mode", rc.policy.mode},
                    {"steps", rc.policy.steps},
                    {"batch", rc.policy.batch},
                    {"lr", rc.policy.lr},
                    {"hidden", rc.policy.hidden},
                    {"sample_steps", rc.policy.sample_steps},
                    {"sim_weight", rc.policy.sim_weight},
                    {"seed", rc.policy.seed}};
  return root.dump(2) + "\n";
}

}  // namespace msim
