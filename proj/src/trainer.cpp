#include "dcm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "dcm/errors.hpp"
#include "dcm/image_io.hpp"
#include "dcm/weight_archive.hpp"

namespace dcm::train {

namespace F = torch::nn::functional;

void set_deterministic(bool on, uint64_t seed) {
  at::globalContext().setDeterministicAlgorithms(on, /*warn_only=*/false);
  torch::manual_seed(seed);
}

double learning_rate(const TrainConfig& config, int64_t step) {
  if (config.lr_decay_start < 0 || step < config.lr_decay_start || config.lr_decay_start >= config.max_steps) {
    return config.lr;
  }
  const double span = static_cast<double>(config.max_steps - config.lr_decay_start);
  return config.lr * std::max(0.0, 1.0 - static_cast<double>(step - config.lr_decay_start) / span);
}

namespace {

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

}  // namespace

std::vector<torch::Tensor> TrainState::generator_parameters() const {
  auto p = g_dehaze->parameters();
  auto q = g_rehaze->parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

std::vector<torch::Tensor> TrainState::discriminator_parameters() const {
  auto p = dis_g->parameters();
  auto q = dis_h->parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

namespace {

std::unique_ptr<torch::optim::Adam> make_adam(const std::vector<torch::Tensor>& params, const TrainConfig& c) {
  return std::make_unique<torch::optim::Adam>(
      params, torch::optim::AdamOptions(c.lr).betas({c.adam_beta1, c.adam_beta2}));
}

}  // namespace

TrainState initial_state(const TrainConfig& config) {
  config.validate();
  torch::manual_seed(config.seed);
  TrainState s;
  s.config = config;
  s.g_dehaze = nn::Generator(config.generator_config());
  s.g_rehaze = nn::Generator(config.generator_config());
  s.dis_g = nn::Discriminator(config.discriminator_config());
  s.dis_h = nn::Discriminator(config.discriminator_config());
  for (torch::nn::Module* m : std::initializer_list<torch::nn::Module*>{s.g_dehaze.get(), s.g_rehaze.get(),
                                                                       s.dis_g.get(), s.dis_h.get()}) {
    nn::init_weights(*m);
  }
  s.opt_g = make_adam(s.generator_parameters(), config);
  s.opt_d = make_adam(s.discriminator_parameters(), config);
  return s;
}

std::map<std::string, torch::Tensor> snapshot(const TrainState& state) {
  std::map<std::string, torch::Tensor> out;
  auto add = [&](const std::string& prefix, const torch::nn::Module& m) {
    for (const auto& item : m.named_parameters(true)) out.emplace(prefix + "." + item.key(), item.value().detach().clone());
  };
  add("g_dehaze", *state.g_dehaze);
  add("g_rehaze", *state.g_rehaze);
  add("dis_g", *state.dis_g);
  add("dis_h", *state.dis_h);
  return out;
}

namespace {

/// Disables gradient tracking for a parameter set for the guard's lifetime.
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<torch::Tensor> params) : params_(std::move(params)) {
    for (auto& p : params_) p.requires_grad_(false);
  }
  ~FreezeGuard() {
    for (auto& p : params_) p.requires_grad_(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<torch::Tensor> params_;
};

double finite_value(const torch::Tensor& t, const char* component) {
  const double v = t.item<double>();
  if (!std::isfinite(v)) throw NumericError(component, std::string("non-finite loss component '") + component + "'");
  return v;
}

}  // namespace

GeneratorObjective generator_objective(TrainState& state, const data::Batch& batch) {
  const auto& hazy = batch.hazy;
  const auto& clear = batch.clean;
  const auto& cfg = state.config;

  auto dehazed = state.g_dehaze->forward(hazy);     // g_hat
  auto hazy_rec = state.g_rehaze->forward(dehazed);  // H_hat
  auto rehazed = state.g_rehaze->forward(clear);     // h_hat
  auto clear_rec = state.g_dehaze->forward(rehazed); // G_hat

  auto cyc = loss::cycle_loss(clear, clear_rec, hazy, hazy_rec);
  auto adv = loss::adv_loss_generator(state.dis_g->forward(dehazed)) +
             loss::adv_loss_generator(state.dis_h->forward(rehazed));
  torch::Tensor contour = torch::zeros({}, hazy.options());
  if (cfg.toggles.bca) {
    if (cfg.contour_mode == loss::ContourMode::Literal) {
      contour = loss::contour_loss(dehazed);
    } else {
      contour = loss::contour_loss(clear_rec, loss::ContourMode::Matched, clear) +
                loss::contour_loss(hazy_rec, loss::ContourMode::Matched, hazy);
    }
  }

  GeneratorObjective obj;
  obj.breakdown.cyc = finite_value(cyc, "cyc");
  obj.breakdown.adv_g = finite_value(adv, "adv_g");
  obj.breakdown.contour = finite_value(contour, "contour");
  obj.total = cfg.weights.cyc * cyc + cfg.weights.adv * adv + cfg.weights.contour * contour;
  obj.breakdown.total = loss::total_loss(obj.breakdown, cfg.weights);
  obj.dehazed = dehazed;
  obj.rehazed = rehazed;
  return obj;
}

loss::LossBreakdown train_step(TrainState& state, const data::Batch& batch, const StepOptions& options) {
  const double lr = learning_rate(state.config, state.step);
  set_lr(*state.opt_g, lr);
  set_lr(*state.opt_d, lr);
  GeneratorObjective obj;
  {
    FreezeGuard frozen(state.discriminator_parameters());
    obj = generator_objective(state, batch);
    if (options.update_generators) {
      state.opt_g->zero_grad();
      obj.total.backward();
      state.opt_g->step();
    }
  }

  auto fake_clear = obj.dehazed.detach();
  auto fake_hazy = obj.rehazed.detach();
  auto d_loss = loss::adv_loss_discriminator(state.dis_g->forward(batch.clean), state.dis_g->forward(fake_clear)) +
                loss::adv_loss_discriminator(state.dis_h->forward(batch.hazy), state.dis_h->forward(fake_hazy));
  obj.breakdown.adv_d = finite_value(d_loss, "adv_d");
  if (options.update_discriminators) {
    state.opt_d->zero_grad();
    d_loss.backward();
    state.opt_d->step();
  }

  state.step += 1;
  if (!state.ema_initialized) {
    state.ema_total = obj.breakdown.total;
    state.ema_initialized = true;
  } else {
    state.ema_total = 0.98 * state.ema_total + 0.02 * obj.breakdown.total;
  }
  return obj.breakdown;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointKind = "dcm-checkpoint";

std::string save_optimizer(const torch::optim::Adam& opt) {
  torch::serialize::OutputArchive ar;
  opt.save(ar);
  std::ostringstream os;
  ar.save_to(os);
  return os.str();
}

void load_optimizer(torch::optim::Adam& opt, const std::string& bytes) {
  torch::serialize::InputArchive ar;
  std::istringstream is(bytes);
  try {
    ar.load_from(is);
    opt.load(ar);
  } catch (const c10::Error& e) {
    throw IntegrityError(std::string("optimizer state is unreadable: ") + e.what_without_backtrace());
  }
}

nlohmann::json toggles_json(const Toggles& t) {
  return {{"ddscm", t.ddscm}, {"dfre", t.dfre}, {"ffm", t.ffm}, {"bca", t.bca}};
}

archive::TensorArchive read_checkpoint_archive(const fs::path& path) {
  auto ar = archive::read(path);
  if (ar.manifest.value("kind", "") != kCheckpointKind) {
    throw IncompatibleError("'" + path.string() + "' is not a training checkpoint");
  }
  const int version = ar.manifest.value("checkpoint_version", -1);
  if (version != kCheckpointVersion) {
    throw IncompatibleError("checkpoint version " + std::to_string(version) + " is incompatible (expected " +
                            std::to_string(kCheckpointVersion) + ")");
  }
  return ar;
}

void require_compatible(const nlohmann::json& manifest, const TrainConfig& expected) {
  const auto& recorded = manifest.at("toggles");
  const auto wanted = toggles_json(expected.toggles);
  for (const auto& key : {"ddscm", "dfre", "ffm", "bca"}) {
    if (recorded.at(key) != wanted.at(key)) {
      throw IncompatibleError(std::string("checkpoint toggle '") + key + "' is " + recorded.at(key).dump() +
                              " but the run expects " + wanted.at(key).dump());
    }
  }
  const auto cfg = manifest.at("config");
  for (const auto& key : {"gen_channels", "res_stages", "rdb_growth", "rdb_layers", "gate_activation", "global_residual",
                          "disc_channels"}) {
    if (cfg.at(key) != to_json(expected).at(key)) {
      throw IncompatibleError(std::string("checkpoint architecture field '") + key + "' differs from the run");
    }
  }
}

TrainState state_from_archive(const archive::TensorArchive& ar) {
  TrainConfig config;
  try {
    config = config_from_json(ar.manifest.at("config"));
  } catch (const ConfigError& e) {
    throw IncompatibleError(std::string("checkpoint configuration is not loadable: ") + e.what());
  }
  if (ar.manifest.at("toggles") != toggles_json(config.toggles)) {
    throw IntegrityError("checkpoint toggle manifest disagrees with its recorded configuration");
  }
  TrainState s = initial_state(config);
  archive::load_module(ar, "g_dehaze", *s.g_dehaze);
  archive::load_module(ar, "g_rehaze", *s.g_rehaze);
  archive::load_module(ar, "dis_g", *s.dis_g);
  archive::load_module(ar, "dis_h", *s.dis_h);
  load_optimizer(*s.opt_g, ar.blobs.at("opt_g"));
  load_optimizer(*s.opt_d, ar.blobs.at("opt_d"));
  s.step = ar.manifest.at("step").get<int64_t>();
  s.ema_total = ar.manifest.at("ema_total").get<double>();
  s.ema_initialized = ar.manifest.at("ema_initialized").get<bool>();
  return s;
}

}  // namespace

void checkpoint_save(const TrainState& state, const fs::path& path) {
  archive::TensorArchive ar;
  ar.manifest = {{"kind", kCheckpointKind},
                 {"checkpoint_version", kCheckpointVersion},
                 {"config", to_json(state.config)},
                 {"toggles", toggles_json(state.config.toggles)},
                 {"generator", state.config.generator_config()},
                 {"step", state.step},
                 {"ema_total", state.ema_total},
                 {"ema_initialized", state.ema_initialized},
                 {"sampler", {{"seed", state.config.seed}, {"next_step", state.step}}}};
  archive::add_module(ar, "g_dehaze", *state.g_dehaze);
  archive::add_module(ar, "g_rehaze", *state.g_rehaze);
  archive::add_module(ar, "dis_g", *state.dis_g);
  archive::add_module(ar, "dis_h", *state.dis_h);
  ar.blobs["opt_g"] = save_optimizer(*state.opt_g);
  ar.blobs["opt_d"] = save_optimizer(*state.opt_d);
  archive::write(path, ar);
}

TrainState checkpoint_load(const fs::path& path) { return state_from_archive(read_checkpoint_archive(path)); }

TrainState checkpoint_load(const fs::path& path, const TrainConfig& expected) {
  auto ar = read_checkpoint_archive(path);
  require_compatible(ar.manifest, expected);
  return state_from_archive(ar);
}

fs::path checkpoint_path(const fs::path& out_dir, int64_t step) {
  char name[32];
  std::snprintf(name, sizeof(name), "step_%06lld.ckpt", static_cast<long long>(step));
  return out_dir / "checkpoints" / name;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

void rewrite_log_prefix(const fs::path& log_path, int64_t keep_through_step) {
  std::vector<std::string> kept;
  std::ifstream in(log_path);
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    auto rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded()) continue;
    if (rec.value("step", int64_t{0}) <= keep_through_step) kept.push_back(line);
  }
  std::string text;
  for (const auto& l : kept) text += l + "\n";
  io::write_file_atomic(log_path, text);
}

}  // namespace

TrainState train(const TrainConfig& config, const data::DatasetManifest& manifest, const TrainOptions& options) {
  config.validate();
  if (config.out.empty()) throw ConfigError("out", "out: a run directory is required");
  const fs::path out_dir = config.out;
  std::error_code ec;
  fs::create_directories(out_dir / "checkpoints", ec);
  if (ec) throw IoError("cannot create run directory '" + out_dir.string() + "': " + ec.message());

  set_deterministic(config.deterministic, config.seed);
  TrainState state;
  if (options.resume_from) {
    state = checkpoint_load(*options.resume_from, config);
    state.config = config;
  } else {
    state = initial_state(config);
  }

  const data::UnpairedSampler sampler(manifest);
  const auto sample_opts = config.sample_options();
  const fs::path log_path = out_dir / "loss_log.jsonl";
  if (options.resume_from) {
    rewrite_log_prefix(log_path, state.step);
  } else {
    io::write_file_atomic(log_path, "");
  }
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot open loss log '" + log_path.string() + "'");

  const auto start = std::chrono::steady_clock::now();
  int64_t last_saved = -1;
  while (state.step < config.max_steps) {
    const auto batch = sampler.sample(sample_opts, config.seed, static_cast<uint64_t>(state.step));
    loss::LossBreakdown b;
    try {
      b = train_step(state, batch);
    } catch (const NumericError& e) {
      throw TrainingAborted("training aborted at step " + std::to_string(state.step + 1) + ": loss component '" +
                            e.component() + "' is not finite");
    }
    if (state.step % config.log_interval == 0) {
      nlohmann::json rec = b;
      rec["step"] = state.step;
      rec["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log << rec.dump() << '\n';
      log.flush();
      if (!log) throw IoError("write to loss log '" + log_path.string() + "' failed");
    }
    if (!options.quiet && state.step % 100 == 0) {
      std::cerr << "step " << state.step << " total " << b.total << " (ema " << state.ema_total << ")\n";
    }
    if (state.step % config.checkpoint_interval == 0) {
      checkpoint_save(state, checkpoint_path(out_dir, state.step));
      last_saved = state.step;
    }
  }
  if (last_saved != state.step) checkpoint_save(state, checkpoint_path(out_dir, state.step));
  return state;
}

Image dehaze_image(nn::Generator& generator, const Image& image) {
  torch::NoGradGuard no_grad;
  const int64_t h = image.height();
  const int64_t w = image.width();
  auto x = image.tensor().unsqueeze(0).to(torch::kFloat32);
  const int64_t ph = (4 - h % 4) % 4;
  const int64_t pw = (4 - w % 4) % 4;
  if (ph || pw) x = F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
  auto y = generator->forward(x).narrow(2, 0, h).narrow(3, 0, w);
  return Image::from_tensor(y.squeeze(0));
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

std::vector<Toggles> table2_rows() {
  std::vector<Toggles> rows;
  for (const char* p : {"0000", "1000", "0100", "0101", "0110", "1011", "1111"}) rows.push_back(Toggles::from_pattern(p));
  return rows;
}

std::vector<Toggles> parse_rows(std::string_view spec, std::vector<std::string>* warnings) {
  std::vector<Toggles> candidates;
  std::string token;
  std::istringstream in{std::string(spec)};
  while (std::getline(in, token, ',')) {
    if (token.empty()) continue;
    if (token == "table2") {
      auto t2 = table2_rows();
      candidates.insert(candidates.end(), t2.begin(), t2.end());
    } else {
      candidates.push_back(Toggles::from_pattern(token));
    }
  }
  if (candidates.empty()) throw ParameterError("no ablation rows requested");
  std::vector<Toggles> rows;
  std::set<std::string> seen;
  for (const auto& t : candidates) {
    if (seen.insert(t.pattern()).second) {
      rows.push_back(t);
    } else if (warnings) {
      warnings->push_back("duplicate ablation row " + t.pattern() + " ignored");
    }
  }
  return rows;
}

AblationTable run_ablation(const TrainConfig& base, const data::DatasetManifest& train_set,
                           const data::DatasetManifest& eval_set, const std::vector<Toggles>& rows,
                           const fs::path& out_dir) {
  AblationTable table;
  for (const auto& toggles : rows) {
    AblationRow row;
    row.toggles = toggles;
    row.scores.id = toggles.pattern();
    try {
      TrainConfig cfg = base;
      cfg.toggles = toggles;
      cfg.out = (out_dir / ("row_" + toggles.pattern())).string();
      auto state = train(cfg, train_set);
      const fs::path pred_dir = fs::path(cfg.out) / "pred";
      double s_psnr = 0, s_ssim = 0, s_ciede = 0;
      size_t n = 0;
      for (const auto& e : eval_set.entries) {
        if (!e.clean) continue;
        const auto pred_path = pred_dir / (e.id + ".png");
        io::write_image(pred_path, dehaze_image(state.g_dehaze, io::read_image(eval_set.resolve(e.hazy))));
        const Image pred = io::read_image(pred_path);
        const Image gt = io::read_image(eval_set.resolve(*e.clean));
        s_psnr += metrics::psnr(pred, gt);
        s_ssim += metrics::ssim(pred, gt);
        s_ciede += metrics::ciede2000(pred, gt);
        ++n;
      }
      if (n == 0) throw DatasetError("evaluation set has no paired entries");
      row.scores.psnr_db = s_psnr / static_cast<double>(n);
      row.scores.ssim = s_ssim / static_cast<double>(n);
      row.scores.ciede2000 = s_ciede / static_cast<double>(n);
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string to_csv(const AblationTable& table) {
  std::ostringstream os;
  os << "DDSCM,DFRE,ATT,BCA,PSNR,SSIM,CIEDE,status\n";
  for (const auto& r : table.rows) {
    const auto p = r.toggles.pattern();
    os << p[0] << ',' << p[1] << ',' << p[2] << ',' << p[3] << ',';
    if (r.ok) {
      os << metrics::format_value(r.scores.psnr_db) << ',' << metrics::format_value(r.scores.ssim) << ','
         << metrics::format_value(r.scores.ciede2000) << ",ok\n";
    } else {
      os << ",,,failed\n";
    }
  }
  return os.str();
}

nlohmann::json to_json(const AblationTable& table) {
  auto rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    nlohmann::json j{{"DDSCM", r.toggles.ddscm}, {"DFRE", r.toggles.dfre}, {"ATT", r.toggles.ffm},
                     {"BCA", r.toggles.bca}, {"status", r.ok ? "ok" : "failed"}};
    if (r.ok) {
      j["PSNR"] = r.scores.psnr_db;
      j["SSIM"] = r.scores.ssim;
      j["CIEDE"] = r.scores.ciede2000;
    } else {
      j["error"] = r.error;
    }
    rows.push_back(std::move(j));
  }
  return {{"rows", rows}};
}

}  // namespace dcm::train
