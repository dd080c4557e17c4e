#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "dcm/dataset.hpp"
#include "dcm/losses.hpp"
#include "dcm/metrics.hpp"
#include "dcm/networks.hpp"

namespace dcm::train {

namespace fs = std::filesystem;

/// Ablation switches, in the column order DDSCM / DFRE / ATT / BCA.
struct Toggles {
  bool ddscm = true;
  bool dfre = true;
  bool ffm = true;  ///< attention fusion with the contour branch ("ATT")
  bool bca = true;  ///< contour loss term

  bool operator==(const Toggles&) const = default;
  /// "1011"-style pattern in column order.
  std::string pattern() const;
  static Toggles from_pattern(std::string_view bits);
};

inline constexpr int kConfigSchemaVersion = 1;

/// Training configuration. Serialized as a flat JSON object; unknown keys are rejected.
struct TrainConfig {
  double lr = 1e-4;
  int64_t lr_decay_start = -1;  ///< from this step lr falls linearly to 0 at max_steps; negative keeps it constant
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int64_t batch_size = 2;
  int64_t crop = 256;
  int64_t max_steps = 2000;
  uint64_t seed = 0;
  loss::LossWeights weights;
  Toggles toggles;
  loss::ContourMode contour_mode = loss::ContourMode::Literal;
  int64_t checkpoint_interval = 500;
  int64_t log_interval = 1;
  bool horizontal_flip = true;
  bool deterministic = false;

  int64_t gen_channels = 64;
  int64_t res_stages = 6;
  int64_t rdb_growth = 32;
  int64_t rdb_layers = 4;
  bool gate_activation = true;
  bool global_residual = true;
  int64_t disc_channels = 64;

  std::string dataset;  ///< dataset root holding manifest.json
  std::string out;      ///< run directory

  void validate() const;
  nn::GeneratorConfig generator_config() const;
  nn::DiscriminatorConfig discriminator_config() const;
  data::SampleOptions sample_options() const;
};

/// Laptop-scale preset: 64-pixel crops, narrow networks, matched contour loss, 2000 steps.
TrainConfig desk_preset();

nlohmann::json to_json(const TrainConfig& config);
/// Starts from `base` and overrides every key present in `doc`. Throws ConfigError naming the
/// offending key for unknown keys, wrong types, or invalid values.
TrainConfig config_from_json(const nlohmann::json& doc, const TrainConfig& base = {});
TrainConfig load_config(const fs::path& path, const TrainConfig& base = {});

/// Puts torch into reproducible mode (deterministic kernels, fixed seed).
void set_deterministic(bool on, uint64_t seed);

/// Learning rate used for the update that takes the state from `step` to `step + 1`.
double learning_rate(const TrainConfig& config, int64_t step);

/// Everything a run needs to continue: networks, optimizer moments, counters.
struct TrainState {
  TrainConfig config;
  int64_t step = 0;
  nn::Generator g_dehaze{nullptr};  ///< hazy -> clear
  nn::Generator g_rehaze{nullptr};  ///< clear -> hazy
  nn::Discriminator dis_g{nullptr}; ///< judges clear images
  nn::Discriminator dis_h{nullptr}; ///< judges hazy images
  std::unique_ptr<torch::optim::Adam> opt_g;
  std::unique_ptr<torch::optim::Adam> opt_d;
  double ema_total = 0.0;
  bool ema_initialized = false;

  std::vector<torch::Tensor> generator_parameters() const;
  std::vector<torch::Tensor> discriminator_parameters() const;
};

/// Fresh state with N(0, 0.02) conv weights drawn from `config.seed`.
TrainState initial_state(const TrainConfig& config);

/// Named deep copies of every network parameter (for equality checks).
std::map<std::string, torch::Tensor> snapshot(const TrainState& state);

struct GeneratorObjective {
  torch::Tensor total;
  loss::LossBreakdown breakdown;  ///< adv_d left at zero
  torch::Tensor dehazed;          ///< g_hat = G_dehaze(H)
  torch::Tensor rehazed;          ///< h_hat = G_rehaze(G)
};

/// Forward cycles H -> g_hat -> H_hat and G -> h_hat -> G_hat and the weighted objective.
GeneratorObjective generator_objective(TrainState& state, const data::Batch& batch);

struct StepOptions {
  bool update_generators = true;
  bool update_discriminators = true;
};

/// One optimisation step: generators on the weighted objective, then both discriminators on
/// their least-squares objectives. Throws NumericError naming a non-finite component.
loss::LossBreakdown train_step(TrainState& state, const data::Batch& batch, const StepOptions& options = {});

inline constexpr int kCheckpointVersion = 1;

void checkpoint_save(const TrainState& state, const fs::path& path);
/// Rebuilds the state from the checkpoint's recorded configuration.
TrainState checkpoint_load(const fs::path& path);
/// Loads and requires the recorded architecture and toggles to equal `expected`'s.
TrainState checkpoint_load(const fs::path& path, const TrainConfig& expected);

struct TrainOptions {
  std::optional<fs::path> resume_from;
  bool quiet = true;
};

/// Runs up to config.max_steps. Writes `<out>/loss_log.jsonl`, checkpoints under
/// `<out>/checkpoints/` at the configured interval and a final one at the last step.
/// A non-finite loss raises TrainingAborted; checkpoints already written are kept.
TrainState train(const TrainConfig& config, const data::DatasetManifest& manifest, const TrainOptions& options = {});

fs::path checkpoint_path(const fs::path& out_dir, int64_t step);

/// Dehazes one image of any size (replicate-padded to a multiple of 4 internally).
Image dehaze_image(nn::Generator& generator, const Image& image);

/// Toggle patterns: "table2" (the seven ablation rows) or comma-separated 4-bit patterns.
/// Duplicates are dropped and reported through `warnings`.
std::vector<Toggles> parse_rows(std::string_view spec, std::vector<std::string>* warnings = nullptr);
std::vector<Toggles> table2_rows();

struct AblationRow {
  Toggles toggles;
  bool ok = false;
  std::string error;
  metrics::ImageScore scores;
};

struct AblationTable {
  std::vector<AblationRow> rows;
};

/// Trains one run per toggle pattern and scores G_dehaze on the paired evaluation set.
/// A failing run is recorded and the remaining rows still execute.
AblationTable run_ablation(const TrainConfig& base, const data::DatasetManifest& train_set,
                           const data::DatasetManifest& eval_set, const std::vector<Toggles>& rows,
                           const fs::path& out_dir);

std::string to_csv(const AblationTable& table);
nlohmann::json to_json(const AblationTable& table);

}  // namespace dcm::train
