#include "dcm/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dcm/dataset.hpp"
#include "dcm/errors.hpp"
#include "dcm/image_io.hpp"
#include "dcm/metrics.hpp"
#include "dcm/trainer.hpp"

namespace dcm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::optional<uint64_t> seed;
  bool deterministic = false;
  std::string out;
};

bool deterministic_requested(const Globals& g) {
  if (g.deterministic) return true;
  const char* env = std::getenv("DCM_DETERMINISTIC");
  return env && std::string(env) == "1";
}

void write_snapshot(const fs::path& dir, const json& doc) {
  io::write_file_atomic(dir / kResolvedConfigName, doc.dump(2) + "\n");
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw ConfigError("out", "--out is required");
  return g.out;
}

// Dataset root with manifest.json, or a folder holding hazy/ and clean/ subfolders.
data::DatasetManifest open_dataset(const fs::path& root) {
  if (root.empty()) throw ConfigError("dataset", "no dataset given (--dataset or \"dataset\" in the config)");
  if (fs::exists(root / "manifest.json")) return data::load_manifest(root);
  if (fs::is_directory(root / "hazy") && fs::is_directory(root / "clean")) {
    return data::load_unpaired(root / "hazy", root / "clean");
  }
  throw DatasetError("'" + root.string() + "' has neither manifest.json nor hazy/ and clean/ folders");
}

train::TrainConfig resolve_train_config(const Globals& g, const std::string& preset, const std::string& dataset,
                                        std::optional<int64_t> max_steps) {
  train::TrainConfig cfg;
  if (preset == "desk") {
    cfg = train::desk_preset();
  } else if (preset != "paper") {
    throw ConfigError("preset", "unknown preset '" + preset + "' (expected desk or paper)");
  }
  if (!g.config.empty()) cfg = train::load_config(g.config, cfg);
  if (g.seed) cfg.seed = *g.seed;
  if (deterministic_requested(g)) cfg.deterministic = true;
  if (!g.out.empty()) cfg.out = g.out;
  if (!dataset.empty()) cfg.dataset = dataset;
  if (max_steps) cfg.max_steps = *max_steps;
  if (cfg.out.empty()) throw ConfigError("out", "no run directory (--out or \"out\" in the config)");
  cfg.validate();
  return cfg;
}

std::vector<fs::path> list_inputs(const fs::path& input) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      if (e.is_regular_file() && io::has_image_extension(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(input)) {
    files.push_back(input);
  } else {
    throw IoError("input '" + input.string() + "' does not exist");
  }
  if (files.empty()) throw IoError("no images found in '" + input.string() + "'");
  return files;
}

// --- subcommands -----------------------------------------------------------

int cmd_synth(const Globals& g, int64_t n, int64_t size, const std::string& split, double max_depth,
              std::ostream& out) {
  data::SynthOptions opts;
  opts.count = n;
  opts.size = size;
  opts.max_depth = max_depth;
  opts.seed = g.seed.value_or(0);
  opts.split = data::parse_split(split);
  opts.validate();
  const fs::path root = require_out(g);
  const auto manifest = data::build_synthetic_dataset(opts, root);
  write_snapshot(root, json{{"command", "synth"},
                            {"n", opts.count},
                            {"size", opts.size},
                            {"split", std::string(data::to_string(opts.split))},
                            {"max_depth", opts.max_depth},
                            {"beta_min", opts.beta_min},
                            {"beta_max", opts.beta_max},
                            {"airlight_min", opts.airlight_min},
                            {"airlight_max", opts.airlight_max},
                            {"seed", opts.seed}});
  out << "wrote " << manifest.entries.size() << " entries to " << root.string() << "\n";
  return kOk;
}

int cmd_train(const Globals& g, const std::string& preset, const std::string& dataset,
              std::optional<int64_t> max_steps, const std::string& resume, std::ostream& out, std::ostream& err) {
  const auto cfg = resolve_train_config(g, preset, dataset, max_steps);
  const auto manifest = open_dataset(cfg.dataset);
  for (const auto& w : manifest.warnings) err << "warning: " << w << "\n";
  fs::create_directories(cfg.out);
  write_snapshot(cfg.out, train::to_json(cfg));

  train::TrainOptions opts;
  opts.quiet = false;
  if (!resume.empty()) opts.resume_from = fs::path(resume);
  const fs::path log_path = fs::path(cfg.out) / "loss_log.jsonl";
  try {
    const auto state = train::train(cfg, manifest, opts);
    write_loss_plot(log_path, fs::path(cfg.out) / "loss_curve.png");
    out << "trained " << state.step << " steps; final checkpoint "
        << train::checkpoint_path(cfg.out, state.step).string() << "\n";
  } catch (const TrainingAborted&) {
    if (fs::exists(log_path)) write_loss_plot(log_path, fs::path(cfg.out) / "loss_curve.png");
    throw;
  }
  return kOk;
}

int cmd_dehaze(const Globals& g, const std::string& checkpoint, const std::string& input, std::ostream& out) {
  if (checkpoint.empty()) throw ConfigError("checkpoint", "--checkpoint is required");
  if (input.empty()) throw ConfigError("input", "--input is required");
  const fs::path out_dir = require_out(g);
  const bool det = deterministic_requested(g);
  train::set_deterministic(det, g.seed.value_or(0));
  auto state = train::checkpoint_load(checkpoint);
  state.g_dehaze->eval();
  const auto files = list_inputs(input);
  fs::create_directories(out_dir);
  write_snapshot(out_dir, json{{"command", "dehaze"},
                               {"checkpoint", fs::absolute(checkpoint).string()},
                               {"input", fs::absolute(input).string()},
                               {"deterministic", det},
                               {"step", state.step},
                               {"config", train::to_json(state.config)}});
  for (const auto& f : files) {
    io::write_image(out_dir / f.filename(), train::dehaze_image(state.g_dehaze, io::read_image(f)));
  }
  out << "dehazed " << files.size() << " image(s) into " << out_dir.string() << "\n";
  return kOk;
}

int cmd_eval(const Globals& g, const std::string& pred, const std::string& gt, std::ostream& out,
             std::ostream& err) {
  if (pred.empty() || gt.empty()) throw ConfigError("pred", "--pred and --gt are required");
  const fs::path out_dir = require_out(g);
  const auto report = metrics::evaluate_pairs(pred, gt);
  fs::create_directories(out_dir);
  write_snapshot(out_dir, json{{"command", "eval"},
                               {"pred", fs::absolute(pred).string()},
                               {"gt", fs::absolute(gt).string()}});
  metrics::write_report(report, out_dir / "metrics");
  for (const auto& e : report.errors) err << "unpaired: " << e.id << " (" << e.reason << ")\n";
  out << "aggregate n=" << report.per_image.size() << " psnr=" << metrics::format_value(report.aggregate.psnr_db)
      << " ssim=" << metrics::format_value(report.aggregate.ssim)
      << " ciede2000=" << metrics::format_value(report.aggregate.ciede2000) << "\n";
  return report.errors.empty() ? kOk : kPairing;
}

int cmd_ablate(const Globals& g, const std::string& preset, const std::string& dataset, const std::string& eval_set,
               const std::string& rows_spec, std::optional<int64_t> max_steps, std::ostream& out,
               std::ostream& err) {
  const auto cfg = resolve_train_config(g, preset, dataset, max_steps);
  std::vector<std::string> warnings;
  std::vector<train::Toggles> rows;
  try {
    rows = train::parse_rows(rows_spec, &warnings);
  } catch (const ParameterError& e) {
    throw ConfigError("rows", std::string("rows: ") + e.what());
  }
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  if (eval_set.empty()) throw ConfigError("eval-set", "--eval-set is required");
  const auto train_set = open_dataset(cfg.dataset);
  const auto eval_manifest = data::load_manifest(eval_set);

  const fs::path out_dir = cfg.out;
  fs::create_directories(out_dir);
  json snapshot = train::to_json(cfg);
  json patterns = json::array();
  for (const auto& r : rows) patterns.push_back(r.pattern());
  write_snapshot(out_dir, json{{"command", "ablate"},
                               {"config", snapshot},
                               {"rows", patterns},
                               {"eval_set", fs::absolute(eval_set).string()}});

  const auto table = train::run_ablation(cfg, train_set, eval_manifest, rows, out_dir);
  io::write_file_atomic(out_dir / "ablation.csv", train::to_csv(table));
  io::write_file_atomic(out_dir / "ablation.json", train::to_json(table).dump(2) + "\n");
  out << train::to_csv(table);
  bool any_failed = false;
  for (const auto& r : table.rows) {
    if (!r.ok) {
      any_failed = true;
      err << "row " << r.toggles.pattern() << " failed: " << r.error << "\n";
    }
  }
  return any_failed ? kAblationPartial : kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParameterError*>(&e) ||
      dynamic_cast<const ValidationError*>(&e)) {
    return kConfig;
  }
  if (dynamic_cast<const TrainingAborted*>(&e)) return kTrainingAborted;
  if (dynamic_cast<const IntegrityError*>(&e) || dynamic_cast<const IncompatibleError*>(&e)) return kCheckpoint;
  return kIo;
}

}  // namespace

void write_loss_plot(const fs::path& log_path, const fs::path& png_path) {
  std::ifstream in(log_path);
  if (!in) throw IoError("cannot read loss log '" + log_path.string() + "'");
  static const char* kKeys[] = {"total", "cyc", "adv_g", "adv_d", "contour"};
  static const cv::Scalar kColors[] = {{0, 0, 0}, {200, 80, 0}, {0, 140, 0}, {0, 0, 200}, {160, 0, 160}};
  std::vector<double> steps;
  std::vector<std::vector<double>> series(std::size(kKeys));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = json::parse(line, nullptr, false);
    if (rec.is_discarded()) continue;
    steps.push_back(rec.value("step", 0.0));
    for (size_t k = 0; k < std::size(kKeys); ++k) series[k].push_back(rec.value(kKeys[k], 0.0));
  }

  const int width = 900, height = 520, left = 70, right = 150, top = 30, bottom = 50;
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = width - left - right, ph = height - top - bottom;
  cv::rectangle(canvas, {left, top}, {left + pw, top + ph}, cv::Scalar(0, 0, 0), 1);
  if (!steps.empty()) {
    double lo = 0.0, hi = 1e-12;
    for (const auto& s : series) {
      for (double v : s) {
        if (std::isfinite(v)) hi = std::max(hi, v);
      }
    }
    const double s0 = steps.front();
    const double s1 = std::max(steps.back(), s0 + 1.0);
    auto to_px = [&](double step, double v) {
      const double fx = (step - s0) / (s1 - s0);
      const double fy = (std::clamp(v, lo, hi) - lo) / (hi - lo);
      return cv::Point(left + static_cast<int>(fx * pw), top + ph - static_cast<int>(fy * ph));
    };
    for (size_t k = 0; k < series.size(); ++k) {
      std::vector<cv::Point> pts;
      for (size_t i = 0; i < steps.size(); ++i) pts.push_back(to_px(steps[i], series[k][i]));
      if (pts.size() == 1) pts.push_back(pts.front());
      cv::polylines(canvas, pts, false, kColors[k], 1, cv::LINE_AA);
      const int ly = top + 20 + 22 * static_cast<int>(k);
      cv::line(canvas, {left + pw + 12, ly - 4}, {left + pw + 36, ly - 4}, kColors[k], 2);
      cv::putText(canvas, kKeys[k], {left + pw + 42, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kColors[k], 1, cv::LINE_AA);
    }
    auto label = [&](const std::string& text, cv::Point at) {
      cv::putText(canvas, text, at, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    };
    std::ostringstream hi_s;
    hi_s.precision(3);
    hi_s << hi;
    label(hi_s.str(), {5, top + 10});
    label("0", {left - 15, top + ph});
    label(std::to_string(static_cast<int64_t>(s0)), {left, top + ph + 18});
    label(std::to_string(static_cast<int64_t>(s1)), {left + pw - 40, top + ph + 18});
    label("step", {left + pw / 2 - 15, top + ph + 38});
  }
  std::vector<uchar> png;
  if (!cv::imencode(".png", canvas, png)) throw IoError("cannot encode loss plot");
  io::write_file_atomic(png_path, std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contour-aware cycle dehazing: synth, train, dehaze, eval, ablate", "dcm"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "JSON configuration file");
  app.add_option("--seed", g.seed, "random seed");
  app.add_flag("--deterministic", g.deterministic, "deterministic kernels (same as DCM_DETERMINISTIC=1)");
  app.add_option("--out", g.out, "output directory");

  int64_t n = 200, size = 64;
  std::string split = "train";
  double max_depth = data::SynthOptions{}.max_depth;
  auto* synth = app.add_subcommand("synth", "build a synthetic hazy/clean dataset");
  synth->add_option("--n", n, "number of scenes")->capture_default_str();
  synth->add_option("--size", size, "side length in pixels")->capture_default_str();
  synth->add_option("--split", split, "train or test")->capture_default_str();
  synth->add_option("--max-depth", max_depth, "largest depth value")->capture_default_str();

  std::string preset = "desk", dataset, resume;
  std::optional<int64_t> max_steps;
  auto* train_cmd = app.add_subcommand("train", "train the dehazing cycle");
  train_cmd->add_option("--preset", preset, "desk or paper")->capture_default_str();
  train_cmd->add_option("--dataset", dataset, "dataset root");
  train_cmd->add_option("--max-steps", max_steps, "override the step budget");
  train_cmd->add_option("--resume", resume, "checkpoint to continue from");

  std::string checkpoint, input;
  auto* dehaze = app.add_subcommand("dehaze", "dehaze an image or a folder of images");
  dehaze->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  dehaze->add_option("--input", input, "image file or folder")->required();

  std::string pred, gt;
  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("--pred", pred, "folder of predictions")->required();
  eval->add_option("--gt", gt, "folder of ground truth")->required();

  std::string eval_set, rows = "table2";
  auto* ablate = app.add_subcommand("ablate", "train and score one run per toggle pattern");
  ablate->add_option("--preset", preset, "desk or paper")->capture_default_str();
  ablate->add_option("--dataset", dataset, "training dataset root");
  ablate->add_option("--eval-set", eval_set, "paired evaluation dataset root")->required();
  ablate->add_option("--rows", rows, "table2 or comma-separated DDSCM/DFRE/ATT/BCA patterns")->capture_default_str();
  ablate->add_option("--max-steps", max_steps, "override the step budget per row");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfig;
  }

  try {
    if (*synth) return cmd_synth(g, n, size, split, max_depth, out);
    if (*train_cmd) return cmd_train(g, preset, dataset, max_steps, resume, out, err);
    if (*dehaze) return cmd_dehaze(g, checkpoint, input, out);
    if (*eval) return cmd_eval(g, pred, gt, out, err);
    if (*ablate) return cmd_ablate(g, preset, dataset, eval_set, rows, max_steps, out, err);
  } catch (const ConfigError& e) {
    err << "config error [" << e.key() << "]: " << e.what() << "\n";
    return kConfig;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kConfig;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace dcm::cli
