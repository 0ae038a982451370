#include "commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>

#include "part/checkpoint.hpp"
#include "part/conv_equivalence.hpp"
#include "part/parallel.hpp"
#include "part/pnm.hpp"

namespace part::cli {

namespace fs = std::filesystem;

namespace {

enum SeedStream : std::uint64_t { init_stream = 11, discover_stream = 12, cam_stream = 13, equiv_stream = 14 };

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out_dir.string() + ": " + ec.message());
}

PartModel make_model(const RunConfig& cfg, const Split& split) {
  const Tensor& probe = split.train.empty() ? split.test.at(0).image : split.train.front().image;
  return PartModel(resolved_model(cfg), probe.extent(0), probe.extent(1), derive_seed(cfg.seed, init_stream));
}

/// Loads the checkpoint when present; otherwise the freshly initialized model is used.
bool maybe_load(PartModel& model, const RunConfig& cfg, std::ostream& err) {
  const fs::path path = cfg.checkpoint_path();
  if (!fs::exists(path)) {
    err << "note: no checkpoint at " << path.string() << ", using initial weights\n";
    return false;
  }
  model.load_state(load_checkpoint(path));
  return true;
}

const Sample& pick_sample(const Split& split, std::size_t index) {
  if (index >= split.test.size()) {
    throw ConfigError("sample", "key 'sample' is " + std::to_string(index) + " but the test split has " +
                                    std::to_string(split.test.size()) + " samples");
  }
  return split.test[index];
}

TrainConfig resolved_train(const RunConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = cfg.seed;
  t.threads = default_threads();
  return t;
}

}  // namespace

ModelConfig resolved_model(const RunConfig& cfg) {
  ModelConfig m = cfg.model;
  m.parts = m.relation ? cfg.parts.N : 0;
  m.classes = cfg.data.classes;
  return m;
}

Split load_split(const RunConfig& cfg) {
  if (cfg.data_dir.empty()) return generate_dataset(cfg.data);
  Split split = split_by_index(load_dataset(cfg.data_dir), cfg.data.train_fraction);
  for (const auto* part : {&split.train, &split.test}) {
    for (const auto& s : *part) {
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= cfg.data.classes) {
        throw ConfigError("data.classes", "dataset label " + std::to_string(s.label) +
                                              " exceeds data.classes = " + std::to_string(cfg.data.classes));
      }
    }
  }
  return split;
}

int run_train(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const Split split = load_split(cfg);
  PartModel model = make_model(cfg, split);
  if (model.has_part_branches()) cfg.parts.validate(model.config().channels);
  ensure_out_dir(cfg);

  std::ofstream metrics = open_output(cfg.out_dir / "metrics.csv");
  metrics << "epoch,loss,top1\n";
  Trainer trainer(model, resolved_train(cfg), cfg.parts);
  double last_top1 = 0.0;
  trainer.fit(split.train, split.test, [&](const EpochMetrics& m) {
    metrics << (m.epoch + 1) << ',' << format_double(m.loss) << ',' << format_double(m.top1) << '\n';
    metrics.flush();
    if (!metrics) throw IoError("failed writing metrics.csv");
    out << "epoch " << (m.epoch + 1) << " loss " << format_double(m.loss) << " top1 " << format_double(m.top1)
        << std::endl;
    last_top1 = m.top1;
  });

  try {
    save_checkpoint(cfg.checkpoint_path(), model.state());
  } catch (const CheckpointError& e) {
    throw IoError(e.what());
  }
  out << "top1=" << format_double(last_top1) << '\n';
  return exit_ok;
}

int run_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const fs::path path = cfg.checkpoint_path();
  if (!fs::exists(path)) {
    err << "error: checkpoint " << path.string() << " not found\n";
    return exit_missing_checkpoint;
  }
  const Split split = load_split(cfg);
  PartModel model = make_model(cfg, split);
  model.load_state(load_checkpoint(path));
  out << "top1=" << format_double(evaluate(model, split.test, default_threads())) << '\n';
  return exit_ok;
}

int run_discover(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Split split = load_split(cfg);
  PartModel model = make_model(cfg, split);
  maybe_load(model, cfg, err);
  const Sample& sample = pick_sample(split, cfg.sample);

  Tape tape;
  const ModelVars vars = bind(tape, model, false);
  const Features f = backbone_forward(model, vars, sample.image);
  const Tensor X = part_feature_map(f);
  cfg.parts.validate(X.extent(2));
  const PartSet parts = discover_parts(X, cfg.parts, derive_seed(cfg.seed, discover_stream));
  if (parts.used_fallback) err << "warning: IoU filter stalled, top-ranked fallback proposals used\n";
  if (parts.incomplete) err << "warning: fewer than " << cfg.parts.N << " non-degenerate channels\n";

  ensure_out_dir(cfg);
  std::ofstream csv = open_output(cfg.out_dir / "parts.csv");
  const std::string header = "part_index,source_channel,eta,row_lo,col_lo,row_hi,col_hi";
  csv << header << '\n';
  out << header << '\n';
  for (std::size_t i = 0; i < parts.parts.size(); ++i) {
    const auto& p = parts.parts[i];
    const std::string row = std::to_string(i) + ',' + std::to_string(p.source_channel) + ',' +
                            format_double(p.eta) + ',' + std::to_string(p.bbox.row_lo) + ',' +
                            std::to_string(p.bbox.col_lo) + ',' + std::to_string(p.bbox.row_hi) + ',' +
                            std::to_string(p.bbox.col_hi);
    csv << row << '\n';
    out << row << '\n';
    if (cfg.write_masks) {
      Tensor mask({p.height, p.width}, p.weights());
      save_pgm(cfg.out_dir / ("part_" + std::to_string(i) + ".pgm"), mask);
    }
  }
  if (!csv) throw IoError("failed writing parts.csv");
  return exit_ok;
}

int run_cam(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Split split = load_split(cfg);
  PartModel model = make_model(cfg, split);
  maybe_load(model, cfg, err);
  const Sample& sample = pick_sample(split, cfg.sample);
  int k = cfg.cam_class;
  if (k < 0) k = predict(model, sample.image);
  if (static_cast<std::size_t>(k) >= model.config().classes) {
    throw ConfigError("cam.class", "key 'cam.class' is outside [0, " + std::to_string(model.config().classes) + ")");
  }
  if (cfg.cam_source == CamSource::part && model.has_part_branches()) cfg.parts.validate(model.config().channels);
  const Tensor map = grad_cam(model, sample.image, k, cfg.cam_source, cfg.parts, derive_seed(cfg.seed, cam_stream));

  ensure_out_dir(cfg);
  save_pgm(cfg.out_dir / "cam.pgm", map);
  std::ofstream csv = open_output(cfg.out_dir / "cam.csv");
  const std::size_t h = map.extent(0), w = map.extent(1);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) csv << (x ? "," : "") << format_double(map[y * w + x]);
    csv << '\n';
  }
  if (!csv) throw IoError("failed writing cam.csv");
  out << "class=" << k << " label=" << sample.label << " map=" << h << "x" << w << '\n';
  return exit_ok;
}

int run_equiv(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const std::size_t n = cfg.equiv_size, c = cfg.equiv_channels, k = cfg.equiv_kernel;
  if (k % 2 == 0 || k == 0) throw ConfigError("equiv.kernel", "key 'equiv.kernel' must be odd");
  if (n < k) throw ConfigError("equiv.size", "key 'equiv.size' must be at least the kernel size");
  if (c < 4) throw ConfigError("equiv.channels", "key 'equiv.channels' must be at least 4");
  std::mt19937_64 rng(derive_seed(cfg.seed, equiv_stream));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor X({n, n, c}), kernel({k, k, c, c}), bias({c});
  for (auto* t : {&X, &kernel, &bias})
    for (auto& v : t->values()) v = u(rng);

  ensure_out_dir(cfg);
  std::ofstream csv = open_output(cfg.out_dir / "equiv.csv");
  csv << "alpha,gap\n";
  out << "alpha,gap\n";
  for (double alpha : cfg.equiv_alphas) {
    const double gap = equivalence_gap(X, kernel, bias, alpha, cfg.equiv_c);
    const std::string row = format_double(alpha) + ',' + format_double(gap);
    csv << row << '\n';
    out << row << '\n';
  }
  if (!csv) throw IoError("failed writing equiv.csv");
  return exit_ok;
}

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    if (cfg.command == "train") return run_train(cfg, out, err);
    if (cfg.command == "eval") return run_eval(cfg, out, err);
    if (cfg.command == "discover") return run_discover(cfg, out, err);
    if (cfg.command == "cam") return run_cam(cfg, out, err);
    if (cfg.command == "equiv") return run_equiv(cfg, out, err);
    err << "error: unknown command '" << cfg.command << "'\n";
    return exit_usage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::logic_error& e) {
    err << "error: invalid configuration: " << e.what() << '\n';
    return exit_usage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_io;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_io;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_failure;
  }
}

int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Part-guided relational transformer: training, evaluation and diagnostics", "part"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> sets;
  std::string out_dir = "run";
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_file, "Config file with 'key = value' lines");
  app.add_option("--set", sets, "Override one key (key=value); repeatable")->allow_extra_args(false);
  app.add_option("--out", out_dir, "Output directory for all artifacts");
  app.add_option("--seed", seed, "Master seed");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"train", "Train a model and write model.ckpt and metrics.csv"},
      {"eval", "Evaluate a checkpoint on the test split"},
      {"discover", "Discover parts on one test image"},
      {"cam", "Grad-CAM heatmap for one test image"},
      {"equiv", "Attention/convolution equivalence sweep"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return exit_usage;
  }

  RunConfig cfg;
  try {
    cfg = parse_config(config_file, sets);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_io;
  }
  cfg.command = app.get_subcommands().front()->get_name();
  cfg.out_dir = out_dir;
  if (seed) cfg.seed = *seed;
  return run(cfg, out, err);
}

}  // namespace part::cli
