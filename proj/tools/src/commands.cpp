#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "analysis.hpp"
#include "csv.hpp"
#include "densedyn/model.hpp"
#include "densedyn/pgm.hpp"
#include "densedyn/trace_store.hpp"
#include "plots.hpp"
#include "run_config.hpp"

namespace densedyn::cli {

namespace fs = std::filesystem;

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct TrainArgs {
  std::string config;
  std::optional<std::size_t> epochs;
  std::string output;
  bool force = false;
  bool quiet = false;
};

struct AnalyzeArgs {
  std::string trace_dir;
  std::string output;
};

struct PlotArgs {
  std::string analysis_dir;
  std::vector<std::string> which;
  std::string output;
};

struct SynthArgs {
  std::string config;
  bool preview = false;
  std::string output;
};

std::string probe_id(const ImageExemplar& e, std::size_t index) {
  if (!e.meta.source.empty()) return e.meta.source;
  return e.meta.identity + "#" + std::to_string(index);
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig config = load_run_config(a.config);
  if (a.epochs) {
    if (*a.epochs == 0) throw UsageError("--epochs must be positive");
    config.model.epochs = *a.epochs;
  }
  if (!a.output.empty()) config.output = fs::weakly_canonical(fs::absolute(a.output));
  if (a.force) fs::remove_all(config.output);

  const DenseDataset data = load_dataset(config);
  const DscConfig model = model_config(config, data);
  Prng init(model.seed);
  DscNetwork net = build_network(model, init);

  TraceManifest header;
  header.run_id = config.output.filename().string();
  header.seed = config.seed;
  header.config = config_echo(config);
  header.class_names = data.class_names;
  for (std::size_t idx : data.probe_indices()) {
    header.probe_ids.push_back(probe_id(data.exemplars[idx], idx));
    header.probe_labels.push_back(data.exemplars[idx].label);
  }
  TraceStore store(config.output, header);

  if (!a.quiet)
    err << "training " << net.parameter_count() << " parameters on " << data.exemplars.size() << " exemplars for "
        << model.epochs << " epochs\n";
  const TrainResult result = train(net, data, model, &store, [&](const EpochStats& s) {
    if (a.quiet) return;
    err << "epoch " << s.epoch << " loss " << fixed4(s.train_loss) << " accuracy " << fixed4(s.accuracy)
        << " heldout " << fixed4(s.heldout_accuracy) << "\n";
  });
  const EpochStats& last = result.curve.back();
  out << "final accuracy: " << fixed4(last.accuracy) << "\n";
  out << "final heldout accuracy: " << fixed4(last.heldout_accuracy) << "\n";
  out << "trace: " << config.output.string() << "\n";
  return kExitOk;
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path trace(a.trace_dir);
  const fs::path dest = a.output.empty() ? trace / "analysis" : fs::path(a.output);
  run_analysis(trace, dest, err);
  std::ifstream summary(dest / "summary.txt");
  out << summary.rdbuf();
  return kExitOk;
}

int cmd_plot(const PlotArgs& a, std::ostream& out) {
  std::vector<std::string> names;
  for (const auto& w : a.which) {
    if (w == "all") {
      names.insert(names.end(), plot_names().begin(), plot_names().end());
    } else if (std::find(plot_names().begin(), plot_names().end(), w) != plot_names().end()) {
      names.push_back(w);
    } else {
      std::string known;
      for (const auto& n : plot_names()) known += " " + n;
      throw UsageError("unknown plot '" + w + "'; expected one of:" + known + " all");
    }
  }
  const fs::path dir(a.analysis_dir);
  if (!fs::is_directory(dir)) throw std::runtime_error("no analysis directory " + dir.string());
  const fs::path dest = a.output.empty() ? dir : fs::path(a.output);
  for (const auto& n : names) {
    const fs::path file = dest / (n + ".svg");
    write_text(file, render_plot(dir, n));
    out << file.string() << "\n";
  }
  return kExitOk;
}

GrayImage to_gray(const Tensor& t) {
  GrayImage g;
  g.height = t.dim(0);
  g.width = t.dim(1);
  g.pixels.assign(t.data().begin(), t.data().end());
  return g;
}

void write_pgm(const fs::path& path, const GrayImage& img) {
  const auto bytes = serialize_pgm(img);
  write_text(path, std::string(bytes.begin(), bytes.end()));
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const RunConfig config = load_run_config(a.config);
  if (!config.synth) throw UsageError("synth needs a [dataset.synth] section in " + a.config);
  const SynthResult full = synth_generate_full(*config.synth, config.seed, config.splits);
  const DenseDataset& data = full.dataset;
  const fs::path dest = a.output.empty() ? config.output / (a.preview ? "preview" : "synth") : fs::path(a.output);
  const std::size_t size = data.image_size();

  if (a.preview) {
    constexpr std::size_t kPerRow = 8;
    for (std::size_t k = 0; k < data.num_classes(); ++k) {
      write_pgm(dest / ("prototype_" + std::to_string(k) + ".pgm"), to_gray(full.prototypes[k]));
      GrayImage sheet;
      sheet.width = kPerRow * size;
      sheet.height = size;
      sheet.pixels.assign(sheet.width * sheet.height, 0.0);
      std::size_t placed = 0;
      for (const auto& e : data.exemplars) {
        if (e.label != static_cast<int>(k) || placed == kPerRow) continue;
        for (std::size_t y = 0; y < size; ++y)
          for (std::size_t x = 0; x < size; ++x) sheet.pixels[y * sheet.width + placed * size + x] = e.gray[y * size + x];
        ++placed;
      }
      write_pgm(dest / ("exemplars_" + std::to_string(k) + ".pgm"), sheet);
    }
  } else {
    std::vector<std::size_t> seen(data.num_classes(), 0);
    for (const auto& e : data.exemplars) {
      const auto k = static_cast<std::size_t>(e.label);
      char name[32];
      std::snprintf(name, sizeof name, "%05zu.pgm", seen[k]++);
      write_pgm(dest / data.class_names[k] / name, to_gray(e.gray));
    }
  }
  const auto counts = data.class_counts();
  out << "classes: " << data.num_classes() << "\n";
  for (std::size_t k = 0; k < counts.size(); ++k) out << data.class_names[k] << ": " << counts[k] << "\n";
  out << "nearest-prototype accuracy: " << fixed4(nearest_prototype_accuracy(data, full.prototypes)) << "\n";
  out << "written: " << dest.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Training-dynamics instrumentation for dense-sample classification", "densedyn"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a network and record a trace directory");
  train_cmd->add_option("-c,--config", train_args.config, "Run configuration (TOML)")->required()->check(
      CLI::ExistingFile);
  train_cmd->add_option("--epochs", train_args.epochs, "Override the configured epoch count");
  train_cmd->add_option("-o,--output", train_args.output, "Override the configured trace directory");
  train_cmd->add_flag("--force", train_args.force, "Replace an existing trace directory");
  train_cmd->add_flag("-q,--quiet", train_args.quiet, "No per-epoch progress");

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "Run every analysis over a trace directory");
  analyze_cmd->add_option("trace_dir", analyze_args.trace_dir, "Trace directory")->required();
  analyze_cmd->add_option("-o,--output", analyze_args.output, "Analysis directory (default <trace_dir>/analysis)");

  PlotArgs plot_args;
  auto* plot_cmd = app.add_subcommand("plot", "Render SVG figures from an analysis directory");
  plot_cmd->add_option("analysis_dir", plot_args.analysis_dir, "Analysis directory")->required();
  plot_cmd->add_option("--which", plot_args.which, "curve, lld, pca2d, trajectory, corr, varmap or all")
      ->required()
      ->delimiter(',');
  plot_cmd->add_option("-o,--output", plot_args.output, "Directory for the SVG files (default analysis_dir)");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate the configured synthetic dataset as PGM files");
  synth_cmd->add_option("-c,--config", synth_args.config, "Run configuration (TOML)")->required()->check(
      CLI::ExistingFile);
  synth_cmd->add_flag("--preview", synth_args.preview, "Only prototypes and a few exemplars per class");
  synth_cmd->add_option("-o,--output", synth_args.output, "Destination directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "densedyn: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_args, out, err);
    if (analyze_cmd->parsed()) return cmd_analyze(analyze_args, out, err);
    if (plot_cmd->parsed()) return cmd_plot(plot_args, out);
    return cmd_synth(synth_args, out);
  } catch (const ConfigError& e) {
    err << "densedyn: config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "densedyn: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "densedyn: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace densedyn::cli
