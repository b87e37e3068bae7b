#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <set>
#include <sstream>

#include "analysis.hpp"
#include "commands.hpp"
#include "csv.hpp"
#include "densedyn/trace_store.hpp"
#include "oracles.hpp"
#include "run_config.hpp"

using namespace densedyn;
using namespace densedyn::cli;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("densedyn_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const char* kSmallSynth = R"(seed = 11
output = "run"

[dataset.synth]
classes = 5
exemplars_per_class = 24
image_size = 16

[dataset.splits]
probe_per_class = 4

[model]
pool_out = 4
fc_width = 16
epochs = 2
batch_size = 16
)";

fs::path write_config(const fs::path& dir, const std::string& text, const std::string& name = "run.toml") {
  const fs::path p = dir / name;
  write_text(p, text);
  return p;
}

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

// A recorded trace whose accuracy follows the two-logistic oracle curve.
fs::path two_logistic_trace(const std::string& name) {
  const fs::path dir = fresh_dir(name) / "trace";
  const std::vector<double> curve = oracle::two_logistic_curve(2024);
  TraceManifest m;
  m.run_id = name;
  m.seed = 1;
  m.class_names = {"a", "b", "c", "d", "e"};
  constexpr std::size_t kProbe = 20;
  for (std::size_t p = 0; p < kProbe; ++p) {
    m.probe_ids.push_back("p" + std::to_string(p));
    m.probe_labels.push_back(static_cast<int>(p % 5));
  }
  TraceStore store(dir, m);
  Prng prng(3);
  for (std::size_t e = 0; e < curve.size(); ++e) {
    EpochTrace t;
    t.epoch = static_cast<int>(e);
    t.accuracy = curve[e];
    t.train_loss = 1.0 - curve[e];
    t.heldout_accuracy = curve[e];
    for (int k = 0; k < 5; ++k) t.per_class_recall.push_back(e >= static_cast<std::size_t>(10 + 6 * k) ? 0.9 : 0.1);
    t.probe_labels = m.probe_labels;
    t.hidden_probe = Tensor({kProbe, 12});
    for (std::size_t p = 0; p < kProbe; ++p)
      for (std::size_t d = 0; d < 12; ++d)
        t.hidden_probe[p * 12 + d] =
            (d == static_cast<std::size_t>(m.probe_labels[p]) ? 0.05 * static_cast<double>(e) : 0.0) +
            prng.uniform(0.0, 0.1);
    for (int l = 0; l < 5; ++l) t.conv_probe.push_back(oracle::random_tensor({kProbe, 3, 2, 2}, prng));
    t.logits_probe = oracle::random_tensor({kProbe, 5}, prng);
    t.conv_weights = oracle::random_tensor({5, 84}, prng);
    round_to_float(t.hidden_probe);
    for (auto& c : t.conv_probe) round_to_float(c);
    round_to_float(t.logits_probe);
    round_to_float(t.conv_weights);
    store.record_epoch(t);
  }
  return dir;
}

}  // namespace

TEST(Cli, HelpAndMissingSubcommand) {
  EXPECT_EQ(invoke({"--help"}).code, kExitOk);
  EXPECT_EQ(invoke({}).code, kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(invoke({"train"}).code, kExitUsage);
}

TEST(RunConfig, DefaultsAndOverrides) {
  const fs::path dir = fresh_dir("config");
  const RunConfig c = parse_run_config(kSmallSynth, "run.toml", dir);
  ASSERT_TRUE(c.synth);
  EXPECT_FALSE(c.yale);
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.model.seed, 11u);
  EXPECT_EQ(c.output, dir / "run");
  EXPECT_EQ(c.synth->exemplars_per_class, 24u);
  EXPECT_EQ(c.model.num_classes, 5u);
  EXPECT_EQ(c.model.image_size, 16u);
  EXPECT_EQ(c.model.fc_width, 16u);
  EXPECT_EQ(c.model.optimizer.kind, OptimizerKind::kAdam);
  EXPECT_EQ(c.analysis.k_max, 3);
  EXPECT_EQ(c.splits.probe_per_class, 4u);
}

TEST(RunConfig, CanonicalTomlRoundTrips) {
  const fs::path dir = fresh_dir("canonical");
  RunConfig c = parse_run_config(kSmallSynth, "run.toml", dir);
  c.synth->class_contrast = {1.0, 0.25};
  c.model.optimizer.learning_rate = 3e-4;
  c.analysis.alignment = AxisAlignment::kMatch;
  const std::string text = to_toml(c);
  const RunConfig back = parse_run_config(text, "echo", "/");
  EXPECT_EQ(to_toml(back), text);
  EXPECT_EQ(back.synth->class_contrast, c.synth->class_contrast);
  EXPECT_EQ(back.model.optimizer.learning_rate, 3e-4);
  EXPECT_EQ(back.analysis.alignment, AxisAlignment::kMatch);
}

TEST(RunConfig, ErrorsNameTheLine) {
  const fs::path dir = fresh_dir("config_errors");
  const auto line_of = [&](const std::string& text) -> std::size_t {
    try {
      parse_run_config(text, "bad.toml", dir);
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("bad.toml:" + std::to_string(e.line()) + ":"), std::string::npos);
      return e.line();
    }
    ADD_FAILURE() << "accepted:\n" << text;
    return 0;
  };
  fs::create_directories(dir / "faces" / "a");
  EXPECT_EQ(line_of("output = \"x\"\n[dataset.synth]\nclasses = 5\n\n[dataset.yale]\nroot = \"faces\"\n"), 5u);
  EXPECT_EQ(line_of("output = \"x\"\n[dataset.synth]\nclases = 5\n"), 3u);
  EXPECT_EQ(line_of("output = \"x\"\n[dataset.synth]\nclasses = \"five\"\n"), 3u);
  EXPECT_EQ(line_of("output = \"x\"\n[dataset.synth]\nclasses = -1\n"), 3u);
  EXPECT_EQ(line_of("output = \"x\"\n[dataset.synth]\nclasses = 5\n[model]\noptimizer = \"rmsprop\"\n"), 5u);
  EXPECT_EQ(line_of("output = \"x\"\n[dataset.synth]\n[analysis]\ntheta = 1.5\n"), 4u);
  EXPECT_EQ(line_of("output = \"x\"\n[dataset.synth]\nclasses = 5 5\n"), 3u);
  EXPECT_EQ(line_of("output = \"x\"\n\n[dataset.yale]\nroot = \"missing\"\n"), 4u);
  EXPECT_EQ(line_of("output = \"x\"\n[dataset.yale]\nroot = \"faces\"\nclasses = 2\n"), 3u);
  EXPECT_EQ(line_of("[dataset.synth]\nclasses = 5\n"), 1u);
  EXPECT_EQ(line_of("output = \"x\"\n"), 1u);
}

TEST(RunConfig, YaleIdentitiesDefaultToSortedDirectories) {
  const fs::path dir = fresh_dir("yale_config");
  for (const char* id : {"yaleB03", "yaleB01", "yaleB02"}) fs::create_directories(dir / "faces" / id);
  const RunConfig c =
      parse_run_config("output = \"out\"\n[dataset.yale]\nroot = \"faces\"\nclasses = 2\n", "y.toml", dir);
  ASSERT_TRUE(c.yale);
  EXPECT_EQ(c.yale->identities, (std::vector<std::string>{"yaleB01", "yaleB02"}));
  EXPECT_EQ(c.model.num_classes, 2u);
}

TEST(CliTrain, TwoEpochSynthRun) {
  const fs::path dir = fresh_dir("train");
  const fs::path cfg = write_config(dir, kSmallSynth);
  const CliRun r = invoke({"train", "-c", cfg.string(), "-q"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("final accuracy: "), std::string::npos);
  const LoadedTrace trace = load_trace(dir / "run");
  EXPECT_EQ(trace.epochs.size(), 2u);
  EXPECT_EQ(trace.manifest.probe_ids.size(), 20u);
  EXPECT_EQ(trace.manifest.config_value("model.epochs"), "2");
  EXPECT_TRUE(fs::exists(dir / "run" / "curves.csv"));

  EXPECT_EQ(invoke({"train", "-c", cfg.string(), "-q"}).code, kExitRuntime);
  EXPECT_EQ(invoke({"train", "-c", cfg.string(), "-q", "--force"}).code, kExitOk);
}

TEST(CliTrain, ConfigErrorsExitTwo) {
  const fs::path dir = fresh_dir("train_errors");
  fs::create_directories(dir / "faces" / "a");
  const fs::path both = write_config(dir, std::string(kSmallSynth) + "\n[dataset.yale]\nroot = \"faces\"\n");
  const CliRun r = invoke({"train", "-c", both.string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_TRUE(std::regex_search(r.err, std::regex(R"(run\.toml:\d+: exactly one)"))) << r.err;
  EXPECT_EQ(invoke({"train", "-c", (dir / "absent.toml").string()}).code, kExitUsage);
  const fs::path cfg = write_config(dir, kSmallSynth, "ok.toml");
  EXPECT_EQ(invoke({"train", "-c", cfg.string(), "--epochs", "0"}).code, kExitUsage);
  EXPECT_EQ(invoke({"train", "-c", cfg.string(), "--epochs", "two"}).code, kExitUsage);
}

TEST(CliTrain, RepeatedRunsWriteIdenticalCurves) {
  const fs::path dir = fresh_dir("repeat");
  const fs::path cfg = write_config(dir, kSmallSynth);
  ASSERT_EQ(invoke({"train", "-c", cfg.string(), "-q", "-o", (dir / "a").string()}).code, kExitOk);
  ASSERT_EQ(invoke({"train", "-c", cfg.string(), "-q", "-o", (dir / "b").string()}).code, kExitOk);
  EXPECT_EQ(read_all(dir / "a" / "curves.csv"), read_all(dir / "b" / "curves.csv"));
  for (int e = 0; e < 2; ++e)
    EXPECT_EQ(read_all(dir / "a" / epoch_file_name(e)), read_all(dir / "b" / epoch_file_name(e)));
}

TEST(CliTrain, ThreadCountDoesNotChangeResults) {
  const fs::path dir = fresh_dir("threads");
  const fs::path cfg = write_config(dir, kSmallSynth);
  ::setenv("DENSEDYN_THREADS", "1", 1);
  ASSERT_EQ(invoke({"train", "-c", cfg.string(), "-q", "-o", (dir / "one").string()}).code, kExitOk);
  ::setenv("DENSEDYN_THREADS", "3", 1);
  ASSERT_EQ(invoke({"train", "-c", cfg.string(), "-q", "-o", (dir / "three").string()}).code, kExitOk);
  ::unsetenv("DENSEDYN_THREADS");
  EXPECT_EQ(read_all(dir / "one" / "curves.csv"), read_all(dir / "three" / "curves.csv"));
  EXPECT_EQ(read_all(dir / "one" / epoch_file_name(1)), read_all(dir / "three" / epoch_file_name(1)));
}

TEST(CliAnalyze, TwoEpochTraceGivesTwoRowsPerComponent) {
  const fs::path dir = fresh_dir("analyze");
  const fs::path cfg = write_config(dir, kSmallSynth);
  ASSERT_EQ(invoke({"train", "-c", cfg.string(), "-q"}).code, kExitOk);
  const CliRun r = invoke({"analyze", (dir / "run").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const fs::path out = dir / "run" / "analysis";
  const CsvTable traj = read_csv(out / "pca_trajectory.csv");
  ASSERT_EQ(traj.rows.size(), 2u * 5u);
  for (int pc = 1; pc <= 5; ++pc) {
    std::size_t rows = 0;
    for (std::size_t i = 0; i < traj.rows.size(); ++i) rows += traj.number(i, traj.column("pc")) == pc;
    EXPECT_EQ(rows, 2u) << pc;
  }
  for (const char* f : {"curve.csv", "lld.csv", "lld_curve.csv", "pca2d.csv", "layer_corr.csv", "changepoints.csv",
                        "summary.txt", "variance_maps/index.csv", "variance_maps/class_4.csv"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(read_csv(out / "layer_corr.csv").rows.size(), 2u * 10u);
  EXPECT_EQ(read_csv(out / "variance_maps/class_0.csv").rows.size(), 16u);
  EXPECT_NE(r.out.find("lld: skipped"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("variance maps: written"), std::string::npos) << r.out;
}

TEST(CliAnalyze, MissingOrCorruptTraceExitsOne) {
  const fs::path dir = fresh_dir("analyze_errors");
  EXPECT_EQ(invoke({"analyze", (dir / "nothing").string()}).code, kExitRuntime);
  const fs::path cfg = write_config(dir, kSmallSynth);
  ASSERT_EQ(invoke({"train", "-c", cfg.string(), "-q"}).code, kExitOk);
  const fs::path victim = dir / "run" / epoch_file_name(1);
  std::string bytes = read_all(victim);
  bytes[bytes.size() / 2] ^= 0x20;
  write_text(victim, bytes);
  const CliRun r = invoke({"analyze", (dir / "run").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find(epoch_file_name(1)), std::string::npos) << r.err;
  fs::remove(dir / "run" / "manifest.json");
  EXPECT_EQ(invoke({"analyze", (dir / "run").string()}).code, kExitRuntime);
  EXPECT_EQ(invoke({"analyze"}).code, kExitUsage);
}

TEST(CliAnalyze, TwoLogisticCurveSelectsTwoComponents) {
  const fs::path trace = two_logistic_trace("analyze_lld");
  const AnalysisReport rep = [&] {
    std::ostringstream log;
    return run_analysis(trace, trace.parent_path() / "analysis", log);
  }();
  EXPECT_EQ(rep.best_k, 2);
  ASSERT_EQ(rep.fits.size(), 3u);
  EXPECT_GT(rep.fits[1].r2, rep.fits[0].r2);
  ASSERT_TRUE(rep.crystallization.overall.epoch);
  EXPECT_EQ(*rep.crystallization.overall.epoch, 10);
  EXPECT_EQ(rep.classes_after_first, 4u);
  EXPECT_EQ(rep.variance_maps.rfind("skipped", 0), 0u);
  const std::string summary = read_all(trace.parent_path() / "analysis" / "summary.txt");
  EXPECT_NE(summary.find("lld K*: 2"), std::string::npos) << summary;
  EXPECT_NE(summary.find("overall change-point: 10 (a)"), std::string::npos) << summary;
}

TEST(CliPlot, LldFigureHasDataFitAndComponentPolylines) {
  const fs::path trace = two_logistic_trace("plot_lld");
  const fs::path analysis = trace.parent_path() / "analysis";
  ASSERT_EQ(invoke({"analyze", trace.string(), "-o", analysis.string()}).code, kExitOk);
  ASSERT_EQ(invoke({"plot", analysis.string(), "--which", "lld"}).code, kExitOk);
  const std::string svg = read_all(analysis / "lld.svg");
  EXPECT_EQ(count(svg, "<polyline"), 4u);
  EXPECT_EQ(count(svg, "<polyline class=\"data\""), 1u);
  EXPECT_EQ(count(svg, "<polyline class=\"fit\""), 1u);
  EXPECT_EQ(count(svg, "<polyline class=\"component\""), 2u);
}

TEST(CliPlot, Pca2dShowsEveryClassColor) {
  const fs::path trace = two_logistic_trace("plot_pca");
  const fs::path analysis = trace.parent_path() / "analysis";
  ASSERT_EQ(invoke({"analyze", trace.string(), "-o", analysis.string()}).code, kExitOk);
  ASSERT_EQ(invoke({"plot", analysis.string(), "--which", "pca2d"}).code, kExitOk);
  const std::string svg = read_all(analysis / "pca2d.svg");
  const std::regex fill(R"re(<circle class="class\d+"[^>]* fill="(#[0-9a-f]{6})")re");
  std::set<std::string> colors;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), fill); it != std::sregex_iterator(); ++it)
    colors.insert((*it)[1]);
  EXPECT_EQ(colors.size(), 5u);
}

TEST(CliPlot, RendersAreByteIdentical) {
  const fs::path trace = two_logistic_trace("plot_repeat");
  const fs::path analysis = trace.parent_path() / "analysis";
  ASSERT_EQ(invoke({"analyze", trace.string(), "-o", analysis.string()}).code, kExitOk);
  const fs::path a = trace.parent_path() / "a", b = trace.parent_path() / "b";
  ASSERT_EQ(invoke({"plot", analysis.string(), "--which", "curve,lld,pca2d,trajectory,corr", "-o", a.string()}).code,
            kExitOk);
  ASSERT_EQ(invoke({"plot", analysis.string(), "--which", "curve,lld,pca2d,trajectory,corr", "-o", b.string()}).code,
            kExitOk);
  for (const char* n : {"curve", "lld", "pca2d", "trajectory", "corr"}) {
    const std::string sa = read_all(a / (std::string(n) + ".svg"));
    EXPECT_GT(sa.size(), 200u) << n;
    EXPECT_EQ(sa, read_all(b / (std::string(n) + ".svg"))) << n;
  }
}

TEST(CliPlot, UsageAndRuntimeErrors) {
  const fs::path trace = two_logistic_trace("plot_errors");
  const fs::path analysis = trace.parent_path() / "analysis";
  ASSERT_EQ(invoke({"analyze", trace.string(), "-o", analysis.string()}).code, kExitOk);
  EXPECT_EQ(invoke({"plot", analysis.string(), "--which", "histogram"}).code, kExitUsage);
  EXPECT_EQ(invoke({"plot", analysis.string()}).code, kExitUsage);
  EXPECT_EQ(invoke({"plot", (analysis / "missing").string(), "--which", "lld"}).code, kExitRuntime);
  // This trace carries no dataset, so there are no variance maps to draw.
  EXPECT_EQ(invoke({"plot", analysis.string(), "--which", "varmap"}).code, kExitRuntime);
}

TEST(CliPlot, EveryFigureFromATrainedRun) {
  const fs::path dir = fresh_dir("plot_all");
  const fs::path cfg = write_config(dir, kSmallSynth);
  ASSERT_EQ(invoke({"train", "-c", cfg.string(), "-q", "--epochs", "6"}).code, kExitOk);
  ASSERT_EQ(invoke({"analyze", (dir / "run").string()}).code, kExitOk);
  const CliRun r = invoke({"plot", (dir / "run" / "analysis").string(), "--which", "all"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* n : {"curve", "lld", "pca2d", "trajectory", "corr", "varmap"}) {
    const std::string svg = read_all(dir / "run" / "analysis" / (std::string(n) + ".svg"));
    EXPECT_EQ(svg.rfind("<svg ", 0), 0u) << n;
    EXPECT_NE(svg.find("</svg>"), std::string::npos) << n;
  }
  EXPECT_EQ(count(read_all(dir / "run" / "analysis" / "varmap.svg"), "<rect"), 1u + 5u * 16u * 16u + 21u);
}

TEST(CliSynth, PreviewAndFullExport) {
  const fs::path dir = fresh_dir("synth");
  const fs::path cfg = write_config(dir, kSmallSynth);
  const CliRun r = invoke({"synth", "-c", cfg.string(), "--preview"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("nearest-prototype accuracy: "), std::string::npos);
  for (int k = 0; k < 5; ++k) {
    const GrayImage proto = read_pgm(dir / "run" / "preview" / ("prototype_" + std::to_string(k) + ".pgm"));
    EXPECT_EQ(proto.width, 16u);
    EXPECT_EQ(read_pgm(dir / "run" / "preview" / ("exemplars_" + std::to_string(k) + ".pgm")).width, 8u * 16u);
  }
  ASSERT_EQ(invoke({"synth", "-c", cfg.string(), "-o", (dir / "export").string()}).code, kExitOk);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "export")) files += e.is_regular_file();
  EXPECT_EQ(files, 5u * 24u);
}

TEST(CliSynth, RequiresSynthSection) {
  const fs::path dir = fresh_dir("synth_errors");
  fs::create_directories(dir / "faces" / "a");
  const fs::path cfg = write_config(dir, "output = \"x\"\n[dataset.yale]\nroot = \"faces\"\nclasses = 1\n");
  EXPECT_EQ(invoke({"synth", "-c", cfg.string(), "--preview"}).code, kExitUsage);
  EXPECT_EQ(invoke({"synth", "--preview"}).code, kExitUsage);
}
