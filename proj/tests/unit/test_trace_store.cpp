#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "densedyn/trace_store.hpp"
#include "oracles.hpp"

using namespace densedyn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("densedyn_trace_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_all(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

TraceManifest header() {
  TraceManifest m;
  m.run_id = "fixture";
  m.seed = 42;
  m.config = {{"epochs", "3"}, {"optimizer", "adam"}, {"learning_rate", "0.001"}};
  m.class_names = {"a", "b", "c"};
  m.probe_ids = {"p0", "p1", "p2", "p3"};
  m.probe_labels = {0, 1, 2, 1};
  return m;
}

Tensor float_tensor(Shape shape, Prng& prng) {
  Tensor t = oracle::random_tensor(std::move(shape), prng);
  round_to_float(t);
  return t;
}

EpochTrace make_epoch(int epoch, Prng& prng) {
  EpochTrace t;
  t.epoch = epoch;
  t.train_loss = prng.uniform(0.0, 2.0);
  t.accuracy = prng.uniform();
  t.per_class_recall = {prng.uniform(), prng.uniform(), 1.0 / 3.0};
  t.heldout_loss = prng.uniform(0.0, 2.0);
  t.heldout_accuracy = 0.1 * epoch;
  t.hidden_probe = float_tensor({4, 8}, prng);
  for (int l = 0; l < 5; ++l) t.conv_probe.push_back(float_tensor({4, 3, 2, 2}, prng));
  t.logits_probe = float_tensor({4, 3}, prng);
  t.conv_weights = float_tensor({5, 84}, prng);
  t.probe_labels = {0, 1, 2, 1};
  return t;
}

std::vector<EpochTrace> write_fixture(const fs::path& dir, int epochs = 3) {
  Prng prng(8);
  TraceStore store(dir, header());
  std::vector<EpochTrace> out;
  for (int e = 0; e < epochs; ++e) {
    out.push_back(make_epoch(e, prng));
    store.record_epoch(out.back());
  }
  return out;
}

void expect_same(const EpochTrace& a, const EpochTrace& b) {
  EXPECT_EQ(a.epoch, b.epoch);
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.per_class_recall, b.per_class_recall);
  EXPECT_EQ(a.heldout_loss, b.heldout_loss);
  EXPECT_EQ(a.heldout_accuracy, b.heldout_accuracy);
  EXPECT_EQ(a.hidden_probe, b.hidden_probe);
  ASSERT_EQ(a.conv_probe.size(), b.conv_probe.size());
  for (std::size_t l = 0; l < a.conv_probe.size(); ++l) EXPECT_EQ(a.conv_probe[l], b.conv_probe[l]);
  EXPECT_EQ(a.logits_probe, b.logits_probe);
  EXPECT_EQ(a.conv_weights, b.conv_weights);
  EXPECT_EQ(a.probe_labels, b.probe_labels);
}

}  // namespace

TEST(TraceStore, Sha256KnownVector) {
  const fs::path dir = fresh_dir("sha");
  fs::create_directories(dir);
  write_all(dir / "abc", "abc");
  EXPECT_EQ(sha256_file(dir / "abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  write_all(dir / "empty", "");
  EXPECT_EQ(sha256_file(dir / "empty"), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  fs::remove_all(dir);
}

TEST(TraceStore, EpochFileNames) {
  EXPECT_EQ(epoch_file_name(7), "epoch_0007.bin");
  EXPECT_EQ(epoch_file_name(123), "epoch_0123.bin");
}

TEST(TraceStore, RoundTripIsExact) {
  const fs::path dir = fresh_dir("roundtrip");
  const auto written = write_fixture(dir);
  const LoadedTrace loaded = load_trace(dir);
  EXPECT_EQ(loaded.manifest.run_id, "fixture");
  EXPECT_EQ(loaded.manifest.seed, 42u);
  EXPECT_EQ(loaded.manifest.config, header().config);
  EXPECT_EQ(loaded.manifest.class_names, header().class_names);
  EXPECT_EQ(loaded.manifest.probe_ids, header().probe_ids);
  EXPECT_EQ(loaded.manifest.probe_labels, header().probe_labels);
  EXPECT_EQ(loaded.manifest.config_value("optimizer"), "adam");
  EXPECT_EQ(loaded.manifest.config_value("missing", "x"), "x");
  ASSERT_EQ(loaded.epochs.size(), written.size());
  for (std::size_t e = 0; e < written.size(); ++e) expect_same(written[e], loaded.epochs[e]);
  fs::remove_all(dir);
}

TEST(TraceStore, WriteLoadWriteIsByteIdentical) {
  const fs::path a = fresh_dir("rewrite_a"), b = fresh_dir("rewrite_b");
  write_fixture(a);
  const LoadedTrace loaded = load_trace(a);
  TraceManifest h = loaded.manifest;
  h.files.clear();
  h.epoch_count = 0;
  {
    TraceStore store(b, h);
    for (const auto& e : loaded.epochs) store.record_epoch(e);
  }
  std::vector<std::string> names{"manifest.json"};
  for (const auto& f : loaded.manifest.files) names.push_back(f.name);
  EXPECT_GE(names.size(), 6u);
  for (const auto& n : names) EXPECT_EQ(read_all(a / n), read_all(b / n)) << n;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(TraceStore, ReaderLoadsPartsOnDemand) {
  const fs::path dir = fresh_dir("parts");
  const auto written = write_fixture(dir);
  const TraceReader reader(dir);
  ASSERT_EQ(reader.epoch_count(), 3u);
  EXPECT_EQ(reader.scalars(1).accuracy, written[1].accuracy);
  TraceParts parts;
  parts.conv = false;
  parts.weights = false;
  const EpochTrace e = reader.epoch(2, parts);
  EXPECT_EQ(e.hidden_probe, written[2].hidden_probe);
  EXPECT_TRUE(e.conv_probe.empty());
  EXPECT_EQ(e.conv_weights.size(), 0u);
  fs::remove_all(dir);
}

TEST(TraceStore, EveryPrefixIsLoadable) {
  const fs::path dir = fresh_dir("prefix");
  Prng prng(3);
  TraceStore store(dir, header());
  for (int e = 0; e < 3; ++e) {
    store.record_epoch(make_epoch(e, prng));
    EXPECT_EQ(load_trace(dir).epochs.size(), static_cast<std::size_t>(e + 1));
  }
  fs::remove_all(dir);
}

TEST(TraceStore, RejectsNonIncreasingEpochs) {
  const fs::path dir = fresh_dir("order");
  Prng prng(3);
  TraceStore store(dir, header());
  store.record_epoch(make_epoch(5, prng));
  EXPECT_THROW(store.record_epoch(make_epoch(3, prng)), std::invalid_argument);
  EXPECT_THROW(store.record_epoch(make_epoch(5, prng)), std::invalid_argument);
  EXPECT_EQ(load_trace(dir).epochs.size(), 1u);
  fs::remove_all(dir);
}

TEST(TraceStore, RejectsInconsistentEpochs) {
  const fs::path dir = fresh_dir("inconsistent");
  Prng prng(3);
  TraceStore store(dir, header());
  EpochTrace bad = make_epoch(0, prng);
  bad.per_class_recall.pop_back();
  EXPECT_THROW(store.record_epoch(bad), std::invalid_argument);
  bad = make_epoch(0, prng);
  bad.probe_labels[0] = 2;
  EXPECT_THROW(store.record_epoch(bad), std::invalid_argument);
  fs::remove_all(dir);
}

TEST(TraceStore, RefusesExistingRunDirectory) {
  const fs::path dir = fresh_dir("existing");
  write_fixture(dir, 1);
  EXPECT_THROW(TraceStore(dir, header()), std::runtime_error);
  fs::remove_all(dir);
}

TEST(TraceStore, TruncationNamesFileAndSizes) {
  const fs::path dir = fresh_dir("truncate");
  write_fixture(dir);
  const fs::path victim = dir / epoch_file_name(1);
  const std::string bytes = read_all(victim);
  write_all(victim, bytes.substr(0, bytes.size() - 10));
  try {
    load_trace(dir);
    FAIL() << "expected TraceIntegrityError";
  } catch (const TraceIntegrityError& e) {
    EXPECT_EQ(e.file().filename(), epoch_file_name(1));
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::to_string(bytes.size())), std::string::npos) << msg;
    EXPECT_NE(msg.find(std::to_string(bytes.size() - 10)), std::string::npos) << msg;
  }
  fs::remove_all(dir);
}

TEST(TraceStore, MissingFileIsAnIntegrityError) {
  const fs::path dir = fresh_dir("missing");
  write_fixture(dir);
  fs::remove(dir / "curves.csv");
  try {
    load_trace(dir);
    FAIL() << "expected TraceIntegrityError";
  } catch (const TraceIntegrityError& e) {
    EXPECT_EQ(e.file().filename(), "curves.csv");
  }
  fs::remove_all(dir);
}

TEST(TraceStore, MalformedManifestIsAFormatError) {
  const fs::path dir = fresh_dir("manifest");
  write_fixture(dir, 1);
  write_all(dir / "manifest.json", "{not json");
  EXPECT_THROW(load_trace(dir), TraceFormatError);
  EXPECT_THROW(load_trace(fresh_dir("nothing")), std::runtime_error);
  fs::remove_all(dir);
}

TEST(TraceStore, EverySingleByteCorruptionIsDetected) {
  const fs::path dir = fresh_dir("corrupt");
  write_fixture(dir, 1);
  const TraceManifest manifest = load_trace(dir).manifest;
  std::size_t checked = 0;
  for (const auto& entry : manifest.files) {
    const fs::path path = dir / entry.name;
    const std::string original = read_all(path);
    for (std::size_t i = 0; i < original.size(); ++i) {
      std::string bad = original;
      bad[i] = static_cast<char>(bad[i] ^ 0x01);
      write_all(path, bad);
      try {
        TraceReader reader(dir);
        ADD_FAILURE() << entry.name << " byte " << i << " corruption went unnoticed";
      } catch (const TraceIntegrityError& e) {
        ASSERT_EQ(e.file().filename(), entry.name);
      }
      ++checked;
    }
    write_all(path, original);
  }
  EXPECT_GT(checked, 500u);
  EXPECT_NO_THROW(TraceReader{dir});
  fs::remove_all(dir);
}
