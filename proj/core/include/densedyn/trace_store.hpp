#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "densedyn/trace.hpp"

namespace densedyn {

inline constexpr std::uint16_t kTraceFormatVersion = 1;

struct TraceFileEntry {
  std::string name;  // relative to the run directory
  std::uint64_t bytes = 0;
  std::string sha256;  // lowercase hex
};

struct TraceManifest {
  std::string run_id;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config;  // echoed settings, in order
  std::vector<std::string> class_names;
  std::vector<std::string> probe_ids;
  std::vector<int> probe_labels;
  std::size_t epoch_count = 0;
  std::vector<TraceFileEntry> files;

  /// Value of an echoed config key, or `fallback` when absent.
  std::string config_value(const std::string& key, const std::string& fallback = {}) const;
};

/// Malformed content: bad magic, unsupported version, unparsable CSV or JSON.
class TraceFormatError : public std::runtime_error {
 public:
  TraceFormatError(std::filesystem::path file, const std::string& what);
  const std::filesystem::path& file() const noexcept { return file_; }

 private:
  std::filesystem::path file_;
};

/// A listed file is missing, has the wrong size or fails its checksum.
class TraceIntegrityError : public std::runtime_error {
 public:
  TraceIntegrityError(std::filesystem::path file, const std::string& what);
  const std::filesystem::path& file() const noexcept { return file_; }

 private:
  std::filesystem::path file_;
};

/// Writer for one run directory. Every record_epoch leaves the directory in a
/// loadable state: files are written first, then the manifest is replaced
/// atomically.
class TraceStore : public TraceSink {
 public:
  /// Creates `dir` (and parents). Refuses a directory that already holds a manifest.
  TraceStore(std::filesystem::path dir, TraceManifest header);

  void record_epoch(const EpochTrace& trace);
  void record(const EpochTrace& trace) override { record_epoch(trace); }

  const TraceManifest& manifest() const noexcept { return manifest_; }
  const std::filesystem::path& directory() const noexcept { return dir_; }

 private:
  void write_manifest();
  void update_entry(const std::string& name);

  std::filesystem::path dir_;
  TraceManifest manifest_;
  int last_epoch_ = -1;
  std::string curves_;
  std::string heldout_;
};

/// Which parts of an epoch file to materialize.
struct TraceParts {
  bool hidden = true;
  bool conv = true;
  bool logits = true;
  bool weights = true;
};

/// Verifies the manifest inventory once, then reads epochs on demand.
class TraceReader {
 public:
  explicit TraceReader(std::filesystem::path dir);

  const TraceManifest& manifest() const noexcept { return manifest_; }
  std::size_t epoch_count() const noexcept { return scalars_.size(); }
  /// Scalar fields only (epoch, losses, accuracies, recalls).
  const EpochTrace& scalars(std::size_t index) const { return scalars_.at(index); }
  EpochTrace epoch(std::size_t index, const TraceParts& parts = {}) const;

 private:
  std::filesystem::path dir_;
  TraceManifest manifest_;
  std::vector<EpochTrace> scalars_;
};

struct LoadedTrace {
  TraceManifest manifest;
  std::vector<EpochTrace> epochs;
};

/// Loads every epoch with every tensor.
LoadedTrace load_trace(const std::filesystem::path& dir);

/// Name of the binary file for an epoch, e.g. "epoch_0007.bin".
std::string epoch_file_name(int epoch);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& file);

}  // namespace densedyn
