#include "densedyn/trace_store.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"

namespace densedyn {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'D', 'S', 'C', 'T'};
constexpr std::size_t kHeaderBytes = 16;
constexpr const char* kManifestName = "manifest.json";
constexpr const char* kCurvesName = "curves.csv";
constexpr const char* kHeldoutName = "heldout.csv";

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void write_file_durable(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw std::runtime_error("cannot open " + tmp.string() + " for writing: " + std::strerror(errno));
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string err = std::strerror(errno);
      ::close(fd);
      throw std::runtime_error("write failed for " + tmp.string() + ": " + err);
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    throw std::runtime_error("cannot flush " + tmp.string() + ": " + std::strerror(errno));
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TraceIntegrityError(path, "missing file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const void* data, std::size_t size) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data, size, md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 15]);
  }
  return out;
}

// Little-endian byte encoding.
template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

void put_tensor(std::string& out, const Tensor& t) {
  if (t.rank() > 255) throw std::invalid_argument("trace tensor rank above 255");
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) {
    if (d > 0xffffffffULL) throw std::invalid_argument("trace tensor dimension exceeds u32");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  for (double x : t.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
}

std::string encode_epoch(const EpochTrace& trace) {
  std::vector<const Tensor*> tensors;
  Tensor labels({trace.probe_labels.size()});
  for (std::size_t i = 0; i < trace.probe_labels.size(); ++i) labels[i] = trace.probe_labels[i];
  tensors.push_back(&trace.hidden_probe);
  for (const auto& c : trace.conv_probe) tensors.push_back(&c);
  tensors.push_back(&trace.logits_probe);
  tensors.push_back(&labels);
  tensors.push_back(&trace.conv_weights);
  if (tensors.size() > 0xffff) throw std::invalid_argument("too many trace tensors");

  std::string body;
  for (const Tensor* t : tensors) put_tensor(body, *t);
  std::string out(kMagic, 4);
  put_le<std::uint16_t>(out, kTraceFormatVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(tensors.size()));
  put_le<std::uint64_t>(out, kHeaderBytes + body.size());
  return out + body;
}

class ByteCursor {
 public:
  ByteCursor(const fs::path& file, const std::string& bytes) : file_(file), bytes_(bytes) {}

  const unsigned char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw TraceFormatError(file_, file_.filename().string() + ": unexpected end of data at byte " +
                                        std::to_string(pos_));
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
    pos_ += n;
    return p;
  }

  Tensor tensor(bool materialize) {
    const std::size_t rank = *take(1);
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = get_le<std::uint32_t>(take(4));
      count *= d;
    }
    if (count > (bytes_.size() - pos_) / 4) {
      throw TraceFormatError(file_, file_.filename().string() + ": tensor " + shape_to_string(shape) +
                                        " exceeds the remaining file size");
    }
    const unsigned char* p = take(4 * count);
    if (!materialize) return Tensor();
    Tensor t(shape);
    for (std::size_t i = 0; i < count; ++i) {
      t[i] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i)));
    }
    return t;
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  const fs::path& file_;
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void decode_epoch(const fs::path& file, const std::string& bytes, const TraceParts& parts, EpochTrace& trace) {
  const std::string name = file.filename().string();
  if (bytes.size() < kHeaderBytes) {
    throw TraceIntegrityError(file, name + ": truncated header, expected at least " +
                                        std::to_string(kHeaderBytes) + " bytes, found " +
                                        std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw TraceFormatError(file, name + ": bad magic");
  const auto* h = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto version = get_le<std::uint16_t>(h + 4);
  if (version != kTraceFormatVersion) {
    throw TraceFormatError(file, name + ": unsupported format version " + std::to_string(version));
  }
  const auto count = get_le<std::uint16_t>(h + 6);
  const auto total = get_le<std::uint64_t>(h + 8);
  if (total != bytes.size()) {
    throw TraceIntegrityError(file, name + ": expected " + std::to_string(total) + " bytes, found " +
                                        std::to_string(bytes.size()));
  }
  if (count < 4) throw TraceFormatError(file, name + ": expected at least 4 tensors, found " + std::to_string(count));

  ByteCursor cur(file, bytes);
  cur.take(kHeaderBytes);
  trace.hidden_probe = cur.tensor(parts.hidden);
  trace.conv_probe.clear();
  for (std::size_t l = 0; l + 4 < count; ++l) {
    Tensor t = cur.tensor(parts.conv);
    if (parts.conv) trace.conv_probe.push_back(std::move(t));
  }
  trace.logits_probe = cur.tensor(parts.logits);
  const Tensor labels = cur.tensor(true);
  trace.conv_weights = cur.tensor(parts.weights);
  trace.probe_labels.assign(labels.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) trace.probe_labels[i] = static_cast<int>(labels[i]);
  if (cur.position() != bytes.size()) throw TraceFormatError(file, name + ": trailing bytes after last tensor");
}

ordered_json manifest_to_json(const TraceManifest& m) {
  ordered_json j;
  j["format"] = "densedyn-trace";
  j["version"] = kTraceFormatVersion;
  j["run_id"] = m.run_id;
  j["seed"] = m.seed;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : m.config) cfg[k] = v;
  j["config"] = cfg;
  j["class_names"] = m.class_names;
  j["probe"] = {{"ids", m.probe_ids}, {"labels", m.probe_labels}};
  j["epoch_count"] = m.epoch_count;
  ordered_json files = ordered_json::array();
  for (const auto& f : m.files) files.push_back({{"name", f.name}, {"bytes", f.bytes}, {"sha256", f.sha256}});
  j["files"] = files;
  return j;
}

TraceManifest manifest_from_json(const fs::path& file, const std::string& text) {
  try {
    const ordered_json j = ordered_json::parse(text);
    if (j.at("format").get<std::string>() != "densedyn-trace") throw TraceFormatError(file, "not a trace manifest");
    if (j.at("version").get<int>() != kTraceFormatVersion) {
      throw TraceFormatError(file, "unsupported manifest version " + j.at("version").dump());
    }
    TraceManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [k, v] : j.at("config").items()) m.config.emplace_back(k, v.get<std::string>());
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.probe_ids = j.at("probe").at("ids").get<std::vector<std::string>>();
    m.probe_labels = j.at("probe").at("labels").get<std::vector<int>>();
    m.epoch_count = j.at("epoch_count").get<std::size_t>();
    for (const auto& f : j.at("files")) {
      m.files.push_back({f.at("name").get<std::string>(), f.at("bytes").get<std::uint64_t>(),
                         f.at("sha256").get<std::string>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw TraceFormatError(file, "malformed manifest: " + std::string(e.what()));
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(const fs::path& file, std::size_t row, const std::string& text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw TraceFormatError(file, file.filename().string() + ": bad number '" + text + "' on line " +
                                     std::to_string(row + 1));
  }
  return v;
}

// Rows of a CSV file with a header; each row must have `columns` fields.
std::vector<std::vector<std::string>> read_csv_rows(const fs::path& file, const std::string& text,
                                                    std::size_t columns) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (lineno++ == 0) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != columns) {
      throw TraceFormatError(file, file.filename().string() + ": line " + std::to_string(lineno) + " has " +
                                       std::to_string(fields.size()) + " fields, expected " +
                                       std::to_string(columns));
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

std::string TraceManifest::config_value(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : config) {
    if (k == key) return v;
  }
  return fallback;
}

TraceFormatError::TraceFormatError(fs::path file, const std::string& what)
    : std::runtime_error(what), file_(std::move(file)) {}

TraceIntegrityError::TraceIntegrityError(fs::path file, const std::string& what)
    : std::runtime_error(what), file_(std::move(file)) {}

std::string epoch_file_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04d.bin", epoch);
  return buf;
}

std::string sha256_file(const fs::path& file) {
  const std::string bytes = read_file(file);
  return sha256_hex(bytes.data(), bytes.size());
}

TraceStore::TraceStore(fs::path dir, TraceManifest header) : dir_(std::move(dir)), manifest_(std::move(header)) {
  fs::create_directories(dir_);
  if (fs::exists(dir_ / kManifestName)) {
    throw std::runtime_error("trace directory " + dir_.string() + " already contains a manifest");
  }
  manifest_.epoch_count = 0;
  manifest_.files.clear();
  const std::size_t k = manifest_.class_names.size();
  curves_ = "epoch,loss,accuracy";
  for (std::size_t c = 0; c < k; ++c) curves_ += ",recall_" + std::to_string(c);
  curves_ += '\n';
  heldout_ = "epoch,heldout_loss,heldout_accuracy\n";
  write_file_durable(dir_ / kCurvesName, curves_);
  write_file_durable(dir_ / kHeldoutName, heldout_);
  update_entry(kCurvesName);
  update_entry(kHeldoutName);
  write_manifest();
}

void TraceStore::update_entry(const std::string& name) {
  const std::string bytes = read_file(dir_ / name);
  TraceFileEntry entry{name, bytes.size(), sha256_hex(bytes.data(), bytes.size())};
  for (auto& f : manifest_.files) {
    if (f.name == name) {
      f = entry;
      return;
    }
  }
  manifest_.files.push_back(entry);
}

void TraceStore::write_manifest() { write_file_durable(dir_ / kManifestName, manifest_to_json(manifest_).dump(2) + "\n"); }

void TraceStore::record_epoch(const EpochTrace& trace) {
  if (trace.epoch <= last_epoch_) {
    throw std::invalid_argument("record_epoch: epoch " + std::to_string(trace.epoch) + " after epoch " +
                                std::to_string(last_epoch_) + " (epochs must strictly increase)");
  }
  if (trace.epoch < 0) throw std::invalid_argument("record_epoch: negative epoch");
  if (trace.per_class_recall.size() != manifest_.class_names.size()) {
    throw std::invalid_argument("record_epoch: expected " + std::to_string(manifest_.class_names.size()) +
                                " recall values, got " + std::to_string(trace.per_class_recall.size()));
  }
  if (trace.hidden_probe.rank() == 2 && trace.hidden_probe.dim(0) != trace.probe_count()) {
    throw std::invalid_argument("record_epoch: hidden probe rows differ from probe label count");
  }
  if (!manifest_.probe_labels.empty() && trace.probe_labels != manifest_.probe_labels) {
    throw std::invalid_argument("record_epoch: probe labels differ from the manifest probe set");
  }

  const std::string name = epoch_file_name(trace.epoch);
  const std::string bytes = encode_epoch(trace);
  write_file_durable(dir_ / name, bytes);

  curves_ += std::to_string(trace.epoch) + ',' + format_double(trace.train_loss) + ',' + format_double(trace.accuracy);
  for (double r : trace.per_class_recall) curves_ += ',' + format_double(r);
  curves_ += '\n';
  heldout_ += std::to_string(trace.epoch) + ',' + format_double(trace.heldout_loss) + ',' +
              format_double(trace.heldout_accuracy) + '\n';
  write_file_durable(dir_ / kCurvesName, curves_);
  write_file_durable(dir_ / kHeldoutName, heldout_);

  update_entry(kCurvesName);
  update_entry(kHeldoutName);
  manifest_.files.push_back({name, bytes.size(), sha256_hex(bytes.data(), bytes.size())});
  manifest_.epoch_count += 1;
  last_epoch_ = trace.epoch;
  write_manifest();
}

TraceReader::TraceReader(fs::path dir) : dir_(std::move(dir)) {
  const fs::path manifest_path = dir_ / kManifestName;
  if (!fs::exists(manifest_path)) throw TraceIntegrityError(manifest_path, "missing manifest " + manifest_path.string());
  manifest_ = manifest_from_json(manifest_path, read_file(manifest_path));

  for (const auto& f : manifest_.files) {
    const fs::path path = dir_ / f.name;
    if (!fs::exists(path)) throw TraceIntegrityError(path, "missing file " + f.name);
    const std::uint64_t size = fs::file_size(path);
    if (size != f.bytes) {
      throw TraceIntegrityError(path, f.name + ": expected " + std::to_string(f.bytes) + " bytes, found " +
                                          std::to_string(size));
    }
    if (sha256_file(path) != f.sha256) throw TraceIntegrityError(path, f.name + ": checksum mismatch");
  }

  const std::size_t k = manifest_.class_names.size();
  const fs::path curves_path = dir_ / kCurvesName;
  const auto curves = read_csv_rows(curves_path, read_file(curves_path), 3 + k);
  const fs::path heldout_path = dir_ / kHeldoutName;
  const auto heldout = read_csv_rows(heldout_path, read_file(heldout_path), 3);
  if (curves.size() != manifest_.epoch_count || heldout.size() != manifest_.epoch_count) {
    throw TraceFormatError(curves_path, "curve rows (" + std::to_string(curves.size()) +
                                            ") differ from the manifest epoch count (" +
                                            std::to_string(manifest_.epoch_count) + ")");
  }
  for (std::size_t r = 0; r < curves.size(); ++r) {
    EpochTrace t;
    t.epoch = parse_number<int>(curves_path, r + 1, curves[r][0]);
    t.train_loss = parse_number<double>(curves_path, r + 1, curves[r][1]);
    t.accuracy = parse_number<double>(curves_path, r + 1, curves[r][2]);
    for (std::size_t c = 0; c < k; ++c) t.per_class_recall.push_back(parse_number<double>(curves_path, r + 1, curves[r][3 + c]));
    if (parse_number<int>(heldout_path, r + 1, heldout[r][0]) != t.epoch) {
      throw TraceFormatError(heldout_path, "heldout.csv epochs differ from curves.csv");
    }
    t.heldout_loss = parse_number<double>(heldout_path, r + 1, heldout[r][1]);
    t.heldout_accuracy = parse_number<double>(heldout_path, r + 1, heldout[r][2]);
    if (!scalars_.empty() && t.epoch <= scalars_.back().epoch) {
      throw TraceFormatError(curves_path, "curves.csv epochs are not strictly increasing");
    }
    const std::string name = epoch_file_name(t.epoch);
    const bool listed = std::any_of(manifest_.files.begin(), manifest_.files.end(),
                                    [&](const TraceFileEntry& f) { return f.name == name; });
    if (!listed) throw TraceIntegrityError(dir_ / name, "manifest does not list " + name);
    scalars_.push_back(std::move(t));
  }
}

EpochTrace TraceReader::epoch(std::size_t index, const TraceParts& parts) const {
  EpochTrace t = scalars_.at(index);
  const fs::path path = dir_ / epoch_file_name(t.epoch);
  const std::string bytes = read_file(path);
  for (const auto& f : manifest_.files) {
    if (f.name == path.filename().string() && bytes.size() != f.bytes) {
      throw TraceIntegrityError(path, f.name + ": expected " + std::to_string(f.bytes) + " bytes, found " +
                                          std::to_string(bytes.size()));
    }
  }
  decode_epoch(path, bytes, parts, t);
  return t;
}

LoadedTrace load_trace(const fs::path& dir) {
  TraceReader reader(dir);
  LoadedTrace out{reader.manifest(), {}};
  for (std::size_t i = 0; i < reader.epoch_count(); ++i) out.epochs.push_back(reader.epoch(i));
  return out;
}

}  // namespace densedyn
