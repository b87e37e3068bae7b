#include "densedyn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

namespace densedyn {

Tensor ImageExemplar::pixels(std::size_t channels) const {
  const std::size_t h = gray.dim(0), w = gray.dim(1);
  Tensor out({channels, h, w});
  for (std::size_t c = 0; c < channels; ++c) {
    std::copy(gray.data().begin(), gray.data().end(), out.data().begin() + c * h * w);
  }
  return out;
}

std::size_t DenseDataset::image_size() const {
  if (exemplars.empty()) return 0;
  return exemplars.front().gray.dim(0);
}

std::vector<std::size_t> DenseDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    if (exemplars[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> DenseDataset::probe_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    if (exemplars[i].probe) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> DenseDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (const auto& e : exemplars) counts.at(static_cast<std::size_t>(e.label))++;
  return counts;
}

void assign_splits(DenseDataset& dataset, const SplitOptions& options, std::uint64_t seed) {
  if (!(options.heldout_fraction >= 0.0 && options.heldout_fraction < 1.0)) {
    throw std::invalid_argument("assign_splits: heldout_fraction must lie in [0, 1)");
  }
  Prng prng = Prng(seed).derive(0x5b1175);
  for (std::size_t k = 0; k < dataset.num_classes(); ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.exemplars.size(); ++i) {
      if (dataset.exemplars[i].label == static_cast<int>(k)) members.push_back(i);
    }
    prng.shuffle(std::span<std::size_t>(members));
    const auto heldout = static_cast<std::size_t>(std::lround(options.heldout_fraction * members.size()));
    std::size_t probes = 0;
    for (std::size_t j = 0; j < members.size(); ++j) {
      auto& e = dataset.exemplars[members[j]];
      e.split = j < heldout ? Split::kHeldout : Split::kTrain;
      e.probe = false;
      if (e.split == Split::kTrain && (options.probe_per_class == 0 || probes < options.probe_per_class)) {
        e.probe = true;
        ++probes;
      }
    }
  }
}

void validate_dataset(const DenseDataset& dataset) {
  if (dataset.exemplars.empty()) throw std::invalid_argument("dataset is empty");
  const std::size_t s = dataset.image_size();
  for (std::size_t i = 0; i < dataset.exemplars.size(); ++i) {
    const auto& e = dataset.exemplars[i];
    if (e.gray.shape() != Shape{s, s}) throw ShapeError("exemplar " + std::to_string(i) + " has inconsistent shape");
    if (e.label < 0 || static_cast<std::size_t>(e.label) >= dataset.num_classes()) {
      throw std::invalid_argument("exemplar " + std::to_string(i) + " has label outside the class list");
    }
    for (double v : e.gray.data()) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("exemplar " + std::to_string(i) + " has pixels outside [0,1]");
    }
  }
  const auto counts = dataset.class_counts();
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) throw std::invalid_argument("class " + dataset.class_names[k] + " has no exemplars");
  }
}

// ---------------------------------------------------------------------------

Tensor crop_resize(const GrayImage& image, const CropRect& crop, std::size_t out_size) {
  if (crop.w == 0 || crop.h == 0 || crop.x + crop.w > image.width || crop.y + crop.h > image.height) {
    throw std::out_of_range("crop (" + std::to_string(crop.x) + "," + std::to_string(crop.y) + "," +
                            std::to_string(crop.w) + "," + std::to_string(crop.h) + ") exceeds image " +
                            std::to_string(image.width) + "x" + std::to_string(image.height));
  }
  if (out_size == 0) throw std::invalid_argument("crop_resize: out_size must be positive");
  Tensor out({out_size, out_size});
  const double sx = static_cast<double>(crop.w) / static_cast<double>(out_size);
  const double sy = static_cast<double>(crop.h) / static_cast<double>(out_size);
  auto axis = [](std::size_t dst, double scale, std::size_t extent) {
    double src = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(extent - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, extent - 1);
    return std::tuple{i0, i1, src - static_cast<double>(i0)};
  };
  for (std::size_t oy = 0; oy < out_size; ++oy) {
    const auto [y0, y1, fy] = axis(oy, sy, crop.h);
    for (std::size_t ox = 0; ox < out_size; ++ox) {
      const auto [x0, x1, fx] = axis(ox, sx, crop.w);
      const double a = image.at(crop.x + x0, crop.y + y0), b = image.at(crop.x + x1, crop.y + y0);
      const double c = image.at(crop.x + x0, crop.y + y1), d = image.at(crop.x + x1, crop.y + y1);
      const double top = a + (b - a) * fx;
      const double bottom = c + (d - c) * fx;
      out.at({oy, ox}) = top + (bottom - top) * fy;
    }
  }
  return out;
}

Tensor preprocess(const GrayImage& image, const CropRect& crop, std::size_t out_size) {
  ImageExemplar e;
  e.gray = crop_resize(image, crop, out_size);
  return e.pixels(3);
}

CropRect default_crop(std::size_t width, std::size_t height) {
  auto side = static_cast<std::size_t>(std::lround(0.85 * static_cast<double>(height)));
  side = std::clamp<std::size_t>(side, 1, std::min(width, height));
  return {(width - side) / 2, (height - side) / 2, side, side};
}

std::optional<CropRect> CropTable::find(const std::string& identity) const {
  for (const auto& e : entries) {
    if (e.identity == identity) return e.rect;
  }
  return std::nullopt;
}

CropTable parse_crop_table(const std::string& text) {
  CropTable table;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!header_seen) {
      header_seen = true;
      if (cells != std::vector<std::string>{"identity", "x", "y", "w", "h"}) {
        throw std::invalid_argument("crop table line " + std::to_string(line_no) + ": header must be identity,x,y,w,h");
      }
      continue;
    }
    if (cells.size() != 5) {
      throw std::invalid_argument("crop table line " + std::to_string(line_no) + ": expected 5 columns");
    }
    try {
      table.entries.push_back({cells[0], {std::stoul(cells[1]), std::stoul(cells[2]), std::stoul(cells[3]),
                                          std::stoul(cells[4])}});
    } catch (const std::logic_error&) {
      throw std::invalid_argument("crop table line " + std::to_string(line_no) + ": non-numeric rectangle");
    }
  }
  return table;
}

CropTable load_crop_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open crop table " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_crop_table(ss.str());
}

namespace {

int parse_pose(const std::string& stem) {
  static const std::regex pose_re("_P(\\d+)");
  std::smatch m;
  if (std::regex_search(stem, m, pose_re)) return std::stoi(m[1].str());
  return -1;
}

}  // namespace

DenseDataset assemble_dataset(const std::filesystem::path& root, const AssembleOptions& options) {
  namespace fs = std::filesystem;
  if (options.identities.empty()) throw std::invalid_argument("assemble_dataset: no identities requested");
  std::vector<std::string> missing;
  for (const auto& id : options.identities) {
    if (!fs::is_directory(root / id)) missing.push_back((root / id).string());
  }
  if (!missing.empty()) throw DatasetError("assemble_dataset: missing identity directories", missing);

  DenseDataset ds;
  ds.class_names = options.identities;
  std::vector<std::string> unreadable;
  for (std::size_t label = 0; label < options.identities.size(); ++label) {
    const std::string& id = options.identities[label];
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root / id)) {
      const auto& p = entry.path();
      if (!entry.is_regular_file() || p.extension() != ".pgm") continue;
      // Ambient (unlit) frames are not part of the pose x illumination grid.
      if (p.stem().string().find("Ambient") != std::string::npos) continue;
      files.push_back(p);
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      unreadable.push_back((root / id).string() + " (no .pgm files)");
      continue;
    }
    std::map<int, int> per_pose;
    for (const auto& f : files) {
      try {
        const GrayImage img = read_pgm(f);
        const CropRect crop = options.crops.find(id).value_or(default_crop(img.width, img.height));
        ImageExemplar e;
        e.gray = crop_resize(img, crop, options.image_size);
        e.label = static_cast<int>(label);
        e.meta.identity = id;
        e.meta.pose = parse_pose(f.stem().string());
        e.meta.illumination = per_pose[e.meta.pose]++;
        e.meta.source = f.string();
        ds.exemplars.push_back(std::move(e));
      } catch (const std::exception& ex) {
        unreadable.push_back(f.string() + " (" + ex.what() + ")");
      }
    }
  }
  if (!unreadable.empty()) throw DatasetError("assemble_dataset: unreadable inputs", unreadable);
  assign_splits(ds, options.splits, options.seed);
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic generator.
// ---------------------------------------------------------------------------

void SynthSpec::validate() const {
  if (num_classes < 1) throw std::invalid_argument("SynthSpec: num_classes must be >= 1");
  if (exemplars_per_class < 1) throw std::invalid_argument("SynthSpec: exemplars_per_class must be >= 1");
  if (image_size < 4) throw std::invalid_argument("SynthSpec: image_size must be >= 4");
  if (illumination < 0.0 || noise_sigma < 0.0) throw std::invalid_argument("SynthSpec: perturbations must be >= 0");
  if (jitter_px >= image_size / 2) throw std::invalid_argument("SynthSpec: jitter_px too large for image");
  if (class_contrast.empty()) throw std::invalid_argument("SynthSpec: class_contrast must not be empty");
  for (double c : class_contrast) {
    if (c < 0.0) throw std::invalid_argument("SynthSpec: class_contrast entries must be >= 0");
  }
}

namespace {

/// Zero-mean, unit-variance smooth field: a sum of random Gaussian blobs and
/// low-frequency cosines.
Tensor smooth_field(std::size_t s, Prng& prng) {
  Tensor f({s, s});
  const double sd = static_cast<double>(s);
  constexpr int kBlobs = 8;
  constexpr int kWaves = 3;
  struct Blob { double cx, cy, r, amp; };
  struct Wave { double fx, fy, phase, amp; };
  Blob blobs[kBlobs];
  Wave waves[kWaves];
  for (auto& b : blobs) {
    b.cx = prng.uniform(0.1, 0.9) * sd;
    b.cy = prng.uniform(0.1, 0.9) * sd;
    b.r = prng.uniform(0.06, 0.2) * sd;
    b.amp = prng.uniform(-1.0, 1.0);
  }
  for (auto& w : waves) {
    w.fx = prng.uniform(-3.0, 3.0);
    w.fy = prng.uniform(-3.0, 3.0);
    w.phase = prng.uniform(0.0, 6.283185307179586);
    w.amp = prng.uniform(0.2, 0.6);
  }
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      double v = 0.0;
      for (const auto& b : blobs) {
        const double dx = static_cast<double>(x) - b.cx, dy = static_cast<double>(y) - b.cy;
        v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.r * b.r));
      }
      for (const auto& w : waves) {
        v += w.amp * std::cos(6.283185307179586 * (w.fx * static_cast<double>(x) + w.fy * static_cast<double>(y)) / sd +
                              w.phase);
      }
      f.at({y, x}) = v;
    }
  }
  double mean = 0.0;
  for (double v : f.data()) mean += v;
  mean /= static_cast<double>(f.size());
  double var = 0.0;
  for (double v : f.data()) var += (v - mean) * (v - mean);
  const double sdv = std::sqrt(var / static_cast<double>(f.size()));
  for (auto& v : f.data()) v = (v - mean) / sdv;
  return f;
}

double contrast_for(const SynthSpec& spec, std::size_t k) {
  return spec.class_contrast[std::min(k, spec.class_contrast.size() - 1)];
}

}  // namespace

SynthResult synth_generate_full(const SynthSpec& spec, std::uint64_t seed, const SplitOptions& splits) {
  spec.validate();
  const std::size_t s = spec.image_size;
  const Prng root(seed);
  Prng proto_rng = root.derive(0x9807 ^ spec.prototype_seed);
  Prng sample_rng = root.derive(2);

  SynthResult result;
  const Tensor base = smooth_field(s, proto_rng);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    const Tensor own = smooth_field(s, proto_rng);
    const double contrast = contrast_for(spec, k);
    Tensor proto({s, s});
    for (std::size_t i = 0; i < proto.size(); ++i) {
      proto[i] = std::clamp(0.5 + 0.12 * base[i] + 0.12 * contrast * own[i], 0.0, 1.0);
    }
    result.prototypes.push_back(std::move(proto));
    result.dataset.class_names.push_back("class_" + std::to_string(k));
  }

  const auto jitter = static_cast<long>(spec.jitter_px);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    const Tensor& proto = result.prototypes[k];
    for (std::size_t n = 0; n < spec.exemplars_per_class; ++n) {
      const long dx = jitter ? static_cast<long>(sample_rng.below(2 * jitter + 1)) - jitter : 0;
      const long dy = jitter ? static_cast<long>(sample_rng.below(2 * jitter + 1)) - jitter : 0;
      const double angle = sample_rng.uniform(0.0, 6.283185307179586);
      const double strength = spec.illumination * sample_rng.uniform();
      const double gx = std::cos(angle) * strength, gy = std::sin(angle) * strength;

      ImageExemplar e;
      e.gray = Tensor({s, s});
      e.label = static_cast<int>(k);
      e.meta.identity = result.dataset.class_names[k];
      e.meta.pose = static_cast<int>(n);
      for (std::size_t y = 0; y < s; ++y) {
        const long sy = std::clamp<long>(static_cast<long>(y) - dy, 0, static_cast<long>(s) - 1);
        for (std::size_t x = 0; x < s; ++x) {
          const long sx = std::clamp<long>(static_cast<long>(x) - dx, 0, static_cast<long>(s) - 1);
          const double u = static_cast<double>(x) / static_cast<double>(s - 1) - 0.5;
          const double w = static_cast<double>(y) / static_cast<double>(s - 1) - 0.5;
          double v = proto.at({static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)});
          v *= 1.0 + 2.0 * (gx * u + gy * w);
          if (spec.noise_sigma > 0.0) v *= 1.0 + spec.noise_sigma * sample_rng.normal();
          e.gray.at({y, x}) = std::clamp(v, 0.0, 1.0);
        }
      }
      result.dataset.exemplars.push_back(std::move(e));
    }
  }
  assign_splits(result.dataset, splits, seed);
  return result;
}

DenseDataset synth_generate(const SynthSpec& spec, std::uint64_t seed, const SplitOptions& splits) {
  return synth_generate_full(spec, seed, splits).dataset;
}

double nearest_prototype_accuracy(const DenseDataset& dataset, std::span<const Tensor> prototypes) {
  if (dataset.exemplars.empty()) throw std::invalid_argument("nearest_prototype_accuracy: empty dataset");
  std::size_t correct = 0;
  for (const auto& e : dataset.exemplars) {
    std::size_t best = 0;
    double best_d = 0.0;
    for (std::size_t k = 0; k < prototypes.size(); ++k) {
      require_shape(prototypes[k], e.gray.shape(), "nearest_prototype_accuracy prototype");
      double d = 0.0;
      for (std::size_t i = 0; i < e.gray.size(); ++i) {
        const double diff = e.gray[i] - prototypes[k][i];
        d += diff * diff;
      }
      if (k == 0 || d < best_d) {
        best = k;
        best_d = d;
      }
    }
    if (static_cast<int>(best) == e.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.exemplars.size());
}

}  // namespace densedyn
