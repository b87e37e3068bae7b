#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "densedyn/pgm.hpp"
#include "densedyn/prng.hpp"
#include "densedyn/tensor.hpp"

namespace densedyn {

enum class Split : std::uint8_t { kTrain, kHeldout };

struct ExemplarMeta {
  std::string identity;
  int pose = -1;
  int illumination = -1;
  std::string source;  // empty for synthetic exemplars
};

/// One grayscale exemplar in [0,1]. The network input replicates it into
/// every input channel; `pixels(c)` materializes that [c,H,W] tensor.
struct ImageExemplar {
  Tensor gray;  // [H,W]
  int label = 0;
  ExemplarMeta meta;
  Split split = Split::kTrain;
  bool probe = false;

  Tensor pixels(std::size_t channels = 3) const;
};

struct DenseDataset {
  std::vector<ImageExemplar> exemplars;
  std::vector<std::string> class_names;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::size_t image_size() const;
  std::vector<std::size_t> indices(Split split) const;
  std::vector<std::size_t> probe_indices() const;
  std::vector<std::size_t> class_counts() const;
};

struct SplitOptions {
  double heldout_fraction = 0.1;
  /// Probe exemplars per class drawn from the training split; 0 means "all".
  std::size_t probe_per_class = 40;
};

/// Seeded, per-class assignment of the held-out split and the probe set.
/// Depends only on exemplar order, labels and the seed.
void assign_splits(DenseDataset& dataset, const SplitOptions& options, std::uint64_t seed);

/// Throws unless every exemplar has the dataset's image shape, pixels in
/// [0,1] and a valid label, and every class is populated.
void validate_dataset(const DenseDataset& dataset);

// ---------------------------------------------------------------------------
// Preprocessing and Yale-style ingestion.
// ---------------------------------------------------------------------------

struct CropRect {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t w = 0;
  std::size_t h = 0;
};

/// Crop, bilinear-resize to out_size x out_size (align-corners=false sampling),
/// and replicate into three channels: returns [3,out,out].
Tensor preprocess(const GrayImage& image, const CropRect& crop, std::size_t out_size = 128);
/// Same as preprocess but keeps the single grayscale plane [out,out].
Tensor crop_resize(const GrayImage& image, const CropRect& crop, std::size_t out_size);

/// Default crop: centered square with side 85% of the image height (clipped to the width).
CropRect default_crop(std::size_t width, std::size_t height);

struct CropTable {
  struct Entry {
    std::string identity;
    CropRect rect;
  };
  std::vector<Entry> entries;

  std::optional<CropRect> find(const std::string& identity) const;
};

/// CSV with header `identity,x,y,w,h`.
CropTable parse_crop_table(const std::string& text);
CropTable load_crop_table(const std::filesystem::path& path);

class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& what, std::vector<std::string> paths)
      : std::runtime_error(what), paths_(std::move(paths)) {}
  const std::vector<std::string>& paths() const noexcept { return paths_; }

 private:
  std::vector<std::string> paths_;
};

struct AssembleOptions {
  std::vector<std::string> identities;  // label order
  CropTable crops;                      // identities without an entry use default_crop
  std::size_t image_size = 128;
  SplitOptions splits;
  std::uint64_t seed = 7;
};

/// Loads root/<identity>/*.pgm for each identity in sorted path order.
DenseDataset assemble_dataset(const std::filesystem::path& root, const AssembleOptions& options);

// ---------------------------------------------------------------------------
// Synthetic dense-sample generator.
// ---------------------------------------------------------------------------

struct SynthSpec {
  std::size_t num_classes = 5;
  std::size_t exemplars_per_class = 512;
  std::size_t image_size = 128;
  std::uint64_t prototype_seed = 7;
  /// Peak brightness change of the random directional illumination ramp.
  double illumination = 0.1;
  /// Maximum translation in pixels (uniform integer shift in each axis).
  std::size_t jitter_px = 2;
  /// Standard deviation of the per-pixel multiplicative noise factor.
  double noise_sigma = 0.05;
  /// Per-class scale of the class-specific pattern added to a shared base
  /// image; larger is easier. Shorter lists repeat the last value.
  std::vector<double> class_contrast = {2.0, 0.15};

  void validate() const;
};

struct SynthResult {
  DenseDataset dataset;
  std::vector<Tensor> prototypes;  // [H,W] per class
};

/// Exemplars are generated class-major; splits are assigned with `splits`.
SynthResult synth_generate_full(const SynthSpec& spec, std::uint64_t seed, const SplitOptions& splits = {});
DenseDataset synth_generate(const SynthSpec& spec, std::uint64_t seed, const SplitOptions& splits = {});

/// Fraction of exemplars whose nearest prototype (squared L2) is their own class.
double nearest_prototype_accuracy(const DenseDataset& dataset, std::span<const Tensor> prototypes);

}  // namespace densedyn
