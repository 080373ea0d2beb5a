#ifndef PROTONET_DATA_HPP
#define PROTONET_DATA_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "protonet/core.hpp"
#include "protonet/rng.hpp"

namespace protonet {

struct LabeledExample {
  std::vector<float> features;
  std::uint32_t label = 0;
  std::uint64_t source_id = 0;
};

/*
 * Feature vectors with global class labels. Features are held in the
 * single-precision interchange format (row-major, size() x dim); the math
 * widens each row to double when it is embedded.
 */
struct LabeledDataset {
  std::vector<std::string> class_names;
  std::size_t dim = 0;
  std::vector<float> features;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint64_t> source_ids;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t n_classes() const noexcept { return class_names.size(); }

  std::span<const float> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
  Vector row_as_vector(std::size_t i) const;
  LabeledExample example(std::size_t i) const;

  void add(std::span<const float> x, std::uint32_t label, std::uint64_t source_id);
  void add(std::span<const double> x, std::uint32_t label, std::uint64_t source_id);

  /// Example counts per class, indexed by class id.
  std::vector<std::size_t> class_counts() const;
  /// Dataset indices of each class, ascending.
  std::vector<std::vector<std::size_t>> members_by_class() const;

  /// Throws DatasetError / ClassIndexOutOfRange on inconsistent contents.
  void validate() const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

// PFEB embedding interchange ------------------------------------------------

std::string encode_embeddings(const LabeledDataset& dataset);
LabeledDataset decode_embeddings(std::string_view bytes);
void save_embeddings(const LabeledDataset& dataset, const std::filesystem::path& path);
LabeledDataset load_embeddings(const std::filesystem::path& path);

// Images ----------------------------------------------------------------------

/// Grayscale image, row-major. Raw images hold 0..255; preprocessed ones [0,1].
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct ImageDataset {
  std::vector<std::string> class_names;
  std::vector<GrayImage> images;
  std::vector<std::uint32_t> labels;
  std::vector<std::string> file_names;
};

/// Binary 8-bit PGM (P5) only.
GrayImage decode_pgm(std::string_view bytes, const std::string& source = "pgm");
GrayImage read_pgm(const std::filesystem::path& path);
std::string encode_pgm(const GrayImage& raw);
void write_pgm(const GrayImage& raw, const std::filesystem::path& path);

/// root/<class_name>/<image>.pgm; classes sorted by name, files by filename.
ImageDataset load_image_dataset(const std::filesystem::path& root);

/// Corner-aligned bilinear resize.
GrayImage resize_bilinear(const GrayImage& img, std::size_t target_h, std::size_t target_w);

/// Bilinear resize to the target size followed by division by 255.
GrayImage preprocess_image(const GrayImage& raw, std::size_t target_h, std::size_t target_w);

struct AugmentationSpec {
  double crop_scale_min = 0.8;
  double crop_scale_max = 1.0;
  double flip_probability = 0.5;
  double max_rotation_degrees = 10.0;
};

GrayImage flip_horizontal(const GrayImage& img);
/// Rotation about the image centre, bilinear, zero padding outside the source.
GrayImage rotate_image(const GrayImage& img, double degrees);

/// Random crop (resized back), horizontal flip, then rotation, in that order.
GrayImage augment_image(const GrayImage& img, const AugmentationSpec& spec, Rng& rng);

/// Flattened pixels of each image as one feature row.
LabeledDataset images_to_dataset(const ImageDataset& images);
GrayImage row_to_image(const LabeledDataset& dataset, std::size_t i, std::size_t height,
                       std::size_t width);

// Synthetic data and splitting ---------------------------------------------

/// Gaussian blobs: class c has counts[c] points ~ N(means[c], sigma^2 I).
LabeledDataset generate_blobs(std::size_t n_classes, std::span<const std::size_t> counts,
                              std::size_t dim, std::span<const Vector> means, double sigma,
                              std::uint64_t seed, std::vector<std::string> class_names = {});

/// separation * e_(c mod dim) for each class c.
std::vector<Vector> axis_means(std::size_t n_classes, std::size_t dim, double separation);

/// Appends `extra` class-independent N(0, sigma^2) dimensions to every row.
LabeledDataset add_nuisance_dimensions(const LabeledDataset& dataset, std::size_t extra,
                                       double sigma, std::uint64_t seed);

/// Stratified split: floor(ratio * n_c) of each class to train (at least one
/// example on each side), the rest to validation. Both halves keep the
/// original relative order.
std::pair<LabeledDataset, LabeledDataset> split_train_val(const LabeledDataset& dataset,
                                                          double ratio, std::uint64_t seed);

/// Subset in the given index order.
LabeledDataset subset(const LabeledDataset& dataset, std::span<const std::size_t> indices);

}  // namespace protonet

#endif  // PROTONET_DATA_HPP
