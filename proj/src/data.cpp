#include "protonet/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>

#include "byte_io.hpp"
#include "protonet/error.hpp"

namespace protonet {

Vector LabeledDataset::row_as_vector(std::size_t i) const {
  const auto r = row(i);
  return Vector(r.begin(), r.end());
}

LabeledExample LabeledDataset::example(std::size_t i) const {
  const auto r = row(i);
  return {std::vector<float>(r.begin(), r.end()), labels[i], source_ids[i]};
}

void LabeledDataset::add(std::span<const float> x, std::uint32_t label,
                         std::uint64_t source_id) {
  if (x.size() != dim) {
    throw Error(ErrorCode::kDimensionMismatch,
                "example has " + std::to_string(x.size()) + " features, dataset dim is " +
                    std::to_string(dim));
  }
  if (label >= class_names.size()) {
    throw Error(ErrorCode::kClassIndexOutOfRange, "label " + std::to_string(label));
  }
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label);
  source_ids.push_back(source_id);
}

void LabeledDataset::add(std::span<const double> x, std::uint32_t label,
                         std::uint64_t source_id) {
  std::vector<float> narrow(x.size());
  std::transform(x.begin(), x.end(), narrow.begin(),
                 [](double v) { return static_cast<float>(v); });
  add(std::span<const float>(narrow), label, source_id);
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (auto l : labels) ++counts.at(l);
  return counts;
}

std::vector<std::vector<std::size_t>> LabeledDataset::members_by_class() const {
  std::vector<std::vector<std::size_t>> members(class_names.size());
  for (std::size_t i = 0; i < labels.size(); ++i) members.at(labels[i]).push_back(i);
  return members;
}

void LabeledDataset::validate() const {
  if (features.size() != labels.size() * dim) {
    throw Error(ErrorCode::kDatasetError, "feature storage does not match size() x dim");
  }
  if (source_ids.size() != labels.size()) {
    throw Error(ErrorCode::kDatasetError, "source id count differs from example count");
  }
  for (auto l : labels) {
    if (l >= class_names.size()) {
      throw Error(ErrorCode::kClassIndexOutOfRange,
                  "label " + std::to_string(l) + " outside class table of " +
                      std::to_string(class_names.size()));
    }
  }
}

// PFEB ------------------------------------------------------------------------

namespace {
constexpr std::string_view kEmbeddingMagic = "PFEB";
constexpr std::uint32_t kEmbeddingVersion = 1;
constexpr std::size_t kEmbeddingHeaderBytes = 28;
}  // namespace

std::string encode_embeddings(const LabeledDataset& dataset) {
  dataset.validate();
  detail::ByteWriter w;
  w.bytes(kEmbeddingMagic);
  w.uint<std::uint32_t>(kEmbeddingVersion);
  w.uint<std::uint64_t>(dataset.size());
  w.uint<std::uint64_t>(dataset.dim);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(dataset.n_classes()));
  for (const auto& name : dataset.class_names) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw Error(ErrorCode::kInvalidArgument, "class name longer than 65535 bytes");
    }
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    w.uint<std::uint32_t>(dataset.labels[i]);
    for (float v : dataset.row(i)) w.f32(v);
  }
  return w.data();
}

LabeledDataset decode_embeddings(std::string_view bytes) {
  if (bytes.size() < kEmbeddingMagic.size() ||
      bytes.substr(0, kEmbeddingMagic.size()) != kEmbeddingMagic) {
    throw Error(ErrorCode::kBadMagic, "not a PFEB embedding file");
  }
  detail::ByteReader r(std::span<const char>(bytes.data(), bytes.size()), "PFEB");
  r.bytes(4);
  const auto version = r.uint<std::uint32_t>();
  if (version != kEmbeddingVersion) {
    throw Error(ErrorCode::kUnsupportedVersion, "PFEB version " + std::to_string(version));
  }
  const auto n_examples = r.uint<std::uint64_t>();
  const auto dim = r.uint<std::uint64_t>();
  const auto n_classes = r.uint<std::uint32_t>();

  LabeledDataset ds;
  ds.dim = static_cast<std::size_t>(dim);
  for (std::uint32_t c = 0; c < n_classes; ++c) {
    const auto len = r.uint<std::uint16_t>();
    ds.class_names.emplace_back(r.bytes(len));
  }

  // Guard the multiplication before trusting the header for allocation.
  const std::uint64_t row_bytes = 4 + 4 * dim;
  if (dim > (std::numeric_limits<std::uint64_t>::max() - 4) / 4 ||
      (n_examples != 0 && row_bytes > std::numeric_limits<std::uint64_t>::max() / n_examples) ||
      n_examples * row_bytes != r.remaining()) {
    throw Error(ErrorCode::kTruncatedFile,
                "PFEB header promises " + std::to_string(n_examples) + " x " +
                    std::to_string(dim) + " features but " + std::to_string(r.remaining()) +
                    " bytes follow");
  }

  ds.features.reserve(static_cast<std::size_t>(n_examples * dim));
  ds.labels.reserve(static_cast<std::size_t>(n_examples));
  for (std::uint64_t i = 0; i < n_examples; ++i) {
    const auto label = r.uint<std::uint32_t>();
    if (label >= n_classes) {
      throw Error(ErrorCode::kClassIndexOutOfRange,
                  "example " + std::to_string(i) + " has class index " + std::to_string(label) +
                      " but only " + std::to_string(n_classes) + " classes");
    }
    for (std::uint64_t j = 0; j < dim; ++j) ds.features.push_back(r.f32());
    ds.labels.push_back(label);
    ds.source_ids.push_back(i);
  }
  return ds;
}

void save_embeddings(const LabeledDataset& dataset, const std::filesystem::path& path) {
  detail::write_file(path, encode_embeddings(dataset));
}

LabeledDataset load_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(detail::read_file(path));
}

// PGM -------------------------------------------------------------------------

namespace {

class PgmHeaderParser {
 public:
  PgmHeaderParser(std::string_view bytes, const std::string& source)
      : bytes_(bytes), source_(source) {}

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorCode::kMalformedPGM, source_ + ": " + why);
  }

  std::string_view magic() {
    if (bytes_.size() < 2) fail("file too short");
    pos_ = 2;
    return bytes_.substr(0, 2);
  }

  std::size_t number() {
    skip_space_and_comments();
    std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > (1u << 30)) fail("header value too large");
      ++pos_;
    }
    if (pos_ == start) fail("expected a decimal header field");
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("missing whitespace before raster");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage decode_pgm(std::string_view bytes, const std::string& source) {
  PgmHeaderParser p(bytes, source);
  if (p.magic() != "P5") p.fail("only binary P5 PGM is supported");
  const std::size_t width = p.number();
  const std::size_t height = p.number();
  const std::size_t maxval = p.number();
  if (width == 0 || height == 0) p.fail("zero image size");
  if (maxval == 0 || maxval > 255) p.fail("maxval must be in 1..255 (8-bit)");
  const std::size_t start = p.raster_start();
  if (bytes.size() - start < width * height) p.fail("raster is truncated");

  GrayImage img{height, width, std::vector<double>(width * height)};
  for (std::size_t i = 0; i < width * height; ++i) {
    img.pixels[i] = static_cast<double>(static_cast<unsigned char>(bytes[start + i]));
  }
  return img;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  return decode_pgm(detail::read_file(path), path.string());
}

std::string encode_pgm(const GrayImage& raw) {
  std::string out = "P5\n" + std::to_string(raw.width) + " " + std::to_string(raw.height) +
                    "\n255\n";
  out.reserve(out.size() + raw.pixels.size());
  for (double v : raw.pixels) {
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L))));
  }
  return out;
}

void write_pgm(const GrayImage& raw, const std::filesystem::path& path) {
  detail::write_file(path, encode_pgm(raw));
}

ImageDataset load_image_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw Error(ErrorCode::kEmptyDataset, root.string() + " is not a directory");
  }
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  ImageDataset out;
  for (const auto& dir : class_dirs) {
    const auto label = static_cast<std::uint32_t>(out.class_names.size());
    out.class_names.push_back(dir.filename().string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    for (const auto& f : files) {
      out.images.push_back(read_pgm(f));
      out.labels.push_back(label);
      out.file_names.push_back(f.filename().string());
    }
  }
  if (out.images.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "no .pgm images under " + root.string());
  }
  return out;
}

// Resampling ------------------------------------------------------------------

namespace {

// Source coordinate of output index i under corner alignment.
double aligned_coordinate(std::size_t i, std::size_t in, std::size_t out) {
  if (out <= 1 || in <= 1) return 0.0;
  return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
}

void require_nonempty(const GrayImage& img) {
  if (img.height == 0 || img.width == 0 || img.pixels.size() != img.height * img.width) {
    throw Error(ErrorCode::kInvalidArgument, "image is empty or malformed");
  }
}

// Bilinear sample treating everything outside the image as zero.
double sample_zero_padded(const GrayImage& img, double y, double x) {
  const double fy = std::floor(y);
  const double fx = std::floor(x);
  const double wy = y - fy;
  const double wx = x - fx;
  const auto fetch = [&](double yy, double xx) {
    if (yy < 0 || xx < 0 || yy >= static_cast<double>(img.height) ||
        xx >= static_cast<double>(img.width)) {
      return 0.0;
    }
    return img.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
  };
  const double top = fetch(fy, fx) * (1 - wx) + fetch(fy, fx + 1) * wx;
  const double bottom = fetch(fy + 1, fx) * (1 - wx) + fetch(fy + 1, fx + 1) * wx;
  return top * (1 - wy) + bottom * wy;
}

}  // namespace

GrayImage resize_bilinear(const GrayImage& img, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0) {
    throw Error(ErrorCode::kZeroTargetSize, "resize target must be at least 1x1");
  }
  require_nonempty(img);
  GrayImage out{target_h, target_w, std::vector<double>(target_h * target_w)};
  for (std::size_t i = 0; i < target_h; ++i) {
    const double sy = aligned_coordinate(i, img.height, target_h);
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = sy - static_cast<double>(y0);
    for (std::size_t j = 0; j < target_w; ++j) {
      const double sx = aligned_coordinate(j, img.width, target_w);
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = sx - static_cast<double>(x0);
      const double top = std::lerp(img.at(y0, x0), img.at(y0, x1), wx);
      const double bottom = std::lerp(img.at(y1, x0), img.at(y1, x1), wx);
      out.at(i, j) = std::lerp(top, bottom, wy);
    }
  }
  return out;
}

GrayImage preprocess_image(const GrayImage& raw, std::size_t target_h, std::size_t target_w) {
  GrayImage out = resize_bilinear(raw, target_h, target_w);
  for (double& v : out.pixels) v = std::clamp(v / 255.0, 0.0, 1.0);
  return out;
}

GrayImage flip_horizontal(const GrayImage& img) {
  GrayImage out = img;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      out.at(y, x) = img.at(y, img.width - 1 - x);
    }
  }
  return out;
}

GrayImage rotate_image(const GrayImage& img, double degrees) {
  require_nonempty(img);
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double cy = static_cast<double>(img.height - 1) / 2.0;
  const double cx = static_cast<double>(img.width - 1) / 2.0;
  GrayImage out{img.height, img.width, std::vector<double>(img.pixels.size())};
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      // Inverse map from output to source.
      const double sx = c * dx + s * dy + cx;
      const double sy = -s * dx + c * dy + cy;
      out.at(y, x) = sample_zero_padded(img, sy, sx);
    }
  }
  return out;
}

GrayImage augment_image(const GrayImage& img, const AugmentationSpec& spec, Rng& rng) {
  require_nonempty(img);
  // Every draw happens unconditionally so the stream advances identically.
  const double scale = rng.uniform(spec.crop_scale_min, spec.crop_scale_max);
  const auto crop_h = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(scale * static_cast<double>(img.height))), 1,
      img.height);
  const auto crop_w = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(scale * static_cast<double>(img.width))), 1,
      img.width);
  const std::size_t top = rng.below(img.height - crop_h + 1);
  const std::size_t left = rng.below(img.width - crop_w + 1);
  const bool flip = rng.uniform() < spec.flip_probability;
  const double angle = rng.uniform(-spec.max_rotation_degrees, spec.max_rotation_degrees);

  GrayImage crop{crop_h, crop_w, std::vector<double>(crop_h * crop_w)};
  for (std::size_t y = 0; y < crop_h; ++y) {
    for (std::size_t x = 0; x < crop_w; ++x) crop.at(y, x) = img.at(top + y, left + x);
  }
  GrayImage out = resize_bilinear(crop, img.height, img.width);
  if (flip) out = flip_horizontal(out);
  if (angle != 0.0) out = rotate_image(out, angle);
  return out;
}

LabeledDataset images_to_dataset(const ImageDataset& images) {
  if (images.images.empty()) throw Error(ErrorCode::kEmptyDataset, "no images");
  LabeledDataset ds;
  ds.class_names = images.class_names;
  ds.dim = images.images.front().pixels.size();
  for (std::size_t i = 0; i < images.images.size(); ++i) {
    if (images.images[i].pixels.size() != ds.dim) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "image " + images.file_names.at(i) + " differs in size; preprocess first");
    }
    ds.add(std::span<const double>(images.images[i].pixels), images.labels[i], i);
  }
  return ds;
}

GrayImage row_to_image(const LabeledDataset& dataset, std::size_t i, std::size_t height,
                       std::size_t width) {
  if (height * width != dataset.dim) {
    throw Error(ErrorCode::kDimensionMismatch, "height x width does not match feature dim");
  }
  const auto r = dataset.row(i);
  return GrayImage{height, width, std::vector<double>(r.begin(), r.end())};
}

// Synthetic data --------------------------------------------------------------

LabeledDataset generate_blobs(std::size_t n_classes, std::span<const std::size_t> counts,
                              std::size_t dim, std::span<const Vector> means, double sigma,
                              std::uint64_t seed, std::vector<std::string> class_names) {
  if (n_classes == 0 || dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "blobs need at least one class and dimension");
  }
  if (counts.size() != n_classes || means.size() != n_classes) {
    throw Error(ErrorCode::kInvalidArgument, "counts and means must have one entry per class");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::kInvalidArgument, "sigma must be finite and non-negative");
  }
  if (class_names.empty()) {
    for (std::size_t c = 0; c < n_classes; ++c) class_names.push_back("class_" + std::to_string(c));
  }
  if (class_names.size() != n_classes) {
    throw Error(ErrorCode::kInvalidArgument, "class_names must have one entry per class");
  }
  LabeledDataset ds;
  ds.class_names = std::move(class_names);
  ds.dim = dim;
  Rng rng(seed);
  Vector x(dim);
  std::uint64_t id = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (means[c].size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "class mean has wrong dimension");
    }
    for (std::size_t i = 0; i < counts[c]; ++i) {
      for (std::size_t j = 0; j < dim; ++j) x[j] = means[c][j] + sigma * rng.normal();
      ds.add(std::span<const double>(x), static_cast<std::uint32_t>(c), id++);
    }
  }
  return ds;
}

std::vector<Vector> axis_means(std::size_t n_classes, std::size_t dim, double separation) {
  std::vector<Vector> means(n_classes, Vector(dim, 0.0));
  for (std::size_t c = 0; c < n_classes; ++c) means[c][c % dim] = separation;
  return means;
}

LabeledDataset add_nuisance_dimensions(const LabeledDataset& dataset, std::size_t extra,
                                       double sigma, std::uint64_t seed) {
  LabeledDataset out;
  out.class_names = dataset.class_names;
  out.dim = dataset.dim + extra;
  Rng rng(seed);
  std::vector<float> row(out.dim);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto r = dataset.row(i);
    std::copy(r.begin(), r.end(), row.begin());
    for (std::size_t j = 0; j < extra; ++j) {
      row[dataset.dim + j] = static_cast<float>(sigma * rng.normal());
    }
    out.add(std::span<const float>(row), dataset.labels[i], dataset.source_ids[i]);
  }
  return out;
}

LabeledDataset subset(const LabeledDataset& dataset, std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.class_names = dataset.class_names;
  out.dim = dataset.dim;
  out.features.reserve(indices.size() * dataset.dim);
  for (std::size_t i : indices) {
    out.add(dataset.row(i), dataset.labels.at(i), dataset.source_ids.at(i));
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_train_val(const LabeledDataset& dataset,
                                                          double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "split ratio must lie strictly between 0 and 1");
  }
  Rng rng(seed);
  std::vector<bool> to_train(dataset.size(), false);
  const auto members = dataset.members_by_class();
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto idx = members[c];
    const std::size_t n = idx.size();
    if (n == 0) continue;
    if (n < 2) {
      throw Error(ErrorCode::kClassTooSmall,
                  "class '" + dataset.class_names[c] + "' has " + std::to_string(n) +
                      " example; splitting needs at least 2");
    }
    for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    // Tolerance keeps products such as 0.29 * 100 from flooring one short.
    auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    for (std::size_t i = 0; i < n_train; ++i) to_train[idx[i]] = true;
  }
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    (to_train[i] ? train_idx : val_idx).push_back(i);
  }
  return {subset(dataset, train_idx), subset(dataset, val_idx)};
}

}  // namespace protonet
