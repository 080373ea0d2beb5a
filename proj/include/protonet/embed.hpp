#ifndef PROTONET_EMBED_HPP
#define PROTONET_EMBED_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protonet/core.hpp"

namespace protonet {

enum class Architecture : std::uint8_t {
  kIdentity = 0,
  kLinear = 1,
  kMlp = 2,
};

const char* architecture_name(Architecture arch) noexcept;

/// One affine layer; weights are out x in, row-major.
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  friend bool operator==(const Layer&, const Layer&) = default;
};

/*
 * The embedding function applied to frozen backbone features.
 *
 * identity: no parameters, output == input (models the untrained pipeline).
 * linear:   dims [D, M], a single affine map.
 * mlp:      dims [D, H1, ..., M], affine layers with ReLU between hidden
 *           layers and no activation after the last one.
 */
struct EmbeddingNetwork {
  Architecture architecture = Architecture::kIdentity;
  std::vector<std::size_t> layer_dims;
  std::vector<Layer> layers;

  std::size_t input_dim() const noexcept;
  std::size_t output_dim() const noexcept;
  std::size_t parameter_count() const noexcept;

  /// Throws InvalidArchitecture when dims, shapes or values are inconsistent.
  void validate() const;

  friend bool operator==(const EmbeddingNetwork&, const EmbeddingNetwork&) = default;
};

/// Weights ~ U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases zero.
EmbeddingNetwork init_network(Architecture architecture,
                              std::vector<std::size_t> layer_dims,
                              std::uint64_t seed);

Vector embed_forward(const EmbeddingNetwork& net, std::span<const double> input);

/// Parameters in checkpoint order: per layer, weights then biases.
std::vector<double> flatten_parameters(const EmbeddingNetwork& net);
void assign_parameters(EmbeddingNetwork& net, std::span<const double> flat);

struct Gradients {
  std::vector<Layer> layers;  // same shapes as the network's layers
  double loss = 0.0;

  std::vector<double> flat() const;
};

/// Episodic loss of `net` on `batch` and its gradient with respect to every
/// parameter, backpropagated through prototypes into the support points.
Gradients loss_gradients(const EmbeddingNetwork& net, const EpisodeBatch& batch);

/// Loss only; the same composition loss_gradients differentiates.
double batch_loss(const EmbeddingNetwork& net, const EpisodeBatch& batch);

struct FeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // channel-major, then row-major
};

/// index = c*(H*W) + h*W + w
Vector flatten_feature_map(const FeatureMap& map);
FeatureMap unflatten_feature_map(std::span<const double> flat, std::size_t channels,
                                 std::size_t height, std::size_t width);

/// PFNW checkpoint IO (little-endian, bit-exact).
std::string encode_network(const EmbeddingNetwork& net);
EmbeddingNetwork decode_network(std::string_view bytes);
void save_network(const EmbeddingNetwork& net, const std::filesystem::path& path);
EmbeddingNetwork load_network(const std::filesystem::path& path);

}  // namespace protonet

#endif  // PROTONET_EMBED_HPP
