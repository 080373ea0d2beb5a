#include "protonet/embed.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "byte_io.hpp"
#include "protonet/error.hpp"
#include "protonet/rng.hpp"

namespace protonet {

const char* architecture_name(Architecture arch) noexcept {
  switch (arch) {
    case Architecture::kIdentity: return "identity";
    case Architecture::kLinear: return "linear";
    case Architecture::kMlp: return "mlp";
  }
  return "unknown";
}

std::size_t EmbeddingNetwork::input_dim() const noexcept {
  return layer_dims.empty() ? 0 : layer_dims.front();
}

std::size_t EmbeddingNetwork::output_dim() const noexcept {
  return layer_dims.empty() ? 0 : layer_dims.back();
}

std::size_t EmbeddingNetwork::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.biases.size();
  return n;
}

namespace {

void check_dims(Architecture arch, const std::vector<std::size_t>& dims) {
  const auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::kInvalidArchitecture,
                std::string(architecture_name(arch)) + ": " + why);
  };
  if (dims.empty()) fail("layer_dims is empty");
  for (std::size_t d : dims) {
    if (d == 0) fail("layer dimension is zero");
  }
  switch (arch) {
    case Architecture::kIdentity:
      if (dims.size() > 2) fail("identity takes [D] or [D, D]");
      if (dims.front() != dims.back()) fail("identity requires D == M");
      break;
    case Architecture::kLinear:
      if (dims.size() != 2) fail("linear takes exactly [D, M]");
      break;
    case Architecture::kMlp:
      if (dims.size() < 3) fail("mlp needs at least one hidden layer");
      break;
    default:
      fail("unknown architecture tag");
  }
}

std::size_t affine_count(Architecture arch, const std::vector<std::size_t>& dims) {
  return arch == Architecture::kIdentity ? 0 : dims.size() - 1;
}

// Forward pass keeping every layer's pre-activation and activation.
struct Trace {
  std::vector<Vector> pre;  // z_l, one per layer
  std::vector<Vector> act;  // a_0 = input, a_l = relu(z_l) or z_L
};

void affine(const Layer& layer, std::span<const double> x, Vector& out) {
  out.assign(layer.biases.begin(), layer.biases.end());
  for (std::size_t r = 0; r < layer.out; ++r) {
    const double* w = layer.weights.data() + r * layer.in;
    double s = 0.0;
    for (std::size_t c = 0; c < layer.in; ++c) s += w[c] * x[c];
    out[r] += s;
  }
}

void check_input(const EmbeddingNetwork& net, std::span<const double> input) {
  if (input.size() != net.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "network expects input dimension " + std::to_string(net.input_dim()) +
                    ", got " + std::to_string(input.size()));
  }
  require_finite(input, "network input");
}

Trace trace_forward(const EmbeddingNetwork& net, std::span<const double> input) {
  check_input(net, input);
  Trace t;
  t.act.emplace_back(input.begin(), input.end());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Vector z;
    affine(net.layers[l], t.act.back(), z);
    Vector a = z;
    if (l + 1 < net.layers.size()) {
      for (double& v : a) v = std::max(0.0, v);
    }
    t.pre.push_back(std::move(z));
    t.act.push_back(std::move(a));
  }
  return t;
}

void validate_batch(const EmbeddingNetwork& net, const EpisodeBatch& batch) {
  if (batch.support.size() != batch.support_labels.size() ||
      batch.query.size() != batch.query_labels.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "episode batch labels and points differ in count");
  }
  for (const auto& x : batch.support) {
    if (x.size() != net.input_dim()) {
      throw Error(ErrorCode::kDimensionMismatch, "support feature length differs from network input");
    }
  }
  for (const auto& x : batch.query) {
    if (x.size() != net.input_dim()) {
      throw Error(ErrorCode::kDimensionMismatch, "query feature length differs from network input");
    }
  }
}

}  // namespace

void EmbeddingNetwork::validate() const {
  check_dims(architecture, layer_dims);
  const std::size_t n = affine_count(architecture, layer_dims);
  if (layers.size() != n) {
    throw Error(ErrorCode::kInvalidArchitecture, "layer count does not match layer_dims");
  }
  for (std::size_t l = 0; l < n; ++l) {
    const Layer& layer = layers[l];
    if (layer.in != layer_dims[l] || layer.out != layer_dims[l + 1] ||
        layer.weights.size() != layer.in * layer.out || layer.biases.size() != layer.out) {
      throw Error(ErrorCode::kInvalidArchitecture,
                  "layer " + std::to_string(l) + " shape disagrees with layer_dims");
    }
    for (double w : layer.weights) {
      if (!std::isfinite(w)) throw Error(ErrorCode::kInvalidArchitecture, "non-finite weight");
    }
    for (double b : layer.biases) {
      if (!std::isfinite(b)) throw Error(ErrorCode::kInvalidArchitecture, "non-finite bias");
    }
  }
}

EmbeddingNetwork init_network(Architecture architecture, std::vector<std::size_t> layer_dims,
                              std::uint64_t seed) {
  check_dims(architecture, layer_dims);
  EmbeddingNetwork net;
  net.architecture = architecture;
  net.layer_dims = std::move(layer_dims);
  Rng rng(seed);
  const std::size_t n = affine_count(architecture, net.layer_dims);
  for (std::size_t l = 0; l < n; ++l) {
    Layer layer;
    layer.in = net.layer_dims[l];
    layer.out = net.layer_dims[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    layer.weights.resize(layer.in * layer.out);
    for (double& w : layer.weights) w = rng.uniform(-limit, limit);
    layer.biases.assign(layer.out, 0.0);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Vector embed_forward(const EmbeddingNetwork& net, std::span<const double> input) {
  check_input(net, input);
  Vector current(input.begin(), input.end());
  Vector next;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    affine(net.layers[l], current, next);
    if (l + 1 < net.layers.size()) {
      for (double& v : next) v = std::max(0.0, v);
    }
    current.swap(next);
  }
  return current;
}

std::vector<double> flatten_parameters(const EmbeddingNetwork& net) {
  std::vector<double> flat;
  flat.reserve(net.parameter_count());
  for (const auto& l : net.layers) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.biases.begin(), l.biases.end());
  }
  return flat;
}

void assign_parameters(EmbeddingNetwork& net, std::span<const double> flat) {
  if (flat.size() != net.parameter_count()) {
    throw Error(ErrorCode::kShapeMismatch,
                "expected " + std::to_string(net.parameter_count()) + " parameters, got " +
                    std::to_string(flat.size()));
  }
  std::size_t pos = 0;
  for (auto& l : net.layers) {
    std::copy_n(flat.begin() + pos, l.weights.size(), l.weights.begin());
    pos += l.weights.size();
    std::copy_n(flat.begin() + pos, l.biases.size(), l.biases.begin());
    pos += l.biases.size();
  }
}

std::vector<double> Gradients::flat() const {
  std::vector<double> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.weights.begin(), l.weights.end());
    out.insert(out.end(), l.biases.begin(), l.biases.end());
  }
  return out;
}

double batch_loss(const EmbeddingNetwork& net, const EpisodeBatch& batch) {
  validate_batch(net, batch);
  std::vector<Vector> support;
  support.reserve(batch.support.size());
  for (const auto& x : batch.support) support.push_back(embed_forward(net, x));
  std::vector<Vector> query;
  query.reserve(batch.query.size());
  for (const auto& x : batch.query) query.push_back(embed_forward(net, x));
  const PrototypeSet protos = compute_prototypes(support, batch.support_labels, batch.n_classes);
  return episode_loss(query, batch.query_labels, protos);
}

Gradients loss_gradients(const EmbeddingNetwork& net, const EpisodeBatch& batch) {
  validate_batch(net, batch);
  if (batch.query.empty()) throw Error(ErrorCode::kEmptyQuerySet, "episode has no queries");

  std::vector<Trace> support_trace;
  std::vector<Vector> support_out;
  for (const auto& x : batch.support) {
    support_trace.push_back(trace_forward(net, x));
    support_out.push_back(support_trace.back().act.back());
  }
  std::vector<Trace> query_trace;
  std::vector<Vector> query_out;
  for (const auto& x : batch.query) {
    query_trace.push_back(trace_forward(net, x));
    query_out.push_back(query_trace.back().act.back());
  }

  const PrototypeSet protos =
      compute_prototypes(support_out, batch.support_labels, batch.n_classes);
  const std::size_t n_classes = protos.size();
  const std::size_t dim = protos.dim();
  const double inv_q = 1.0 / static_cast<double>(batch.query.size());

  Gradients grads;
  std::vector<Vector> proto_grad(n_classes, Vector(dim, 0.0));
  std::vector<Vector> query_grad(batch.query.size(), Vector(dim, 0.0));
  double loss = 0.0;

  // L_q = d_{q,y} + log sum_k exp(-d_{q,k});  dL_q/dd_{q,k} = [k == y] - p_{q,k}
  // d_{q,k} = |z_q - c_k|^2, so dd/dz_q = 2(z_q - c_k) and dd/dc_k = -2(z_q - c_k).
  for (std::size_t q = 0; q < batch.query.size(); ++q) {
    const auto d = distances_to_prototypes(query_out[q], protos);
    const std::size_t y = batch.query_labels[q];
    loss += negative_log_posterior(d, y);
    const auto post = posterior_from_distances(d);
    for (std::size_t k = 0; k < n_classes; ++k) {
      const double coeff = ((k == y ? 1.0 : 0.0) - post.probabilities[k]) * inv_q;
      if (coeff == 0.0) continue;
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = 2.0 * (query_out[q][j] - protos.prototypes[k][j]);
        query_grad[q][j] += coeff * diff;
        proto_grad[k][j] -= coeff * diff;
      }
    }
  }
  grads.loss = loss * inv_q;

  grads.layers.reserve(net.layers.size());
  for (const auto& l : net.layers) {
    Layer g;
    g.in = l.in;
    g.out = l.out;
    g.weights.assign(l.weights.size(), 0.0);
    g.biases.assign(l.biases.size(), 0.0);
    grads.layers.push_back(std::move(g));
  }
  if (net.layers.empty()) return grads;

  const auto backprop = [&](const Trace& t, Vector g) {
    for (std::size_t l = net.layers.size(); l-- > 0;) {
      const Layer& layer = net.layers[l];
      Layer& gl = grads.layers[l];
      const Vector& in = t.act[l];
      for (std::size_t r = 0; r < layer.out; ++r) {
        if (g[r] == 0.0) continue;
        double* gw = gl.weights.data() + r * layer.in;
        for (std::size_t c = 0; c < layer.in; ++c) gw[c] += g[r] * in[c];
        gl.biases[r] += g[r];
      }
      if (l == 0) break;
      Vector prev(layer.in, 0.0);
      for (std::size_t r = 0; r < layer.out; ++r) {
        if (g[r] == 0.0) continue;
        const double* w = layer.weights.data() + r * layer.in;
        for (std::size_t c = 0; c < layer.in; ++c) prev[c] += w[c] * g[r];
      }
      // ReLU derivative taken as 0 at the kink.
      const Vector& z = t.pre[l - 1];
      for (std::size_t c = 0; c < layer.in; ++c) {
        if (z[c] <= 0.0) prev[c] = 0.0;
      }
      g.swap(prev);
    }
  };

  std::vector<std::size_t> class_size(n_classes, 0);
  for (std::size_t label : batch.support_labels) ++class_size[label];
  for (std::size_t s = 0; s < batch.support.size(); ++s) {
    const std::size_t k = batch.support_labels[s];
    Vector g = proto_grad[k];
    const double inv = 1.0 / static_cast<double>(class_size[k]);
    for (double& v : g) v *= inv;
    backprop(support_trace[s], std::move(g));
  }
  for (std::size_t q = 0; q < batch.query.size(); ++q) {
    backprop(query_trace[q], std::move(query_grad[q]));
  }
  return grads;
}

Vector flatten_feature_map(const FeatureMap& map) {
  if (map.channels == 0 || map.height == 0 || map.width == 0 ||
      map.values.size() != map.channels * map.height * map.width) {
    throw Error(ErrorCode::kShapeMismatch, "feature map shape disagrees with value count");
  }
  // Storage order already is channel-major, row-major.
  return Vector(map.values.begin(), map.values.end());
}

FeatureMap unflatten_feature_map(std::span<const double> flat, std::size_t channels,
                                 std::size_t height, std::size_t width) {
  if (channels == 0 || height == 0 || width == 0 ||
      flat.size() != channels * height * width) {
    throw Error(ErrorCode::kShapeMismatch, "flat length does not equal C*H*W");
  }
  return FeatureMap{channels, height, width, Vector(flat.begin(), flat.end())};
}

namespace {
constexpr std::string_view kNetworkMagic = "PFNW";
constexpr std::uint32_t kNetworkVersion = 1;
}  // namespace

std::string encode_network(const EmbeddingNetwork& net) {
  net.validate();
  detail::ByteWriter w;
  w.bytes(kNetworkMagic);
  w.uint<std::uint32_t>(kNetworkVersion);
  w.uint<std::uint8_t>(static_cast<std::uint8_t>(net.architecture));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(net.layer_dims.size()));
  for (std::size_t d : net.layer_dims) w.uint<std::uint64_t>(d);
  for (const auto& l : net.layers) {
    for (double v : l.weights) w.f64(v);
    for (double v : l.biases) w.f64(v);
  }
  return w.data();
}

EmbeddingNetwork decode_network(std::string_view bytes) {
  detail::ByteReader r(std::span<const char>(bytes.data(), bytes.size()), "PFNW");
  if (bytes.size() < kNetworkMagic.size() || r.bytes(4) != kNetworkMagic) {
    throw Error(ErrorCode::kBadMagic, "not a PFNW checkpoint");
  }
  const auto version = r.uint<std::uint32_t>();
  if (version != kNetworkVersion) {
    throw Error(ErrorCode::kUnsupportedVersion, "PFNW version " + std::to_string(version));
  }
  const auto tag = r.uint<std::uint8_t>();
  if (tag > 2) {
    throw Error(ErrorCode::kInvalidArchitecture, "architecture tag " + std::to_string(tag));
  }
  EmbeddingNetwork net;
  net.architecture = static_cast<Architecture>(tag);
  const auto n_dims = r.uint<std::uint32_t>();
  if (static_cast<std::size_t>(n_dims) * 8 > r.remaining()) {
    throw Error(ErrorCode::kTruncatedFile, "PFNW: dimension list exceeds file size");
  }
  for (std::uint32_t i = 0; i < n_dims; ++i) {
    net.layer_dims.push_back(static_cast<std::size_t>(r.uint<std::uint64_t>()));
  }
  check_dims(net.architecture, net.layer_dims);

  std::size_t expected = 0;
  const std::size_t n = affine_count(net.architecture, net.layer_dims);
  for (std::size_t l = 0; l < n; ++l) {
    expected += (net.layer_dims[l] * net.layer_dims[l + 1] + net.layer_dims[l + 1]) * 8;
  }
  if (r.remaining() != expected) {
    throw Error(ErrorCode::kTruncatedFile,
                "PFNW: expected " + std::to_string(expected) + " parameter bytes, found " +
                    std::to_string(r.remaining()));
  }
  for (std::size_t l = 0; l < n; ++l) {
    Layer layer;
    layer.in = net.layer_dims[l];
    layer.out = net.layer_dims[l + 1];
    layer.weights.resize(layer.in * layer.out);
    for (double& v : layer.weights) v = r.f64();
    layer.biases.resize(layer.out);
    for (double& v : layer.biases) v = r.f64();
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

void save_network(const EmbeddingNetwork& net, const std::filesystem::path& path) {
  detail::write_file(path, encode_network(net));
}

EmbeddingNetwork load_network(const std::filesystem::path& path) {
  return decode_network(detail::read_file(path));
}

}  // namespace protonet
