#include "protonet/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "protonet/error.hpp"

namespace protonet {

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFiniteInput,
                  std::string(what) + " contains a non-finite component");
    }
  }
}

namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + ": dimension " + std::to_string(a) +
                    " vs " + std::to_string(b));
  }
}

void require_prototypes(const PrototypeSet& prototypes) {
  if (prototypes.size() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "prototype set is empty");
  }
}

}  // namespace

PrototypeSet compute_prototypes(std::span<const Vector> support_embeddings,
                                std::span<const std::size_t> support_labels,
                                std::size_t n_classes) {
  if (support_embeddings.size() != support_labels.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "support embeddings and labels differ in count");
  }
  if (n_classes == 0) {
    throw Error(ErrorCode::kEmptyClass, "n_classes is zero");
  }
  if (support_embeddings.empty()) {
    throw Error(ErrorCode::kEmptyClass, "no support embeddings");
  }
  const std::size_t dim = support_embeddings.front().size();
  if (dim == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "embedding dimension is zero");
  }

  PrototypeSet out;
  out.prototypes.assign(n_classes, Vector(dim, 0.0));
  out.class_ids.resize(n_classes);
  for (std::size_t k = 0; k < n_classes; ++k) {
    out.class_ids[k] = static_cast<std::uint32_t>(k);
  }
  std::vector<std::size_t> counts(n_classes, 0);

  for (std::size_t i = 0; i < support_embeddings.size(); ++i) {
    const Vector& e = support_embeddings[i];
    require_same_dim(e.size(), dim, "support embedding");
    require_finite(e, "support embedding");
    const std::size_t label = support_labels[i];
    if (label >= n_classes) {
      throw Error(ErrorCode::kClassIndexOutOfRange,
                  "support label " + std::to_string(label) + " >= " +
                      std::to_string(n_classes));
    }
    Vector& acc = out.prototypes[label];
    for (std::size_t j = 0; j < dim; ++j) acc[j] += e[j];
    ++counts[label];
  }

  for (std::size_t k = 0; k < n_classes; ++k) {
    if (counts[k] == 0) {
      throw Error(ErrorCode::kEmptyClass,
                  "class " + std::to_string(k) + " has no support examples");
    }
    const double n = static_cast<double>(counts[k]);
    for (double& v : out.prototypes[k]) v /= n;
  }
  return out;
}

double squared_euclidean_distance(std::span<const double> a,
                                  std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "squared_euclidean_distance");
  double sum = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    sum += d * d;
  }
  return sum;
}

std::vector<double> distances_to_prototypes(std::span<const double> query,
                                            const PrototypeSet& prototypes) {
  require_prototypes(prototypes);
  require_same_dim(query.size(), prototypes.dim(), "query vs prototypes");
  require_finite(query, "query");
  std::vector<double> d(prototypes.size());
  for (std::size_t k = 0; k < prototypes.size(); ++k) {
    require_finite(prototypes.prototypes[k], "prototype");
    d[k] = squared_euclidean_distance(query, prototypes.prototypes[k]);
  }
  return d;
}

ClassPosterior posterior_from_distances(std::span<const double> distances) {
  ClassPosterior post;
  post.probabilities.resize(distances.size());
  if (distances.empty()) return post;
  // Largest logit is -min distance.
  const double dmin = *std::min_element(distances.begin(), distances.end());
  double total = 0.0;
  for (std::size_t k = 0; k < distances.size(); ++k) {
    post.probabilities[k] = std::exp(-(distances[k] - dmin));
    total += post.probabilities[k];
  }
  for (double& p : post.probabilities) p /= total;
  return post;
}

ClassPosterior posterior_over_classes(std::span<const double> query,
                                      const PrototypeSet& prototypes) {
  return posterior_from_distances(distances_to_prototypes(query, prototypes));
}

std::size_t classify_query(std::span<const double> query,
                           const PrototypeSet& prototypes) {
  const auto d = distances_to_prototypes(query, prototypes);
  // min_element returns the first minimum, which is the lowest index.
  return static_cast<std::size_t>(std::min_element(d.begin(), d.end()) -
                                  d.begin());
}

double negative_log_posterior(std::span<const double> distances,
                              std::size_t label) {
  if (label >= distances.size()) {
    throw Error(ErrorCode::kClassIndexOutOfRange,
                "label " + std::to_string(label) + " >= " +
                    std::to_string(distances.size()));
  }
  const double dmin = *std::min_element(distances.begin(), distances.end());
  double total = 0.0;
  for (double d : distances) total += std::exp(-(d - dmin));
  // -log p_y = (d_y - dmin) + log(sum_k exp(-(d_k - dmin)))
  return (distances[label] - dmin) + std::log(total);
}

double episode_loss(std::span<const Vector> query_embeddings,
                    std::span<const std::size_t> query_labels,
                    const PrototypeSet& prototypes) {
  if (query_embeddings.empty()) {
    throw Error(ErrorCode::kEmptyQuerySet, "episode has no queries");
  }
  if (query_embeddings.size() != query_labels.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query embeddings and labels differ in count");
  }
  double sum = 0.0;
  for (std::size_t q = 0; q < query_embeddings.size(); ++q) {
    const auto d = distances_to_prototypes(query_embeddings[q], prototypes);
    sum += negative_log_posterior(d, query_labels[q]);
  }
  return sum / static_cast<double>(query_embeddings.size());
}

}  // namespace protonet
