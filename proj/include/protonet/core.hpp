#ifndef PROTONET_CORE_HPP
#define PROTONET_CORE_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace protonet {

/// A point in embedding space (length M).
using Vector = std::vector<double>;

/*
 * Class prototypes for one episode. prototypes[k] belongs to episode class k;
 * class_ids[k] is the global class it stands for (defaults to k).
 */
struct PrototypeSet {
  std::vector<Vector> prototypes;
  std::vector<std::uint32_t> class_ids;

  std::size_t size() const noexcept { return prototypes.size(); }
  std::size_t dim() const noexcept {
    return prototypes.empty() ? 0 : prototypes.front().size();
  }
};

struct ClassPosterior {
  std::vector<double> probabilities;
};

/// Mean of the embedded supports of each class. Throws EmptyClass,
/// DimensionMismatch or NonFiniteInput.
PrototypeSet compute_prototypes(std::span<const Vector> support_embeddings,
                                std::span<const std::size_t> support_labels,
                                std::size_t n_classes);

double squared_euclidean_distance(std::span<const double> a,
                                  std::span<const double> b);

/// Squared distance from `query` to every prototype, in prototype order.
std::vector<double> distances_to_prototypes(std::span<const double> query,
                                            const PrototypeSet& prototypes);

/// softmax(-distances) with max-logit subtraction.
ClassPosterior posterior_from_distances(std::span<const double> distances);

ClassPosterior posterior_over_classes(std::span<const double> query,
                                      const PrototypeSet& prototypes);

/// Index of the nearest prototype; exact ties go to the lowest index.
std::size_t classify_query(std::span<const double> query,
                           const PrototypeSet& prototypes);

/// -log posterior of `label` given the distances, computed without forming
/// the posterior so tiny probabilities keep full precision.
double negative_log_posterior(std::span<const double> distances,
                              std::size_t label);

/// Mean negative log posterior of the true class over the query set.
double episode_loss(std::span<const Vector> query_embeddings,
                    std::span<const std::size_t> query_labels,
                    const PrototypeSet& prototypes);

/*
 * The inputs of one episode after gathering: raw (pre-embedding) feature
 * vectors for supports and queries, labelled by episode-class index.
 */
struct EpisodeBatch {
  std::vector<Vector> support;
  std::vector<std::size_t> support_labels;
  std::vector<Vector> query;
  std::vector<std::size_t> query_labels;
  std::size_t n_classes = 0;
};

/// Throws NonFiniteInput if any component is NaN or infinite.
void require_finite(std::span<const double> values, const char* what);

}  // namespace protonet

#endif  // PROTONET_CORE_HPP
