/// @file  synthetic.hpp
/// @brief Seeded ground-truth generators and exact-probability oracles.
///
/// A GroundTruth plays the role of the human rater: its choice probabilities
/// follow the same logistic rule as the learned models, so a learned model's
/// accuracy can be compared against the exact Bayes ceiling.

#pragma once

#include <simalign/model.hpp>
#include <simalign/pca.hpp>

#include <span>

namespace simalign {

struct GroundTruth {
	WeightModel model;
	PcaProjection projection;
	/// Logits are divided by this before the logistic.
	double temperature = 1.0;

	void check() const;
};

/// n x d i.i.d. standard normal entries; ids "img_0000", "img_0001", ...
/// (zero-padded to at least four digits).
EmbeddingTable sample_embeddings(std::size_t n, Eigen::Index d, std::uint64_t seed,
                                 std::string_view prefix = "img_");

struct TripletSkeleton {
	std::string query;
	std::string ref1;
	std::string ref2;
};

/// `count` skeletons, each three distinct ids drawn uniformly from the table.
std::vector<TripletSkeleton> sample_skeletons(const EmbeddingTable& table, std::size_t count, std::uint64_t seed);

/// Temperature-scaled logits of choosing ref1 under the truth.
Vector truth_logits(const GroundTruth& truth, const EmbeddingTable& table,
                    std::span<const TripletSkeleton> skeletons);

/// chosen = 1 with probability sigmoid(logit / T). Draw i uses counter i of
/// the seed's stream, so the result does not depend on evaluation order.
TripletDataset sample_judgments(const GroundTruth& truth, const EmbeddingTable& table,
                                std::span<const TripletSkeleton> skeletons, std::uint64_t seed);

/// Mean of max(p, 1 - p): the expected accuracy of the best possible predictor.
double bayes_accuracy(const GroundTruth& truth, const EmbeddingTable& table,
                      std::span<const TripletSkeleton> skeletons);
double bayes_accuracy_from_logits(const Vector& logits);

/// Random symmetric positive definite S with unit spectral norm: a log-normal
/// axis dilation plus a random mixing term 3 B B^T / k.
Matrix symmetric_truth_weights(Eigen::Index k, std::uint64_t seed);

/// W* = (1 - asymmetry) * S + asymmetry * A with S from symmetric_truth_weights
/// and A random antisymmetric, each scaled to unit spectral norm.
Matrix mixed_truth_weights(Eigen::Index k, double asymmetry, std::uint64_t seed);

/// Builds a truth in the requested family. Unconstrained accepts any
/// asymmetry in [0, 1]; the symmetric families require asymmetry = 0 and
/// use the representable part (S via its Cholesky factor for symmetric, diag(S) for the diagonal
/// families, I for identity). Throws ValidationError otherwise.
GroundTruth make_ground_truth(Family family, Eigen::Index k, double asymmetry, std::uint64_t seed,
                              PcaProjection projection, double temperature = 1.0);

/// Temperature whose Bayes accuracy on `skeletons` equals `target` (bisection
/// in log-temperature to 1e-10 relative). Target must lie in (0.5, max achievable).
double calibrate_temperature(const GroundTruth& truth, const EmbeddingTable& table,
                             std::span<const TripletSkeleton> skeletons, double target);

} // namespace simalign
