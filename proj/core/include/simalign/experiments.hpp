/// @file  experiments.hpp
/// @brief Cross-validation folds, the accuracy-vs-k sweep, and report rows.

#pragma once

#include <simalign/pca.hpp>
#include <simalign/trainer.hpp>

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace simalign {

enum class FoldMode { heldout_triplets, heldout_images };

std::string_view to_string(FoldMode mode) noexcept;
FoldMode parse_fold_mode(std::string_view tag);

/// One train/validation split. Indices refer to positions in the dataset.
struct FoldSpec {
	FoldMode mode = FoldMode::heldout_triplets;
	std::size_t fold = 0;
	std::vector<std::size_t> train;
	std::vector<std::size_t> validation;
	/// Image mode only, in the order they were drawn.
	std::vector<std::string> heldout_images;
};

/// Seeded permutation cut into `n_folds` parts whose sizes differ by at most one.
/// Throws ValidationError if n_folds < 2 or the dataset has fewer than n_folds triplets.
std::vector<FoldSpec> kfold_triplets(std::size_t dataset_size, std::size_t n_folds, std::uint64_t seed);

/// Split with a fixed held-out image set: every triplet touching a held-out
/// image goes to validation, the rest to training.
FoldSpec fold_from_heldout_images(std::span<const IndexedTriplet> triplets, const EmbeddingTable& table,
                                  std::vector<std::string> heldout, std::size_t fold_index = 0);

/// Held-out-image folds. Each fold draws images independently (folds may
/// overlap) until the surviving training set first drops to at most
/// target_train_fraction of all triplets. Throws ValidationError with the
/// achieved fraction if training or validation would end up empty.
std::vector<FoldSpec> kfold_images(const TripletDataset& dataset, const EmbeddingTable& table,
                                   std::size_t n_folds, double target_train_fraction, std::uint64_t seed);

/// Empty string when the fold is sound, otherwise a description of the first violation.
std::string check_image_fold(const FoldSpec& fold, std::span<const IndexedTriplet> triplets,
                             const EmbeddingTable& table);

/// (1/m) * sum log P(human choice). Always <= 0.
double mean_log_likelihood(const WeightModel& model, const Matrix& projected,
                           std::span<const IndexedTriplet> triplets);

enum class Split { train, validation };

std::string_view to_string(Split split) noexcept;

struct ReportRow {
	std::size_t fold = 0;
	Family family = Family::identity;
	Eigen::Index k = 0;
	Split split = Split::train;
	double accuracy = 0.0;
	double mean_ll = 0.0;
	std::size_t epochs = 0;
};

/// Canonical row order: fold, family, k, split.
bool canonical_less(const ReportRow& a, const ReportRow& b) noexcept;

struct SummaryRow {
	Family family = Family::identity;
	Eigen::Index k = 0;
	Split split = Split::train;
	std::size_t folds = 0;
	double accuracy_mean = 0.0;
	double accuracy_sem = 0.0;
	double mean_ll_mean = 0.0;
	double mean_ll_sem = 0.0;
};

/// Mean and standard error (n-1 sample deviation over sqrt(n)) per (family, k, split).
std::vector<SummaryRow> summarize(const std::vector<ReportRow>& rows);

struct SweepSpec {
	std::vector<Eigen::Index> ks;
	std::vector<Family> families;
	/// Used for families without an entry in `per_family`.
	TrainingConfig default_config;
	std::map<Family, TrainingConfig> per_family;
	std::uint64_t seed = 0;
	bool centered_projection = false;
	/// Worker threads; output does not depend on this.
	std::size_t jobs = 1;

	const TrainingConfig& config_for(Family family) const;
	void check() const;
};

struct SweepProgress {
	std::size_t fold;
	Family family;
	Eigen::Index k;
	const ReportRow& validation;
};

/// Fits PCA once on `corpus` at the largest k, truncates per run, projects
/// the judgment embeddings, trains every (fold, family, k), and returns train
/// and validation rows in canonical order. Errors are rethrown annotated with
/// the failing (fold, family, k).
std::vector<ReportRow> run_sweep(const TripletDataset& dataset, const EmbeddingTable& corpus,
                                 const EmbeddingTable& judgments, const SweepSpec& sweep,
                                 const std::vector<FoldSpec>& folds,
                                 const std::function<void(const SweepProgress&)>& on_run = {});

struct LambdaScore {
	double lambda = 0.0;
	double validation_accuracy_mean = 0.0;
	double validation_accuracy_sem = 0.0;
};

/// Cross-validated accuracy of the diagonal_signed_l2 baseline for each
/// penalty in `grid`. The coefficient has no principled default, so callers
/// pick it from this table.
std::vector<LambdaScore> lambda_sweep(const TripletDataset& dataset, const EmbeddingTable& corpus,
                                      const EmbeddingTable& judgments, Eigen::Index k,
                                      std::span<const double> grid, const TrainingConfig& base,
                                      const std::vector<FoldSpec>& folds, std::uint64_t seed,
                                      std::size_t jobs = 1);

} // namespace simalign
