/// @file  data.hpp
/// @brief Embedding tables, triplet judgments, and ranked-trial expansion.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace simalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Identifier-indexed matrix of embedding vectors, one row per item.
///
/// Identifiers are opaque strings; the table assigns each a dense row index
/// in insertion order. Immutable after construction.
class EmbeddingTable {
public:
	EmbeddingTable() = default;

	/// Throws ValidationError on duplicate ids, row/id count mismatch,
	/// zero columns, or non-finite entries.
	EmbeddingTable(std::vector<std::string> ids, Matrix vectors);

	std::size_t size() const noexcept { return ids_.size(); }
	Eigen::Index dim() const noexcept { return vectors_.cols(); }

	const std::vector<std::string>& ids() const noexcept { return ids_; }
	const Matrix& vectors() const noexcept { return vectors_; }
	auto row(std::size_t i) const { return vectors_.row(static_cast<Eigen::Index>(i)); }

	std::optional<std::size_t> find(std::string_view id) const;
	/// Throws ValidationError if the id is unknown.
	std::size_t index_of(std::string_view id) const;

private:
	std::vector<std::string> ids_;
	Matrix vectors_;
	std::unordered_map<std::string, std::size_t> index_;
};

/// One judgment: the rater found `query` more similar to ref`chosen`.
struct TripletConstraint {
	std::string query;
	std::string ref1;
	std::string ref2;
	int chosen = 1;

	bool operator==(const TripletConstraint&) const = default;
};

/// Throws ValidationError unless query/ref1/ref2 are pairwise distinct and chosen is 1 or 2.
void check_constraint(const TripletConstraint& c);

/// A query shown with eight references of which the rater picked two.
struct RankedTrial {
	static constexpr std::size_t kReferences = 8;
	static constexpr std::size_t kChosen = 2;

	std::string query;
	std::array<std::string, kReferences> references;
	std::array<std::string, kChosen> chosen;
};

/// Throws ValidationError naming the offending field.
void check_trial(const RankedTrial& trial);

/// Each chosen reference against each non-chosen one: 2 x 6 = 12 constraints,
/// all with chosen = 1, ordered by (chosen position, non-chosen position) in
/// the trial's reference list.
std::vector<TripletConstraint> expand_ranked_trial(const RankedTrial& trial);

struct TripletDataset {
	std::vector<TripletConstraint> constraints;

	std::size_t size() const noexcept { return constraints.size(); }
	bool empty() const noexcept { return constraints.empty(); }
};

enum class IssueKind { unresolved_id, duplicate_item, chosen_out_of_range };

std::string_view to_string(IssueKind kind) noexcept;

struct ValidationIssue {
	std::size_t constraint_index;
	IssueKind kind;
	std::string detail;
};

struct ValidationReport {
	std::vector<ValidationIssue> issues;

	bool ok() const noexcept { return issues.empty(); }
	std::string describe() const;
};

/// Lists every unresolved id, repeated item, and bad chosen index. Never throws.
ValidationReport validate_dataset(const TripletDataset& dataset, const EmbeddingTable& table);

/// A constraint resolved to table row indices; `chosen` is 1 or 2.
struct IndexedTriplet {
	std::uint32_t query;
	std::uint32_t ref1;
	std::uint32_t ref2;
	std::uint8_t chosen;

	std::uint32_t preferred() const noexcept { return chosen == 1 ? ref1 : ref2; }
	std::uint32_t rejected() const noexcept { return chosen == 1 ? ref2 : ref1; }
	bool touches(std::uint32_t item) const noexcept {
		return query == item || ref1 == item || ref2 == item;
	}
};

/// Resolves ids against `table`. Throws ValidationError with the full report if invalid.
std::vector<IndexedTriplet> index_dataset(const TripletDataset& dataset, const EmbeddingTable& table);

} // namespace simalign
