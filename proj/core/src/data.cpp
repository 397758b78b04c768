#include <simalign/data.hpp>
#include <simalign/error.hpp>

#include <algorithm>
#include <sstream>

namespace simalign {

EmbeddingTable::EmbeddingTable(std::vector<std::string> ids, Matrix vectors)
	: ids_(std::move(ids)), vectors_(std::move(vectors)) {
	if (static_cast<Eigen::Index>(ids_.size()) != vectors_.rows())
		throw ValidationError("vectors", "row count " + std::to_string(vectors_.rows()) +
		                                     " does not match id count " + std::to_string(ids_.size()));
	if (vectors_.cols() < 1)
		throw ValidationError("vectors", "embedding dimensionality must be at least 1");
	if (!vectors_.allFinite())
		throw ValidationError("vectors", "contains NaN or infinite entries");
	index_.reserve(ids_.size());
	for (std::size_t i = 0; i < ids_.size(); ++i) {
		if (!index_.emplace(ids_[i], i).second)
			throw ValidationError("ids", "duplicate id '" + ids_[i] + "'");
	}
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view id) const {
	auto it = index_.find(std::string(id));
	if (it == index_.end())
		return std::nullopt;
	return it->second;
}

std::size_t EmbeddingTable::index_of(std::string_view id) const {
	if (auto i = find(id))
		return *i;
	throw ValidationError("id", "unknown id '" + std::string(id) + "'");
}

void check_constraint(const TripletConstraint& c) {
	if (c.chosen != 1 && c.chosen != 2)
		throw ValidationError("chosen", "must be 1 or 2, got " + std::to_string(c.chosen));
	if (c.query == c.ref1 || c.query == c.ref2)
		throw ValidationError("query", "query '" + c.query + "' repeats a reference");
	if (c.ref1 == c.ref2)
		throw ValidationError("ref2", "references are identical ('" + c.ref1 + "')");
}

void check_trial(const RankedTrial& trial) {
	const auto& refs = trial.references;
	for (std::size_t i = 0; i < refs.size(); ++i) {
		if (refs[i] == trial.query)
			throw ValidationError("ref" + std::to_string(i + 1), "equals the query '" + trial.query + "'");
		for (std::size_t j = 0; j < i; ++j) {
			if (refs[i] == refs[j])
				throw ValidationError("ref" + std::to_string(i + 1), "duplicate reference '" + refs[i] + "'");
		}
	}
	for (std::size_t c = 0; c < trial.chosen.size(); ++c) {
		const std::string field = "chosen" + std::to_string(c + 1);
		if (std::find(refs.begin(), refs.end(), trial.chosen[c]) == refs.end())
			throw ValidationError(field, "'" + trial.chosen[c] + "' is not among the references");
	}
	if (trial.chosen[0] == trial.chosen[1])
		throw ValidationError("chosen2", "duplicates chosen1 ('" + trial.chosen[0] + "')");
}

std::vector<TripletConstraint> expand_ranked_trial(const RankedTrial& trial) {
	check_trial(trial);
	const auto& refs = trial.references;
	auto is_chosen = [&](const std::string& id) {
		return id == trial.chosen[0] || id == trial.chosen[1];
	};

	std::vector<TripletConstraint> out;
	out.reserve(RankedTrial::kChosen * (RankedTrial::kReferences - RankedTrial::kChosen));
	for (const auto& winner : refs) {
		if (!is_chosen(winner))
			continue;
		for (const auto& loser : refs) {
			if (is_chosen(loser))
				continue;
			out.push_back({trial.query, winner, loser, 1});
		}
	}
	return out;
}

std::string_view to_string(IssueKind kind) noexcept {
	switch (kind) {
	case IssueKind::unresolved_id: return "unresolved_id";
	case IssueKind::duplicate_item: return "duplicate_item";
	case IssueKind::chosen_out_of_range: return "chosen_out_of_range";
	}
	return "unknown";
}

std::string ValidationReport::describe() const {
	std::ostringstream os;
	for (const auto& issue : issues)
		os << "constraint " << issue.constraint_index << ": " << to_string(issue.kind) << ": "
		   << issue.detail << '\n';
	return os.str();
}

ValidationReport validate_dataset(const TripletDataset& dataset, const EmbeddingTable& table) {
	ValidationReport report;
	for (std::size_t i = 0; i < dataset.constraints.size(); ++i) {
		const auto& c = dataset.constraints[i];
		for (const auto* id : {&c.query, &c.ref1, &c.ref2}) {
			if (!table.find(*id))
				report.issues.push_back({i, IssueKind::unresolved_id, "unknown id '" + *id + "'"});
		}
		if (c.query == c.ref1 || c.query == c.ref2)
			report.issues.push_back({i, IssueKind::duplicate_item, "query '" + c.query + "' repeats a reference"});
		if (c.ref1 == c.ref2)
			report.issues.push_back({i, IssueKind::duplicate_item, "duplicate reference '" + c.ref1 + "'"});
		if (c.chosen != 1 && c.chosen != 2)
			report.issues.push_back({i, IssueKind::chosen_out_of_range, "chosen = " + std::to_string(c.chosen)});
	}
	return report;
}

std::vector<IndexedTriplet> index_dataset(const TripletDataset& dataset, const EmbeddingTable& table) {
	auto report = validate_dataset(dataset, table);
	if (!report.ok())
		throw ValidationError("dataset", std::to_string(report.issues.size()) + " issue(s)\n" + report.describe());
	std::vector<IndexedTriplet> out;
	out.reserve(dataset.size());
	for (const auto& c : dataset.constraints) {
		out.push_back({static_cast<std::uint32_t>(table.index_of(c.query)),
		               static_cast<std::uint32_t>(table.index_of(c.ref1)),
		               static_cast<std::uint32_t>(table.index_of(c.ref2)),
		               static_cast<std::uint8_t>(c.chosen)});
	}
	return out;
}

} // namespace simalign
