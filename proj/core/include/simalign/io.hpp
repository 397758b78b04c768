/// @file  io.hpp
/// @brief Plain-text file formats: embeddings, judgments, ranked trials,
///        model and PCA files, reports, and training histories.
///
/// Reals are written in shortest round-trip decimal form, so every value
/// reloads bit-exactly. Readers accept LF or CRLF and ignore blank lines.

#pragma once

#include <simalign/data.hpp>
#include <simalign/error.hpp>
#include <simalign/experiments.hpp>
#include <simalign/model.hpp>
#include <simalign/pca.hpp>
#include <simalign/trainer.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace simalign {

inline constexpr int kFormatVersion = 1;

/// Shortest decimal string that parses back to exactly `x`.
std::string format_real(double x);
/// Locale-independent parse of a full decimal (or scientific) real; nullopt on junk.
std::optional<double> parse_real(std::string_view text);

EmbeddingTable read_embeddings(std::istream& in, const std::string& source = "<stream>");
EmbeddingTable load_embeddings(const std::filesystem::path& path);
void write_embeddings(std::ostream& out, const EmbeddingTable& table);
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);

TripletDataset read_triplets(std::istream& in, const std::string& source = "<stream>");
TripletDataset load_triplets(const std::filesystem::path& path);
void write_triplets(std::ostream& out, const TripletDataset& dataset);
void save_triplets(const TripletDataset& dataset, const std::filesystem::path& path);

std::vector<RankedTrial> read_ranked_trials(std::istream& in, const std::string& source = "<stream>");
std::vector<RankedTrial> load_ranked_trials(const std::filesystem::path& path);
void write_ranked_trials(std::ostream& out, const std::vector<RankedTrial>& trials);

/// Structured failure while reading a model or PCA file.
class ModelFileError : public ParseError {
public:
	enum class Kind { malformed, version_mismatch, count_mismatch, unsupported_family };

	ModelFileError(Kind kind, std::string path, std::size_t line, const std::string& message)
		: ParseError(std::move(path), line, message), kind_(kind) {}

	Kind kind() const noexcept { return kind_; }

private:
	Kind kind_;
};

/// Contents of a model.tam file.
struct ModelFile {
	WeightModel model = WeightModel::identity(1);
	std::optional<PcaProjection> pca;
	/// Free-form key/value echo of the training run (seed, config, ...). Keys
	/// must not contain whitespace.
	std::map<std::string, std::string> metadata;
};

void write_model(std::ostream& out, const ModelFile& file);
ModelFile read_model(std::istream& in, const std::string& source = "<stream>");
void save_model(const ModelFile& file, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

void write_pca(std::ostream& out, const PcaProjection& pca);
PcaProjection read_pca(std::istream& in, const std::string& source = "<stream>");
void save_pca(const PcaProjection& pca, const std::filesystem::path& path);
PcaProjection load_pca(const std::filesystem::path& path);

/// `fold,family,k,split,accuracy,mean_ll,epochs`
void write_report(std::ostream& out, const std::vector<ReportRow>& rows);
void save_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path);
std::vector<ReportRow> read_report(std::istream& in, const std::string& source = "<stream>");

/// `family,k,split,folds,accuracy_mean,accuracy_sem,mean_ll_mean,mean_ll_sem`
void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows);
void save_summary(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);

/// `epoch,loss,train_acc,seconds`
void write_history(std::ostream& out, const TrainingHistory& history);
void save_history(const TrainingHistory& history, const std::filesystem::path& path);

} // namespace simalign
