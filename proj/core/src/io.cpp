#include <simalign/error.hpp>
#include <simalign/io.hpp>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace simalign {

namespace {

struct Line {
	std::size_t number;
	std::string text;
};

std::vector<Line> read_lines(std::istream& in) {
	std::vector<Line> lines;
	std::string text;
	std::size_t number = 0;
	while (std::getline(in, text)) {
		++number;
		if (!text.empty() && text.back() == '\r')
			text.pop_back();
		if (text.empty())
			continue;
		lines.push_back({number, std::move(text)});
	}
	return lines;
}

std::vector<std::string> split(std::string_view text, char sep) {
	std::vector<std::string> out;
	std::size_t start = 0;
	while (true) {
		const auto pos = text.find(sep, start);
		if (pos == std::string_view::npos) {
			out.emplace_back(text.substr(start));
			return out;
		}
		out.emplace_back(text.substr(start, pos - start));
		start = pos + 1;
	}
}

std::string join(const std::vector<std::string>& cells, char sep) {
	std::string out;
	for (std::size_t i = 0; i < cells.size(); ++i) {
		if (i)
			out += sep;
		out += cells[i];
	}
	return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw ParseError(path.string(), 0, "cannot open file for reading");
	return in;
}

template <typename Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
	std::ofstream out(path, std::ios::binary | std::ios::trunc);
	if (!out)
		throw Error(path.string() + ": cannot open file for writing");
	writer(out);
	out.flush();
	if (!out)
		throw Error(path.string() + ": write failed");
}

void expect_header(const std::vector<Line>& lines, const std::vector<std::string>& expected,
                   const std::string& source) {
	if (lines.empty())
		throw ParseError(source, 0, "missing header row '" + join(expected, ',') + "'");
	if (split(lines[0].text, ',') != expected)
		throw ParseError(source, lines[0].number, "expected header '" + join(expected, ',') + "'");
}

std::vector<std::string> cells_of(const Line& line, std::size_t expected, const std::string& source) {
	auto cells = split(line.text, ',');
	if (cells.size() != expected)
		throw ParseError(source, line.number, "expected " + std::to_string(expected) + " columns, found " +
		                                          std::to_string(cells.size()));
	for (std::size_t i = 0; i < cells.size(); ++i)
		if (cells[i].empty())
			throw ParseError(source, line.number, "empty cell in column " + std::to_string(i + 1));
	return cells;
}

int parse_chosen(const std::string& cell, const Line& line, const std::string& source) {
	if (cell == "1")
		return 1;
	if (cell == "2")
		return 2;
	throw ParseError(source, line.number, "chosen must be 1 or 2, got '" + cell + "'");
}

template <typename Int>
std::optional<Int> parse_int(std::string_view text) {
	Int value{};
	const auto* end = text.data() + text.size();
	auto [ptr, ec] = std::from_chars(text.data(), end, value);
	if (ec != std::errc() || ptr != end)
		return std::nullopt;
	return value;
}

/// Sequential reader over the non-blank lines of a model or PCA file.
class KeyedReader {
public:
	KeyedReader(std::istream& in, std::string source) : lines_(read_lines(in)), source_(std::move(source)) {}

	const std::string& source() const { return source_; }
	bool done() const { return pos_ >= lines_.size(); }
	std::size_t line_number() const { return done() ? (lines_.empty() ? 0 : lines_.back().number) : lines_[pos_].number; }

	[[noreturn]] void fail(ModelFileError::Kind kind, const std::string& message) const {
		throw ModelFileError(kind, source_, line_number(), message);
	}

	const std::string& peek() const {
		if (done())
			fail(ModelFileError::Kind::malformed, "unexpected end of file");
		return lines_[pos_].text;
	}

	std::string next() {
		const std::string& s = peek();
		++pos_;
		return s;
	}

	void expect_line(std::string_view expected) {
		if (peek() != expected)
			fail(ModelFileError::Kind::malformed, "expected '" + std::string(expected) + "'");
		++pos_;
	}

	/// Reads "key value" and returns value.
	std::string value_of(std::string_view key) {
		const std::string& s = peek();
		if (s.size() <= key.size() || s.compare(0, key.size(), key) != 0 || s[key.size()] != ' ')
			fail(ModelFileError::Kind::malformed, "expected key '" + std::string(key) + "'");
		++pos_;
		return s.substr(key.size() + 1);
	}

	long long int_of(std::string_view key) {
		const std::string v = value_of(key);
		auto parsed = parse_int<long long>(v);
		if (!parsed)
			fail_previous("'" + std::string(key) + "' is not an integer: '" + v + "'");
		return *parsed;
	}

	double real_of(std::string_view key) {
		const std::string v = value_of(key);
		auto parsed = parse_real(v);
		if (!parsed)
			fail_previous("'" + std::string(key) + "' is not a real: '" + v + "'");
		return *parsed;
	}

	/// Reads `count` reals, `per_line` per line.
	Vector reals(std::size_t count, std::size_t per_line) {
		Vector out(static_cast<Eigen::Index>(count));
		std::size_t filled = 0;
		while (filled < count) {
			if (done())
				fail(ModelFileError::Kind::count_mismatch,
				     "expected " + std::to_string(count) + " values, found " + std::to_string(filled));
			const std::string& s = peek();
			if (!is_numeric_line(s))
				fail(ModelFileError::Kind::count_mismatch,
				     "expected " + std::to_string(count) + " values, found " + std::to_string(filled));
			const auto cells = split(s, ' ');
			if (cells.size() != per_line)
				fail(ModelFileError::Kind::malformed,
				     "expected " + std::to_string(per_line) + " values on this line");
			for (const auto& c : cells) {
				auto v = parse_real(c);
				if (!v)
					fail(ModelFileError::Kind::malformed, "not a real: '" + c + "'");
				out[static_cast<Eigen::Index>(filled++)] = *v;
			}
			++pos_;
		}
		if (!done() && is_numeric_line(peek()))
			fail(ModelFileError::Kind::count_mismatch, "more than the expected " + std::to_string(count) + " values");
		return out;
	}

private:
	[[noreturn]] void fail_previous(const std::string& message) const {
		throw ModelFileError(ModelFileError::Kind::malformed, source_, lines_[pos_ - 1].number, message);
	}

	static bool is_numeric_line(const std::string& s) {
		const char c = s.empty() ? ' ' : s.front();
		return (c >= '0' && c <= '9') || c == '-' || c == '.' || c == '+' || s.starts_with("inf") ||
		       s.starts_with("nan");
	}

	std::vector<Line> lines_;
	std::string source_;
	std::size_t pos_ = 0;
};

void write_pca_block(std::ostream& out, const PcaProjection& pca) {
	out << "k " << pca.k() << '\n';
	out << "d " << pca.dim() << '\n';
	out << "centered " << (pca.centered() ? 1 : 0) << '\n';
	out << "mean\n";
	for (Eigen::Index j = 0; j < pca.dim(); ++j)
		out << format_real(pca.mean()[j]) << '\n';
	out << "variances\n";
	for (Eigen::Index i = 0; i < pca.k(); ++i)
		out << format_real(pca.variances()[i]) << '\n';
	out << "components\n";
	for (Eigen::Index i = 0; i < pca.k(); ++i) {
		for (Eigen::Index j = 0; j < pca.dim(); ++j) {
			if (j)
				out << ' ';
			out << format_real(pca.components()(i, j));
		}
		out << '\n';
	}
}

PcaProjection read_pca_block(KeyedReader& r) {
	const long long k = r.int_of("k");
	const long long d = r.int_of("d");
	const long long centered = r.int_of("centered");
	if (k < 1 || d < 1 || (centered != 0 && centered != 1))
		r.fail(ModelFileError::Kind::malformed, "invalid PCA header (k, d, centered)");
	r.expect_line("mean");
	Vector mean = r.reals(static_cast<std::size_t>(d), 1);
	r.expect_line("variances");
	Vector variances = r.reals(static_cast<std::size_t>(k), 1);
	r.expect_line("components");
	Vector flat = r.reals(static_cast<std::size_t>(k * d), static_cast<std::size_t>(d));
	Matrix components = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
		flat.data(), k, d);
	try {
		PcaProjection pca(std::move(components), std::move(mean), std::move(variances), centered == 1);
		if (pca.orthonormality_error() > 1e-8)
			r.fail(ModelFileError::Kind::malformed, "PCA components are not orthonormal");
		return pca;
	} catch (const ModelFileError&) {
		throw;
	} catch (const Error& e) {
		r.fail(ModelFileError::Kind::malformed, e.what());
	}
}

void check_magic_and_version(KeyedReader& r, std::string_view magic) {
	if (r.done() || r.peek() != magic)
		r.fail(ModelFileError::Kind::malformed, "missing '" + std::string(magic) + "' header");
	r.next();
	const long long version = r.int_of("format_version");
	if (version != kFormatVersion)
		r.fail(ModelFileError::Kind::version_mismatch, "unsupported format_version " + std::to_string(version) +
		                                                   " (expected " + std::to_string(kFormatVersion) + ")");
}

} // namespace

std::string format_real(double x) {
	char buf[64];
	auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
	if (ec != std::errc())
		throw Error("cannot format real");
	return {buf, ptr};
}

std::optional<double> parse_real(std::string_view text) {
	if (text.empty())
		return std::nullopt;
	if (text.front() == '+')
		text.remove_prefix(1);
	double value = 0.0;
	const auto* end = text.data() + text.size();
	auto [ptr, ec] = std::from_chars(text.data(), end, value);
	if (ec != std::errc() || ptr != end)
		return std::nullopt;
	return value;
}

EmbeddingTable read_embeddings(std::istream& in, const std::string& source) {
	const auto lines = read_lines(in);
	if (lines.empty())
		throw ParseError(source, 0, "missing header row 'id,f0,...'");
	const auto header = split(lines[0].text, ',');
	if (header.size() < 2 || header[0] != "id")
		throw ParseError(source, lines[0].number, "header must be 'id,f0,f1,...'");
	const auto d = static_cast<Eigen::Index>(header.size() - 1);
	for (Eigen::Index j = 0; j < d; ++j)
		if (header[static_cast<std::size_t>(j + 1)] != "f" + std::to_string(j))
			throw ParseError(source, lines[0].number, "header column " + std::to_string(j + 2) + " must be 'f" +
			                                              std::to_string(j) + "'");

	std::vector<std::string> ids;
	Matrix vectors(static_cast<Eigen::Index>(lines.size() - 1), d);
	std::unordered_map<std::string, std::size_t> seen;
	for (std::size_t r = 1; r < lines.size(); ++r) {
		const auto cells = cells_of(lines[r], header.size(), source);
		if (auto [it, fresh] = seen.emplace(cells[0], lines[r].number); !fresh)
			throw ParseError(source, lines[r].number,
			                 "duplicate id '" + cells[0] + "' (first seen on line " + std::to_string(it->second) + ")");
		for (Eigen::Index j = 0; j < d; ++j) {
			const auto& cell = cells[static_cast<std::size_t>(j + 1)];
			auto v = parse_real(cell);
			if (!v || !std::isfinite(*v))
				throw ParseError(source, lines[r].number, "non-numeric or non-finite value '" + cell + "'");
			vectors(static_cast<Eigen::Index>(r - 1), j) = *v;
		}
		ids.push_back(cells[0]);
	}
	return EmbeddingTable(std::move(ids), std::move(vectors));
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
	auto in = open_in(path);
	return read_embeddings(in, path.string());
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
	out << "id";
	for (Eigen::Index j = 0; j < table.dim(); ++j)
		out << ",f" << j;
	out << '\n';
	for (std::size_t i = 0; i < table.size(); ++i) {
		out << table.ids()[i];
		for (Eigen::Index j = 0; j < table.dim(); ++j)
			out << ',' << format_real(table.vectors()(static_cast<Eigen::Index>(i), j));
		out << '\n';
	}
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
	write_file(path, [&](std::ostream& out) { write_embeddings(out, table); });
}

TripletDataset read_triplets(std::istream& in, const std::string& source) {
	const auto lines = read_lines(in);
	expect_header(lines, {"query", "ref1", "ref2", "chosen"}, source);
	TripletDataset out;
	out.constraints.reserve(lines.size() - 1);
	for (std::size_t r = 1; r < lines.size(); ++r) {
		const auto cells = cells_of(lines[r], 4, source);
		out.constraints.push_back({cells[0], cells[1], cells[2], parse_chosen(cells[3], lines[r], source)});
	}
	return out;
}

TripletDataset load_triplets(const std::filesystem::path& path) {
	auto in = open_in(path);
	return read_triplets(in, path.string());
}

void write_triplets(std::ostream& out, const TripletDataset& dataset) {
	out << "query,ref1,ref2,chosen\n";
	for (const auto& c : dataset.constraints)
		out << c.query << ',' << c.ref1 << ',' << c.ref2 << ',' << c.chosen << '\n';
}

void save_triplets(const TripletDataset& dataset, const std::filesystem::path& path) {
	write_file(path, [&](std::ostream& out) { write_triplets(out, dataset); });
}

std::vector<RankedTrial> read_ranked_trials(std::istream& in, const std::string& source) {
	std::vector<std::string> header{"query"};
	for (std::size_t i = 1; i <= RankedTrial::kReferences; ++i)
		header.push_back("ref" + std::to_string(i));
	header.push_back("chosen1");
	header.push_back("chosen2");

	const auto lines = read_lines(in);
	expect_header(lines, header, source);
	std::vector<RankedTrial> out;
	for (std::size_t r = 1; r < lines.size(); ++r) {
		const auto cells = cells_of(lines[r], header.size(), source);
		RankedTrial trial;
		trial.query = cells[0];
		for (std::size_t i = 0; i < RankedTrial::kReferences; ++i)
			trial.references[i] = cells[1 + i];
		trial.chosen[0] = cells[1 + RankedTrial::kReferences];
		trial.chosen[1] = cells[2 + RankedTrial::kReferences];
		try {
			check_trial(trial);
		} catch (const ValidationError& e) {
			throw ParseError(source, lines[r].number, e.what());
		}
		out.push_back(std::move(trial));
	}
	return out;
}

std::vector<RankedTrial> load_ranked_trials(const std::filesystem::path& path) {
	auto in = open_in(path);
	return read_ranked_trials(in, path.string());
}

void write_ranked_trials(std::ostream& out, const std::vector<RankedTrial>& trials) {
	out << "query";
	for (std::size_t i = 1; i <= RankedTrial::kReferences; ++i)
		out << ",ref" << i;
	out << ",chosen1,chosen2\n";
	for (const auto& t : trials) {
		out << t.query;
		for (const auto& r : t.references)
			out << ',' << r;
		out << ',' << t.chosen[0] << ',' << t.chosen[1] << '\n';
	}
}

void write_model(std::ostream& out, const ModelFile& file) {
	const WeightModel& m = file.model;
	out << "simalign-model\n";
	out << "format_version " << kFormatVersion << '\n';
	out << "family " << to_string(m.family()) << '\n';
	out << "k " << m.k() << '\n';
	out << "lambda " << format_real(m.lambda()) << '\n';
	for (const auto& [key, value] : file.metadata) {
		if (key.empty() || key.find_first_of(" \t\r\n") != std::string::npos ||
		    value.find_first_of("\r\n") != std::string::npos)
			throw ValidationError("metadata", "invalid metadata entry '" + key + "'");
		out << "meta " << key << ' ' << value << '\n';
	}
	out << "parameters " << m.parameters().size() << '\n';
	for (Eigen::Index i = 0; i < m.parameters().size(); ++i)
		out << format_real(m.parameters()[i]) << '\n';
	if (file.pca) {
		out << "pca present\n";
		write_pca_block(out, *file.pca);
	} else {
		out << "pca none\n";
	}
	out << "end\n";
}

ModelFile read_model(std::istream& in, const std::string& source) {
	KeyedReader r(in, source);
	check_magic_and_version(r, "simalign-model");

	const std::string family_tag = r.value_of("family");
	Family family{};
	try {
		family = parse_family(family_tag);
	} catch (const ValidationError&) {
		throw ModelFileError(ModelFileError::Kind::unsupported_family, source, r.line_number(),
		                     "unsupported family '" + family_tag + "'");
	}
	const long long k = r.int_of("k");
	if (k < 1)
		r.fail(ModelFileError::Kind::malformed, "k must be positive");
	const double lambda = r.real_of("lambda");

	ModelFile file;
	while (!r.done() && r.peek().starts_with("meta ")) {
		const std::string rest = r.next().substr(5);
		const auto space = rest.find(' ');
		if (space == std::string::npos)
			file.metadata[rest] = "";
		else
			file.metadata[rest.substr(0, space)] = rest.substr(space + 1);
	}

	const long long declared = r.int_of("parameters");
	const auto expected = stored_param_count(family, static_cast<Eigen::Index>(k));
	if (declared < 0 || static_cast<std::size_t>(declared) != expected)
		r.fail(ModelFileError::Kind::count_mismatch,
		       "family " + family_tag + " with k=" + std::to_string(k) + " needs " + std::to_string(expected) +
		           " parameters, header declares " + std::to_string(declared));
	Vector params = r.reals(expected, 1);
	try {
		file.model = WeightModel::from_parameters(family, static_cast<Eigen::Index>(k), std::move(params), lambda);
	} catch (const Error& e) {
		r.fail(ModelFileError::Kind::malformed, e.what());
	}

	const std::string pca_state = r.value_of("pca");
	if (pca_state == "present") {
		file.pca = read_pca_block(r);
		if (file.pca->k() != file.model.k())
			r.fail(ModelFileError::Kind::malformed, "embedded PCA has k=" + std::to_string(file.pca->k()) +
			                                            " but the model has k=" + std::to_string(k));
	} else if (pca_state != "none") {
		r.fail(ModelFileError::Kind::malformed, "pca must be 'present' or 'none'");
	}
	r.expect_line("end");
	return file;
}

void save_model(const ModelFile& file, const std::filesystem::path& path) {
	write_file(path, [&](std::ostream& out) { write_model(out, file); });
}

ModelFile load_model(const std::filesystem::path& path) {
	auto in = open_in(path);
	return read_model(in, path.string());
}

void write_pca(std::ostream& out, const PcaProjection& pca) {
	out << "simalign-pca\n";
	out << "format_version " << kFormatVersion << '\n';
	write_pca_block(out, pca);
	out << "end\n";
}

PcaProjection read_pca(std::istream& in, const std::string& source) {
	KeyedReader r(in, source);
	check_magic_and_version(r, "simalign-pca");
	PcaProjection pca = read_pca_block(r);
	r.expect_line("end");
	return pca;
}

void save_pca(const PcaProjection& pca, const std::filesystem::path& path) {
	write_file(path, [&](std::ostream& out) { write_pca(out, pca); });
}

PcaProjection load_pca(const std::filesystem::path& path) {
	auto in = open_in(path);
	return read_pca(in, path.string());
}

void write_report(std::ostream& out, const std::vector<ReportRow>& rows) {
	out << "fold,family,k,split,accuracy,mean_ll,epochs\n";
	for (const auto& r : rows)
		out << r.fold << ',' << to_string(r.family) << ',' << r.k << ',' << to_string(r.split) << ','
		    << format_real(r.accuracy) << ',' << format_real(r.mean_ll) << ',' << r.epochs << '\n';
}

void save_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
	write_file(path, [&](std::ostream& out) { write_report(out, rows); });
}

std::vector<ReportRow> read_report(std::istream& in, const std::string& source) {
	const auto lines = read_lines(in);
	expect_header(lines, {"fold", "family", "k", "split", "accuracy", "mean_ll", "epochs"}, source);
	std::vector<ReportRow> rows;
	for (std::size_t i = 1; i < lines.size(); ++i) {
		const auto cells = cells_of(lines[i], 7, source);
		ReportRow row;
		auto fold = parse_int<std::size_t>(cells[0]);
		auto k = parse_int<Eigen::Index>(cells[2]);
		auto acc = parse_real(cells[4]);
		auto ll = parse_real(cells[5]);
		auto epochs = parse_int<std::size_t>(cells[6]);
		if (!fold || !k || !acc || !ll || !epochs || (cells[3] != "train" && cells[3] != "validation"))
			throw ParseError(source, lines[i].number, "malformed report row");
		try {
			row.family = parse_family(cells[1]);
		} catch (const ValidationError& e) {
			throw ParseError(source, lines[i].number, e.what());
		}
		if (*acc < 0.0 || *acc > 1.0)
			throw ParseError(source, lines[i].number, "accuracy outside [0, 1]");
		row.fold = *fold;
		row.k = *k;
		row.split = cells[3] == "train" ? Split::train : Split::validation;
		row.accuracy = *acc;
		row.mean_ll = *ll;
		row.epochs = *epochs;
		rows.push_back(row);
	}
	return rows;
}

void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
	out << "family,k,split,folds,accuracy_mean,accuracy_sem,mean_ll_mean,mean_ll_sem\n";
	for (const auto& r : rows)
		out << to_string(r.family) << ',' << r.k << ',' << to_string(r.split) << ',' << r.folds << ','
		    << format_real(r.accuracy_mean) << ',' << format_real(r.accuracy_sem) << ','
		    << format_real(r.mean_ll_mean) << ',' << format_real(r.mean_ll_sem) << '\n';
}

void save_summary(const std::vector<SummaryRow>& rows, const std::filesystem::path& path) {
	write_file(path, [&](std::ostream& out) { write_summary(out, rows); });
}

void write_history(std::ostream& out, const TrainingHistory& history) {
	out << "epoch,loss,train_acc,seconds\n";
	for (std::size_t i = 0; i < history.epochs.size(); ++i) {
		const auto& e = history.epochs[i];
		out << (i + 1) << ',' << format_real(e.loss) << ',' << format_real(e.accuracy) << ','
		    << format_real(e.seconds) << '\n';
	}
}

void save_history(const TrainingHistory& history, const std::filesystem::path& path) {
	write_file(path, [&](std::ostream& out) { write_history(out, history); });
}

} // namespace simalign
