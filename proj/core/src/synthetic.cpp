#include <simalign/error.hpp>
#include <simalign/random.hpp>
#include <simalign/synthetic.hpp>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace simalign {

namespace {

constexpr std::uint64_t kEmbeddingTag = 0x656d62ULL;
constexpr std::uint64_t kSkeletonTag = 0x736b656cULL;
constexpr std::uint64_t kJudgmentTag = 0x6a756467ULL;
constexpr std::uint64_t kSymmetricTag = 0x73796dULL;
constexpr std::uint64_t kAntisymmetricTag = 0x616e7469ULL;
constexpr std::uint64_t kDilationTag = 0x64696cULL;
/// Weight of the off-diagonal mixing term relative to the axis dilation.
constexpr double kMixingWeight = 3.0;

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t key) {
	RandomStream rng(key);
	Matrix m(rows, cols);
	for (Eigen::Index i = 0; i < rows; ++i)
		for (Eigen::Index j = 0; j < cols; ++j)
			m(i, j) = rng.normal();
	return m;
}

double spectral_norm(const Matrix& m) {
	Eigen::JacobiSVD<Matrix> svd(m);
	return svd.singularValues()[0];
}

} // namespace

void GroundTruth::check() const {
	if (!(temperature > 0.0) || !std::isfinite(temperature))
		throw ValidationError("temperature", "must be a finite positive real");
	if (projection.k() != model.k())
		throw DimensionError("truth projection has k=" + std::to_string(projection.k()) + " but model has k=" +
		                     std::to_string(model.k()));
}

EmbeddingTable sample_embeddings(std::size_t n, Eigen::Index d, std::uint64_t seed, std::string_view prefix) {
	if (n < 3)
		throw ValidationError("n", "need at least 3 items");
	if (d < 1)
		throw ValidationError("d", "need at least one dimension");
	const std::size_t width = std::max<std::size_t>(4, std::to_string(n - 1).size());
	std::vector<std::string> ids;
	ids.reserve(n);
	for (std::size_t i = 0; i < n; ++i) {
		std::string digits = std::to_string(i);
		ids.push_back(std::string(prefix) + std::string(width - digits.size(), '0') + digits);
	}
	return EmbeddingTable(std::move(ids), normal_matrix(static_cast<Eigen::Index>(n), d, derive_key(seed, kEmbeddingTag)));
}

std::vector<TripletSkeleton> sample_skeletons(const EmbeddingTable& table, std::size_t count, std::uint64_t seed) {
	const std::size_t n = table.size();
	if (n < 3)
		throw ValidationError("table", "need at least 3 items to form a triplet");
	RandomStream rng(derive_key(seed, kSkeletonTag));
	std::vector<TripletSkeleton> out;
	out.reserve(count);
	const auto& ids = table.ids();
	for (std::size_t i = 0; i < count; ++i) {
		// Three draws without replacement.
		const auto a = rng.below(n);
		auto b = rng.below(n - 1);
		if (b >= a)
			++b;
		auto c = rng.below(n - 2);
		const auto lo = std::min(a, b);
		const auto hi = std::max(a, b);
		if (c >= lo)
			++c;
		if (c >= hi)
			++c;
		out.push_back({ids[a], ids[b], ids[c]});
	}
	return out;
}

Vector truth_logits(const GroundTruth& truth, const EmbeddingTable& table,
                    std::span<const TripletSkeleton> skeletons) {
	truth.check();
	const Matrix x = truth.projection.project_table(table);
	std::vector<IndexedTriplet> idx;
	idx.reserve(skeletons.size());
	for (const auto& s : skeletons) {
		TripletConstraint c{s.query, s.ref1, s.ref2, 1};
		check_constraint(c);
		idx.push_back({static_cast<std::uint32_t>(table.index_of(s.query)),
		               static_cast<std::uint32_t>(table.index_of(s.ref1)),
		               static_cast<std::uint32_t>(table.index_of(s.ref2)), 1});
	}
	const TripletBatch batch = make_batch(x, idx);
	if (batch.size() == 0)
		return Vector();
	return truth.model.bilinear_rows(batch.query, batch.ref1 - batch.ref2) / truth.temperature;
}

TripletDataset sample_judgments(const GroundTruth& truth, const EmbeddingTable& table,
                                std::span<const TripletSkeleton> skeletons, std::uint64_t seed) {
	const Vector logits = truth_logits(truth, table, skeletons);
	const std::uint64_t key = derive_key(seed, kJudgmentTag);
	TripletDataset out;
	out.constraints.reserve(skeletons.size());
	for (std::size_t i = 0; i < skeletons.size(); ++i) {
		const double p = sigmoid(logits[static_cast<Eigen::Index>(i)]);
		const int chosen = uniform_at(key, i) < p ? 1 : 2;
		out.constraints.push_back({skeletons[i].query, skeletons[i].ref1, skeletons[i].ref2, chosen});
	}
	return out;
}

double bayes_accuracy_from_logits(const Vector& logits) {
	if (logits.size() == 0)
		return 0.0;
	double total = 0.0;
	for (Eigen::Index i = 0; i < logits.size(); ++i)
		total += sigmoid(std::abs(logits[i]));
	return total / static_cast<double>(logits.size());
}

double bayes_accuracy(const GroundTruth& truth, const EmbeddingTable& table,
                      std::span<const TripletSkeleton> skeletons) {
	return bayes_accuracy_from_logits(truth_logits(truth, table, skeletons));
}

Matrix symmetric_truth_weights(Eigen::Index k, std::uint64_t seed) {
	if (k < 1)
		throw ValidationError("k", "must be at least 1");
	RandomStream rng(derive_key(seed, kDilationTag));
	Vector dilation(k);
	for (Eigen::Index i = 0; i < k; ++i)
		dilation[i] = std::exp(rng.normal());
	const Matrix b = normal_matrix(k, k, derive_key(seed, kSymmetricTag));
	Matrix s = kMixingWeight * b * b.transpose() / static_cast<double>(k);
	s.diagonal() += dilation;
	s = 0.5 * (s + s.transpose());
	return s / spectral_norm(s);
}

Matrix mixed_truth_weights(Eigen::Index k, double asymmetry, std::uint64_t seed) {
	if (!(asymmetry >= 0.0 && asymmetry <= 1.0))
		throw ValidationError("asymmetry", "must lie in [0, 1]");
	Matrix w = (1.0 - asymmetry) * symmetric_truth_weights(k, seed);
	if (asymmetry > 0.0 && k > 1) {
		const Matrix c = normal_matrix(k, k, derive_key(seed, kAntisymmetricTag));
		Matrix a = c - c.transpose();
		a /= spectral_norm(a);
		w += asymmetry * a;
	}
	return w;
}

GroundTruth make_ground_truth(Family family, Eigen::Index k, double asymmetry, std::uint64_t seed,
                              PcaProjection projection, double temperature) {
	if (family != Family::unconstrained && asymmetry != 0.0)
		throw ValidationError("asymmetry", "family " + std::string(to_string(family)) +
		                                       " cannot express asymmetric similarity; use asymmetry = 0");
	if (projection.k() != k)
		throw DimensionError("projection has k=" + std::to_string(projection.k()) + ", truth requested k=" +
		                     std::to_string(k));

	auto build = [&]() -> WeightModel {
		switch (family) {
		case Family::identity: return WeightModel::identity(k);
		case Family::unconstrained: return WeightModel::unconstrained(mixed_truth_weights(k, asymmetry, seed));
		case Family::symmetric: {
			// S = L L^T, so V = L^T gives V^T V = S.
			const Matrix s = symmetric_truth_weights(k, seed);
			Eigen::LLT<Matrix> llt(s);
			if (llt.info() != Eigen::Success)
				throw Error("symmetric truth is not positive definite");
			return WeightModel::symmetric(llt.matrixL().transpose());
		}
		case Family::diagonal_nonneg:
			return WeightModel::diagonal_nonneg(symmetric_truth_weights(k, seed).diagonal());
		case Family::diagonal_signed_l2:
			return WeightModel::diagonal_signed_l2(symmetric_truth_weights(k, seed).diagonal(), 0.0);
		}
		throw ValidationError("family", "unknown family");
	};
	GroundTruth truth{build(), std::move(projection), temperature};
	truth.check();
	return truth;
}

double calibrate_temperature(const GroundTruth& truth, const EmbeddingTable& table,
                             std::span<const TripletSkeleton> skeletons, double target) {
	GroundTruth unit = truth;
	unit.temperature = 1.0;
	const Vector logits = truth_logits(unit, table, skeletons);
	auto bayes_at = [&](double t) { return bayes_accuracy_from_logits(logits / t); };

	// Bayes accuracy decreases monotonically in temperature.
	double lo = 1e-12;
	double hi = 1e12;
	if (!(target > 0.5) || target >= bayes_at(lo))
		throw ValidationError("target", "Bayes accuracy " + std::to_string(target) +
		                                    " is not reachable on these skeletons");
	for (int iter = 0; iter < 400; ++iter) {
		const double mid = std::sqrt(lo * hi);
		if (bayes_at(mid) > target)
			lo = mid;
		else
			hi = mid;
		if (hi / lo - 1.0 < 1e-10)
			break;
	}
	return std::sqrt(lo * hi);
}

} // namespace simalign
