#include <simalign/error.hpp>
#include <simalign/model.hpp>

#include <cmath>

namespace simalign {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajorMatrix> as_matrix(const Vector& params, Eigen::Index k) {
	return {params.data(), k, k};
}

Vector flatten(const Matrix& m) {
	Vector out(m.size());
	Eigen::Map<RowMajorMatrix>(out.data(), m.rows(), m.cols()) = m;
	return out;
}

double signum(double x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

} // namespace

std::string_view to_string(Family family) noexcept {
	switch (family) {
	case Family::identity: return "identity";
	case Family::diagonal_nonneg: return "diagonal_nonneg";
	case Family::diagonal_signed_l2: return "diagonal_signed_l2";
	case Family::symmetric: return "symmetric";
	case Family::unconstrained: return "unconstrained";
	}
	return "unknown";
}

Family parse_family(std::string_view tag) {
	for (Family f : kAllFamilies)
		if (to_string(f) == tag)
			return f;
	throw ValidationError("family", "unsupported family '" + std::string(tag) + "'");
}

std::uint64_t param_count(Family family, std::uint64_t k) noexcept {
	switch (family) {
	case Family::identity: return 0;
	case Family::diagonal_nonneg:
	case Family::diagonal_signed_l2: return k;
	case Family::symmetric: return k * (k + 1) / 2;
	case Family::unconstrained: return k * k;
	}
	return 0;
}

std::size_t stored_param_count(Family family, Eigen::Index k) noexcept {
	const auto uk = static_cast<std::size_t>(k);
	switch (family) {
	case Family::identity: return 0;
	case Family::diagonal_nonneg:
	case Family::diagonal_signed_l2: return uk;
	case Family::symmetric:
	case Family::unconstrained: return uk * uk;
	}
	return 0;
}

double sigmoid(double x) noexcept {
	if (x >= 0.0)
		return 1.0 / (1.0 + std::exp(-x));
	const double e = std::exp(x);
	return e / (1.0 + e);
}

double log_sigmoid(double x) noexcept {
	// log(1/(1+e^-x)) = -(max(-x,0) + log1p(e^-|x|))
	return -(std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x))));
}

WeightModel::WeightModel(Family family, Eigen::Index k, Vector params, double lambda)
	: family_(family), k_(k), params_(std::move(params)), lambda_(lambda) {
	if (k_ < 1)
		throw ValidationError("k", "must be at least 1, got " + std::to_string(k_));
	if (static_cast<std::size_t>(params_.size()) != stored_param_count(family_, k_))
		throw ValidationError("parameters", "family " + std::string(to_string(family_)) + " with k=" +
		                                        std::to_string(k_) + " needs " +
		                                        std::to_string(stored_param_count(family_, k_)) +
		                                        " parameters, got " + std::to_string(params_.size()));
	if (!params_.allFinite())
		throw ValidationError("parameters", "non-finite parameter");
	if (!(lambda_ >= 0.0) || !std::isfinite(lambda_))
		throw ValidationError("lambda", "must be a finite nonnegative real");
}

WeightModel WeightModel::identity(Eigen::Index k) { return {Family::identity, k, Vector(), 0.0}; }

WeightModel WeightModel::diagonal_nonneg(Vector v) {
	const auto k = v.size();
	return {Family::diagonal_nonneg, k, std::move(v), 0.0};
}

WeightModel WeightModel::diagonal_signed_l2(Vector w, double lambda) {
	const auto k = w.size();
	return {Family::diagonal_signed_l2, k, std::move(w), lambda};
}

WeightModel WeightModel::symmetric(const Matrix& v) {
	if (v.rows() != v.cols())
		throw DimensionError("symmetric factor V must be square");
	return {Family::symmetric, v.rows(), flatten(v), 0.0};
}

WeightModel WeightModel::unconstrained(const Matrix& w) {
	if (w.rows() != w.cols())
		throw DimensionError("unconstrained W must be square");
	return {Family::unconstrained, w.rows(), flatten(w), 0.0};
}

WeightModel WeightModel::initial(Family family, Eigen::Index k, double lambda) {
	switch (family) {
	case Family::identity: return identity(k);
	case Family::diagonal_nonneg: return diagonal_nonneg(Vector::Ones(k));
	case Family::diagonal_signed_l2: return diagonal_signed_l2(Vector::Ones(k), lambda);
	case Family::symmetric: return symmetric(Matrix::Identity(k, k));
	case Family::unconstrained: return unconstrained(Matrix::Identity(k, k));
	}
	throw ValidationError("family", "unknown family");
}

WeightModel WeightModel::from_parameters(Family family, Eigen::Index k, Vector parameters, double lambda) {
	return {family, k, std::move(parameters), family == Family::diagonal_signed_l2 ? lambda : 0.0};
}

void WeightModel::set_parameters(Vector parameters) {
	*this = WeightModel(family_, k_, std::move(parameters), lambda_);
}

void WeightModel::check_dims(Eigen::Index n, const char* what) const {
	if (n != k_)
		throw DimensionError(std::string(what) + " has dimension " + std::to_string(n) +
		                     ", model expects k=" + std::to_string(k_));
}

Matrix WeightModel::effective_weights() const {
	switch (family_) {
	case Family::identity: return Matrix::Identity(k_, k_);
	case Family::diagonal_nonneg: return params_.cwiseAbs().asDiagonal();
	case Family::diagonal_signed_l2: return params_.asDiagonal();
	case Family::symmetric: {
		const Matrix v = as_matrix(params_, k_);
		return v.transpose() * v;
	}
	case Family::unconstrained: return as_matrix(params_, k_);
	}
	return {};
}

double WeightModel::similarity(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) const {
	check_dims(a.size(), "first vector");
	check_dims(b.size(), "second vector");
	switch (family_) {
	case Family::identity: return a.dot(b);
	case Family::diagonal_nonneg: return (a.array() * params_.array().abs() * b.array()).sum();
	case Family::diagonal_signed_l2: return (a.array() * params_.array() * b.array()).sum();
	case Family::symmetric: {
		const auto v = as_matrix(params_, k_);
		const Vector va = v * a;
		const Vector vb = v * b;
		return va.dot(vb);
	}
	case Family::unconstrained: return a.dot(as_matrix(params_, k_) * b);
	}
	return 0.0;
}

double WeightModel::logit(const Eigen::Ref<const Vector>& q, const Eigen::Ref<const Vector>& r1,
                          const Eigen::Ref<const Vector>& r2) const {
	check_dims(r1.size(), "ref1");
	check_dims(r2.size(), "ref2");
	const Vector diff = r1 - r2;
	return similarity(q, diff);
}

double WeightModel::choice_probability(const Eigen::Ref<const Vector>& q, const Eigen::Ref<const Vector>& r1,
                                       const Eigen::Ref<const Vector>& r2) const {
	return sigmoid(logit(q, r1, r2));
}

Vector WeightModel::bilinear_rows(const Matrix& a, const Matrix& b) const {
	check_dims(a.cols(), "left rows");
	check_dims(b.cols(), "right rows");
	if (a.rows() != b.rows())
		throw DimensionError("row counts differ");
	switch (family_) {
	case Family::identity: return (a.array() * b.array()).rowwise().sum();
	case Family::diagonal_nonneg: return (a.array() * b.array()).matrix() * params_.cwiseAbs();
	case Family::diagonal_signed_l2: return (a.array() * b.array()).matrix() * params_;
	case Family::symmetric: {
		const auto v = as_matrix(params_, k_);
		const Matrix va = a * v.transpose();
		const Matrix vb = b * v.transpose();
		return (va.array() * vb.array()).rowwise().sum();
	}
	case Family::unconstrained: {
		const Matrix aw = a * as_matrix(params_, k_);
		return (aw.array() * b.array()).rowwise().sum();
	}
	}
	return {};
}

void TripletBatch::check() const {
	if (ref1.rows() != query.rows() || ref2.rows() != query.rows() ||
	    static_cast<Eigen::Index>(chosen.size()) != query.rows())
		throw DimensionError("triplet batch fields have inconsistent row counts");
	if (ref1.cols() != query.cols() || ref2.cols() != query.cols())
		throw DimensionError("triplet batch fields have inconsistent dimension");
	for (auto c : chosen)
		if (c != 1 && c != 2)
			throw ValidationError("chosen", "batch label must be 1 or 2");
}

Matrix TripletBatch::preference_differences() const {
	Matrix out(query.rows(), query.cols());
	for (Eigen::Index i = 0; i < query.rows(); ++i) {
		if (chosen[static_cast<std::size_t>(i)] == 1)
			out.row(i) = ref1.row(i) - ref2.row(i);
		else
			out.row(i) = ref2.row(i) - ref1.row(i);
	}
	return out;
}

TripletBatch make_batch(const Matrix& projected, std::span<const IndexedTriplet> triplets) {
	TripletBatch batch;
	const auto m = static_cast<Eigen::Index>(triplets.size());
	batch.query.resize(m, projected.cols());
	batch.ref1.resize(m, projected.cols());
	batch.ref2.resize(m, projected.cols());
	batch.chosen.resize(triplets.size());
	for (Eigen::Index i = 0; i < m; ++i) {
		const auto& t = triplets[static_cast<std::size_t>(i)];
		batch.query.row(i) = projected.row(t.query);
		batch.ref1.row(i) = projected.row(t.ref1);
		batch.ref2.row(i) = projected.row(t.ref2);
		batch.chosen[static_cast<std::size_t>(i)] = t.chosen;
	}
	return batch;
}

TripletBatch make_batch(const Matrix& projected, std::span<const IndexedTriplet> triplets,
                        std::span<const std::size_t> indices) {
	std::vector<IndexedTriplet> subset;
	subset.reserve(indices.size());
	for (auto i : indices)
		subset.push_back(triplets[i]);
	return make_batch(projected, subset);
}

LossAndGradient nll_and_gradient(const WeightModel& model, const TripletBatch& batch) {
	return scaled_nll_and_gradient(model, batch, 1.0);
}

LossAndGradient scaled_nll_and_gradient(const WeightModel& model, const TripletBatch& batch,
                                        double data_scale) {
	batch.check();
	const Eigen::Index k = model.k();
	if (batch.size() > 0 && batch.k() != k)
		throw DimensionError("batch dimension " + std::to_string(batch.k()) + " does not match model k=" +
		                     std::to_string(k));

	const Matrix& a = batch.query;
	const Matrix b = batch.preference_differences();
	const Vector x = batch.size() > 0 ? model.bilinear_rows(a, b) : Vector();

	LossAndGradient out;
	// g_i = d(-log sigma(x_i))/dx_i, scaled.
	Vector g(x.size());
	double nll = 0.0;
	for (Eigen::Index i = 0; i < x.size(); ++i) {
		nll -= log_sigmoid(x[i]);
		g[i] = -sigmoid(-x[i]) * data_scale;
	}
	out.loss = data_scale * nll;

	const Vector& params = model.parameters();
	switch (model.family()) {
	case Family::identity:
		out.gradient = Vector();
		break;
	case Family::diagonal_nonneg: {
		const Vector ab = (a.array() * b.array()).matrix().transpose() * g;
		out.gradient = params.unaryExpr(&signum).cwiseProduct(ab);
		break;
	}
	case Family::diagonal_signed_l2: {
		const Vector ab = (a.array() * b.array()).matrix().transpose() * g;
		out.gradient = ab + 2.0 * model.lambda() * params;
		out.loss += model.lambda() * params.squaredNorm();
		break;
	}
	case Family::symmetric: {
		// dL/dV = V (M + M^T), M = sum_i g_i a_i b_i^T
		const Matrix m = (a.array().colwise() * g.array()).matrix().transpose() * b;
		const auto v = as_matrix(params, k);
		out.gradient = flatten(v * (m + m.transpose()));
		break;
	}
	case Family::unconstrained: {
		const Matrix m = (a.array().colwise() * g.array()).matrix().transpose() * b;
		out.gradient = flatten(m);
		break;
	}
	}
	return out;
}

} // namespace simalign
