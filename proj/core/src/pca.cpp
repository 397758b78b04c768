#include <simalign/error.hpp>
#include <simalign/pca.hpp>

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace simalign {

PcaProjection::PcaProjection(Matrix components, Vector mean, Vector variances, bool centered)
	: components_(std::move(components)), mean_(std::move(mean)), variances_(std::move(variances)),
	  centered_(centered) {
	if (components_.rows() < 1 || components_.cols() < 1)
		throw DimensionError("PCA projection needs at least one component and one input dimension");
	if (mean_.size() != components_.cols())
		throw DimensionError("PCA mean has length " + std::to_string(mean_.size()) + ", expected " +
		                     std::to_string(components_.cols()));
	if (variances_.size() != components_.rows())
		throw DimensionError("PCA variances have length " + std::to_string(variances_.size()) +
		                     ", expected " + std::to_string(components_.rows()));
	if (!components_.allFinite() || !mean_.allFinite() || !variances_.allFinite())
		throw ValidationError("pca", "non-finite entries");
	for (Eigen::Index i = 0; i < variances_.size(); ++i) {
		if (variances_[i] < 0.0)
			throw ValidationError("variances", "negative variance at index " + std::to_string(i));
		if (i > 0 && variances_[i] > variances_[i - 1])
			throw ValidationError("variances", "not sorted in nonincreasing order at index " + std::to_string(i));
	}
}

PcaProjection PcaProjection::identity(Eigen::Index d) {
	return PcaProjection(Matrix::Identity(d, d), Vector::Zero(d), Vector::Ones(d), false);
}

Vector PcaProjection::project(const Eigen::Ref<const Vector>& z) const {
	if (z.size() != dim())
		throw DimensionError("cannot project vector of length " + std::to_string(z.size()) +
		                     " with a PCA fitted on dimension " + std::to_string(dim()));
	if (centered_)
		return components_ * (z - mean_);
	return components_ * z;
}

Matrix PcaProjection::project_rows(const Matrix& rows) const {
	if (rows.cols() != dim())
		throw DimensionError("cannot project rows of dimension " + std::to_string(rows.cols()) +
		                     " with a PCA fitted on dimension " + std::to_string(dim()));
	if (centered_)
		return (rows.rowwise() - mean_.transpose()) * components_.transpose();
	return rows * components_.transpose();
}

Matrix PcaProjection::project_table(const EmbeddingTable& table) const {
	return project_rows(table.vectors());
}

PcaProjection PcaProjection::truncated(Eigen::Index k) const {
	if (k < 1 || k > this->k())
		throw ValidationError("k", "cannot truncate a " + std::to_string(this->k()) +
		                               "-component projection to " + std::to_string(k));
	return PcaProjection(components_.topRows(k), mean_, variances_.head(k), centered_);
}

PcaProjection PcaProjection::with_centering(bool centered) const {
	PcaProjection out = *this;
	out.centered_ = centered;
	return out;
}

double PcaProjection::orthonormality_error() const {
	const Matrix gram = components_ * components_.transpose();
	return (gram - Matrix::Identity(k(), k())).cwiseAbs().maxCoeff();
}

namespace {

struct CenteredSvd {
	Vector mean;
	Vector singular_values;
	Matrix right_vectors;
	Eigen::Index rank;
};

CenteredSvd centered_svd(const EmbeddingTable& corpus) {
	const Matrix& x = corpus.vectors();
	CenteredSvd out;
	out.mean = x.colwise().mean().transpose();
	const Matrix centered = x.rowwise() - out.mean.transpose();
	Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
	out.singular_values = svd.singularValues();
	out.right_vectors = svd.matrixV();

	const double largest = out.singular_values.size() ? out.singular_values[0] : 0.0;
	const double tol = static_cast<double>(std::max(x.rows(), x.cols())) *
	                   std::numeric_limits<double>::epsilon() * largest;
	out.rank = 0;
	if (largest > 0.0) {
		for (Eigen::Index i = 0; i < out.singular_values.size(); ++i)
			if (out.singular_values[i] > tol)
				++out.rank;
	}
	return out;
}

} // namespace

Eigen::Index centered_rank(const EmbeddingTable& corpus) {
	if (corpus.size() < 2)
		return 0;
	return centered_svd(corpus).rank;
}

PcaProjection fit_pca(const EmbeddingTable& corpus, Eigen::Index k, bool centered) {
	const auto n = static_cast<Eigen::Index>(corpus.size());
	const Eigen::Index d = corpus.dim();
	if (n < 2)
		throw ValidationError("corpus", "PCA needs at least 2 rows, got " + std::to_string(n));
	if (k < 1 || k > std::min(n - 1, d))
		throw ValidationError("k", "must lie in [1, " + std::to_string(std::min(n - 1, d)) + "], got " +
		                               std::to_string(k));

	const CenteredSvd svd = centered_svd(corpus);
	if (svd.rank < k)
		throw RankError(static_cast<std::size_t>(k), static_cast<std::size_t>(svd.rank));

	Matrix components = svd.right_vectors.leftCols(k).transpose();
	for (Eigen::Index i = 0; i < k; ++i) {
		Eigen::Index pivot = 0;
		double best = -1.0;
		for (Eigen::Index j = 0; j < d; ++j) {
			const double a = std::abs(components(i, j));
			if (a > best) {
				best = a;
				pivot = j;
			}
		}
		if (components(i, pivot) < 0.0)
			components.row(i) *= -1.0;
	}
	const Vector variances =
		svd.singular_values.head(k).array().square() / static_cast<double>(n - 1);
	return PcaProjection(std::move(components), svd.mean, variances, centered);
}

} // namespace simalign
