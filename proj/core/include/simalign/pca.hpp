/// @file  pca.hpp
/// @brief Principal-component projection of embeddings into R^k.

#pragma once

#include <simalign/data.hpp>

namespace simalign {

/// Linear map f: R^d -> R^k onto the top-k principal directions of a corpus.
///
/// Directions come from the mean-centered corpus. By default the projection
/// is applied to raw vectors (no mean subtraction) so that angles between the
/// original embeddings are left alone; `centered()` switches to components*(z - mean).
class PcaProjection {
public:
	PcaProjection() = default;

	/// `components` is k x d with orthonormal rows in descending-variance order.
	/// Throws DimensionError / ValidationError on inconsistent shapes or unsorted variances.
	PcaProjection(Matrix components, Vector mean, Vector variances, bool centered);

	/// k = d, components = I, mean = 0: project(z) == z.
	static PcaProjection identity(Eigen::Index d);

	Eigen::Index k() const noexcept { return components_.rows(); }
	Eigen::Index dim() const noexcept { return components_.cols(); }
	bool centered() const noexcept { return centered_; }

	const Matrix& components() const noexcept { return components_; }
	const Vector& mean() const noexcept { return mean_; }
	const Vector& variances() const noexcept { return variances_; }

	Vector project(const Eigen::Ref<const Vector>& z) const;
	/// Row-wise projection of an n x d matrix into n x k.
	Matrix project_rows(const Matrix& rows) const;
	Matrix project_table(const EmbeddingTable& table) const;

	/// Keeps the first k components. Components are nested, so this equals a rank-k fit.
	PcaProjection truncated(Eigen::Index k) const;
	PcaProjection with_centering(bool centered) const;

	/// Largest |C C^T - I| entry.
	double orthonormality_error() const;

private:
	Matrix components_;
	Vector mean_;
	Vector variances_;
	bool centered_ = false;
};

/// Fits the top-k principal directions of `corpus` by SVD of the centered matrix.
///
/// Requires n >= 2 and 1 <= k <= min(n - 1, d) (ValidationError otherwise) and
/// numerical rank >= k (RankError naming the achievable rank otherwise).
/// Each component is sign-fixed so its largest-magnitude entry (lowest index on
/// ties) is nonnegative; variances are s^2 / (n - 1).
PcaProjection fit_pca(const EmbeddingTable& corpus, Eigen::Index k, bool centered = false);

/// Numerical rank of the centered corpus, using the same tolerance as fit_pca.
Eigen::Index centered_rank(const EmbeddingTable& corpus);

} // namespace simalign
