/// @file  model.hpp
/// @brief Bilinear similarity models, the logistic choice rule, and the
///        triplet negative log-likelihood with analytic gradients.

#pragma once

#include <simalign/data.hpp>

#include <cstdint>
#include <span>
#include <string_view>

namespace simalign {

/// Constraint family on the k x k weight matrix W of s(a, b) = a^T W b.
enum class Family {
	identity,            ///< W = I, no parameters.
	diagonal_nonneg,     ///< W = diag(|v|).
	diagonal_signed_l2,  ///< W = diag(w) with an L2 penalty lambda*|w|^2.
	symmetric,           ///< W = V^T V.
	unconstrained,       ///< W free.
};

inline constexpr Family kAllFamilies[] = {Family::identity, Family::diagonal_nonneg,
                                          Family::diagonal_signed_l2, Family::symmetric,
                                          Family::unconstrained};

std::string_view to_string(Family family) noexcept;
/// Throws ValidationError("family", ...) for unknown tags.
Family parse_family(std::string_view tag);

/// Effective free parameters: 0, k, k, k(k+1)/2, k^2.
std::uint64_t param_count(Family family, std::uint64_t k) noexcept;

/// Number of stored reals. Symmetric stores the full V, so this is k^2 there.
std::size_t stored_param_count(Family family, Eigen::Index k) noexcept;

/// Numerically stable logistic and log-logistic.
double sigmoid(double x) noexcept;
double log_sigmoid(double x) noexcept;

/// A weight model: family tag, dimension k, and a flat parameter vector
/// (row-major for matrices). DiagonalSignedL2 also carries its penalty lambda.
class WeightModel {
public:
	static WeightModel identity(Eigen::Index k);
	static WeightModel diagonal_nonneg(Vector v);
	static WeightModel diagonal_signed_l2(Vector w, double lambda);
	static WeightModel symmetric(const Matrix& v);
	static WeightModel unconstrained(const Matrix& w);

	/// Starting point that reproduces the identity model exactly:
	/// v = 1, w = 1, V = I, W = I.
	static WeightModel initial(Family family, Eigen::Index k, double lambda = 0.0);

	/// Throws ValidationError on a parameter-count mismatch, non-finite values,
	/// k < 1, or a negative lambda.
	static WeightModel from_parameters(Family family, Eigen::Index k, Vector parameters, double lambda = 0.0);

	Family family() const noexcept { return family_; }
	Eigen::Index k() const noexcept { return k_; }
	double lambda() const noexcept { return lambda_; }
	const Vector& parameters() const noexcept { return params_; }

	/// Replaces the parameters; same size and finiteness checks as from_parameters.
	void set_parameters(Vector parameters);

	/// Materialized k x k W. Identity returns I_k.
	Matrix effective_weights() const;

	/// a^T W b without materializing W for the diagonal and symmetric families.
	double similarity(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) const;

	/// q^T W (r1 - r2): the log-odds of choosing r1.
	double logit(const Eigen::Ref<const Vector>& q, const Eigen::Ref<const Vector>& r1,
	             const Eigen::Ref<const Vector>& r2) const;

	/// P(choose r1 | q, r1, r2) = logistic(s(q, r1) - s(q, r2)).
	double choice_probability(const Eigen::Ref<const Vector>& q, const Eigen::Ref<const Vector>& r1,
	                          const Eigen::Ref<const Vector>& r2) const;

	/// Row-wise a_i^T W b_i for m x k inputs.
	Vector bilinear_rows(const Matrix& a, const Matrix& b) const;

private:
	WeightModel(Family family, Eigen::Index k, Vector params, double lambda);
	void check_dims(Eigen::Index n, const char* what) const;

	Family family_ = Family::identity;
	Eigen::Index k_ = 0;
	Vector params_;
	double lambda_ = 0.0;
};

/// Projected triplets with aligned rows. `chosen[i]` is 1 or 2.
struct TripletBatch {
	Matrix query;
	Matrix ref1;
	Matrix ref2;
	std::vector<std::uint8_t> chosen;

	Eigen::Index size() const noexcept { return query.rows(); }
	Eigen::Index k() const noexcept { return query.cols(); }

	/// Throws DimensionError / ValidationError on inconsistent shapes or labels.
	void check() const;

	/// Rows of (preferred - rejected) reference.
	Matrix preference_differences() const;
};

/// Gathers the rows of `projected` named by `triplets` (all of them, or the
/// subset at `indices`).
TripletBatch make_batch(const Matrix& projected, std::span<const IndexedTriplet> triplets);
TripletBatch make_batch(const Matrix& projected, std::span<const IndexedTriplet> triplets,
                        std::span<const std::size_t> indices);

struct LossAndGradient {
	double loss = 0.0;
	/// Gradient in the stored (unconstrained) parameter space of the family.
	Vector gradient;
};

/// loss = -sum_i log P(chosen_i) + lambda*|w|^2 (DiagonalSignedL2 only), with
/// the analytic gradient. sign(0) is taken as 0 for DiagonalNonneg.
LossAndGradient nll_and_gradient(const WeightModel& model, const TripletBatch& batch);

/// Same objective with the data term scaled: data_scale * (-sum log P) + penalty.
/// The trainer uses data_scale = 1/m so that steps see the minibatch mean.
LossAndGradient scaled_nll_and_gradient(const WeightModel& model, const TripletBatch& batch,
                                        double data_scale);

} // namespace simalign
