#include <doctest.h>

#include <support/oracles.hpp>

#include <simalign/error.hpp>
#include <simalign/model.hpp>

#include <Eigen/Eigenvalues>

using namespace simalign;
using namespace simalign::testing;

namespace {

Vector vec(std::initializer_list<double> xs) {
	Vector v(static_cast<Eigen::Index>(xs.size()));
	Eigen::Index i = 0;
	for (double x : xs)
		v[i++] = x;
	return v;
}

Matrix mat2(double a, double b, double c, double d) {
	Matrix m(2, 2);
	m << a, b, c, d;
	return m;
}

} // namespace

TEST_CASE("effective weights per family") {
	CHECK(WeightModel::identity(3).effective_weights() == Matrix::Identity(3, 3));
	CHECK(WeightModel::diagonal_nonneg(vec({-2, 3})).effective_weights() == mat2(2, 0, 0, 3));
	CHECK(WeightModel::diagonal_signed_l2(vec({-2, 3}), 0.1).effective_weights() == mat2(-2, 0, 0, 3));
	CHECK(WeightModel::symmetric(Matrix::Identity(2, 2)).effective_weights() == Matrix::Identity(2, 2));
	// V^T V by hand for V = [[1,1],[0,1]]
	CHECK(WeightModel::symmetric(mat2(1, 1, 0, 1)).effective_weights() == mat2(1, 1, 1, 2));
	CHECK(WeightModel::unconstrained(mat2(0, 1, 0, 0)).effective_weights() == mat2(0, 1, 0, 0));
}

TEST_CASE("similarity examples") {
	CHECK(WeightModel::identity(2).similarity(vec({1, 0}), vec({0, 1})) == 0.0);
	CHECK(WeightModel::diagonal_nonneg(vec({2, -1})).similarity(vec({1, 1}), vec({1, 1})) == 3.0);
	const auto w = WeightModel::unconstrained(mat2(0, 1, 0, 0));
	CHECK(w.similarity(vec({1, 0}), vec({0, 1})) == 1.0);
	CHECK(w.similarity(vec({0, 1}), vec({1, 0})) == 0.0);
	CHECK_THROWS_AS(w.similarity(vec({1, 0, 0}), vec({0, 1})), DimensionError);
}

TEST_CASE("choice probability") {
	const auto id = WeightModel::identity(2);
	CHECK(id.choice_probability(vec({1, 0}), vec({0.3, 0.2}), vec({0.3, 0.2})) == 0.5);
	// logistic(1) = 1 / (1 + e^-1)
	CHECK(id.choice_probability(vec({1, 0}), vec({1, 0}), vec({0, 1})) ==
	      doctest::Approx(0.7310585786300049).epsilon(1e-15));
	CHECK(sigmoid(800.0) == 1.0);
	CHECK(sigmoid(-800.0) >= 0.0);
	CHECK(std::isfinite(log_sigmoid(-800.0)));
	CHECK(log_sigmoid(-800.0) == doctest::Approx(-800.0));
}

TEST_CASE("symmetric families are symmetric; unconstrained can be asymmetric") {
	RandomStream rng(derive_key(5, 1));
	for (Family f : {Family::identity, Family::diagonal_nonneg, Family::diagonal_signed_l2, Family::symmetric}) {
		for (int i = 0; i < 200; ++i) {
			const auto m = random_model(f, 5, rng);
			const Vector a = random_vector(5, rng), b = random_vector(5, rng);
			CHECK(std::abs(m.similarity(a, b) - m.similarity(b, a)) < 1e-10);
		}
	}
	const auto w = WeightModel::unconstrained(mat2(0, 1, 0, 0));
	CHECK(std::abs(w.similarity(vec({1, 0}), vec({0, 1})) - w.similarity(vec({0, 1}), vec({1, 0}))) >= 0.5);
}

TEST_CASE("symmetric family is PSD, diagonal_nonneg is nonnegative") {
	RandomStream rng(derive_key(5, 2));
	for (int i = 0; i < 50; ++i) {
		const auto s = random_model(Family::symmetric, 6, rng);
		Eigen::SelfAdjointEigenSolver<Matrix> eig(s.effective_weights());
		CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
		const auto d = random_model(Family::diagonal_nonneg, 6, rng);
		CHECK(d.effective_weights().diagonal().minCoeff() >= 0.0);
	}
}

TEST_CASE("complement and factored-form equivalence") {
	RandomStream rng(derive_key(5, 3));
	for (Family f : kAllFamilies) {
		for (int i = 0; i < 100; ++i) {
			const auto m = random_model(f, 4, rng);
			const Vector q = random_vector(4, rng), r1 = random_vector(4, rng), r2 = random_vector(4, rng);
			CHECK(std::abs(m.choice_probability(q, r1, r2) + m.choice_probability(q, r2, r1) - 1.0) < 1e-12);
			const double two_sims = sigmoid(m.similarity(q, r1) - m.similarity(q, r2));
			CHECK(std::abs(two_sims - m.choice_probability(q, r1, r2)) < 1e-10);
		}
	}
}

TEST_CASE("bilinear_rows agrees with per-row similarity") {
	RandomStream rng(derive_key(5, 4));
	for (Family f : kAllFamilies) {
		const auto m = random_model(f, 3, rng);
		const Matrix a = random_matrix(7, 3, rng), b = random_matrix(7, 3, rng);
		const Vector rows = m.bilinear_rows(a, b);
		for (Eigen::Index i = 0; i < 7; ++i)
			CHECK(rows[i] == doctest::Approx(m.similarity(a.row(i).transpose(), b.row(i).transpose())).epsilon(1e-12));
	}
}

TEST_CASE("nll examples") {
	// chosen == rejected in projection: every item costs log 2
	TripletBatch tie = random_batch(5, 3, 1);
	tie.ref2 = tie.ref1;
	RandomStream rng(9);
	for (Family f : kAllFamilies) {
		auto m = random_model(f, 3, rng, 0.0);
		CHECK(nll_and_gradient(m, tie).loss == doctest::Approx(5 * std::log(2.0)).epsilon(1e-12));
	}

	// Unconstrained W = 0, a = (1,0), b = (0,1): loss log 2, dL/dW = -0.5 a b^T
	TripletBatch one;
	one.query = Matrix(1, 2);
	one.query << 1, 0;
	one.ref1 = Matrix(1, 2);
	one.ref1 << 0, 1;
	one.ref2 = Matrix::Zero(1, 2);
	one.chosen = {1};
	const auto lg = nll_and_gradient(WeightModel::unconstrained(Matrix::Zero(2, 2)), one);
	CHECK(lg.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
	REQUIRE(lg.gradient.size() == 4);
	CHECK(lg.gradient[0] == 0.0);
	CHECK(lg.gradient[1] == -0.5);
	CHECK(lg.gradient[2] == 0.0);
	CHECK(lg.gradient[3] == 0.0);

	CHECK(nll_and_gradient(WeightModel::identity(2), one).gradient.size() == 0);
}

TEST_CASE("nll matches the from-scratch loss") {
	RandomStream rng(derive_key(8, 8));
	for (Family f : kAllFamilies) {
		for (Eigen::Index k : {1, 3, 8}) {
			const auto m = random_model(f, k, rng);
			const auto batch = random_batch(20, k, 31 + k);
			const double want = reference_loss(f, k, m.parameters(), m.lambda(), batch);
			CHECK(nll_and_gradient(m, batch).loss == doctest::Approx(want).epsilon(1e-11));
		}
	}
}

TEST_CASE("analytic gradients match central differences") {
	RandomStream rng(derive_key(8, 9));
	for (Family f : kAllFamilies) {
		for (Eigen::Index k : {1, 3, 8}) {
			const auto m = random_model(f, k, rng);
			const auto batch = random_batch(16, k, 77 + k);
			const auto analytic = nll_and_gradient(m, batch).gradient;
			const auto numeric = central_difference(
				[&](const Vector& p) { return reference_loss(f, k, p, m.lambda(), batch); }, m.parameters(), 1e-6);
			CAPTURE(to_string(f));
			CAPTURE(k);
			CHECK(relative_error(analytic, numeric) < 1e-5);
		}
	}
}

TEST_CASE("diagonal_nonneg gradient uses sign(0) = 0") {
	const auto m = WeightModel::diagonal_nonneg(vec({0.0, 1.0, -2.0}));
	const auto g = nll_and_gradient(m, random_batch(10, 3, 4)).gradient;
	CHECK(g[0] == 0.0);
	CHECK(g[1] != 0.0);
}

TEST_CASE("scaled objective") {
	const auto batch = random_batch(12, 3, 6);
	RandomStream rng(1);
	const auto m = random_model(Family::diagonal_signed_l2, 3, rng, 0.25);
	const auto full = nll_and_gradient(m, batch);
	const auto mean = scaled_nll_and_gradient(m, batch, 1.0 / 12);
	const double penalty = 0.25 * m.parameters().squaredNorm();
	CHECK(mean.loss == doctest::Approx((full.loss - penalty) / 12 + penalty).epsilon(1e-12));
	const Vector pen_grad = 0.5 * m.parameters();
	CHECK(relative_error(mean.gradient, (full.gradient - pen_grad) / 12 + pen_grad) < 1e-12);
}

TEST_CASE("param_count") {
	CHECK(param_count(Family::unconstrained, 4096) == 16'777'216);
	CHECK(param_count(Family::symmetric, 4096) == 8'390'656);
	CHECK(param_count(Family::diagonal_nonneg, 4096) == 4096);
	CHECK(param_count(Family::diagonal_signed_l2, 7) == 7);
	CHECK(param_count(Family::identity, 4096) == 0);
	CHECK(stored_param_count(Family::symmetric, 5) == 25);
}

TEST_CASE("model construction checks") {
	CHECK_THROWS_AS(WeightModel::identity(0), ValidationError);
	CHECK_THROWS_AS(WeightModel::from_parameters(Family::unconstrained, 3, Vector::Zero(8)), ValidationError);
	CHECK_THROWS_AS(WeightModel::diagonal_signed_l2(Vector::Ones(2), -1.0), ValidationError);
	Vector bad = Vector::Ones(2);
	bad[1] = std::numeric_limits<double>::infinity();
	CHECK_THROWS_AS(WeightModel::diagonal_nonneg(bad), ValidationError);
	CHECK_THROWS_AS(parse_family("mahalanobis"), ValidationError);
	for (Family f : kAllFamilies) {
		CHECK(parse_family(to_string(f)) == f);
		// every initial model reproduces the identity similarity
		const auto m = WeightModel::initial(f, 3);
		CHECK(m.effective_weights() == Matrix::Identity(3, 3));
	}
}
