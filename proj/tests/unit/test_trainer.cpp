#include <doctest.h>

#include <support/oracles.hpp>

#include <simalign/error.hpp>
#include <simalign/trainer.hpp>

using namespace simalign;
using namespace simalign::testing;

namespace {

struct Problem {
	Matrix projected;
	std::vector<IndexedTriplet> triplets;
};

/// Random points; labels follow a random unconstrained truth.
Problem make_problem(Eigen::Index n, Eigen::Index k, std::size_t m, std::uint64_t seed) {
	RandomStream rng(derive_key(seed, 77));
	Problem p{random_matrix(n, k, rng), {}};
	const Matrix truth = random_matrix(k, k, rng);
	for (std::size_t i = 0; i < m; ++i) {
		IndexedTriplet t{};
		t.query = static_cast<std::uint32_t>(rng.below(static_cast<std::uint64_t>(n)));
		do
			t.ref1 = static_cast<std::uint32_t>(rng.below(static_cast<std::uint64_t>(n)));
		while (t.ref1 == t.query);
		do
			t.ref2 = static_cast<std::uint32_t>(rng.below(static_cast<std::uint64_t>(n)));
		while (t.ref2 == t.query || t.ref2 == t.ref1);
		const Vector q = p.projected.row(t.query).transpose();
		const double x = q.dot(truth * (p.projected.row(t.ref1) - p.projected.row(t.ref2)).transpose());
		t.chosen = rng.uniform() < 1.0 / (1.0 + std::exp(-x)) ? 1 : 2;
		p.triplets.push_back(t);
	}
	return p;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Mean-NLL gradient of the unconstrained family, written out element by element.
Matrix oracle_unconstrained_grad(const Matrix& w, const Matrix& x, const std::vector<IndexedTriplet>& ts,
                                 const std::vector<std::size_t>& idx) {
	const Eigen::Index k = w.rows();
	Matrix g = Matrix::Zero(k, k);
	for (std::size_t i : idx) {
		const auto& t = ts[i];
		std::vector<double> q(k), b(k);
		for (Eigen::Index j = 0; j < k; ++j) {
			q[j] = x(t.query, j);
			b[j] = x(t.preferred(), j) - x(t.rejected(), j);
		}
		double s = 0;
		for (Eigen::Index r = 0; r < k; ++r)
			for (Eigen::Index c = 0; c < k; ++c)
				s += q[r] * w(r, c) * b[c];
		const double coef = -(1.0 - logistic(s));
		for (Eigen::Index r = 0; r < k; ++r)
			for (Eigen::Index c = 0; c < k; ++c)
				g(r, c) += coef * q[r] * b[c];
	}
	return g / static_cast<double>(idx.size());
}

} // namespace

TEST_CASE("zero learning rate leaves parameters fixed and stops after two windows") {
	const auto p = make_problem(30, 3, 200, 1);
	TrainingConfig cfg;
	cfg.learning_rate = 0.0;
	cfg.batch_size = 32;
	cfg.patience_window = 10;
	for (Family f : {Family::diagonal_nonneg, Family::symmetric, Family::unconstrained}) {
		const auto init = WeightModel::initial(f, 3);
		const auto r = train(init, p.projected, p.triplets, cfg);
		CHECK(r.model.parameters() == init.parameters());
		CHECK(r.history.epochs_run() == 20);
		CHECK(r.history.stop_reason == StopReason::early_stop);
	}
}

TEST_CASE("identity has nothing to train") {
	const auto p = make_problem(10, 2, 20, 2);
	const auto r = train(WeightModel::identity(2), p.projected, p.triplets, TrainingConfig{});
	CHECK(r.history.epochs_run() == 0);
	CHECK(r.history.stop_reason == StopReason::no_parameters);
}

TEST_CASE("momentum zero is plain minibatch SGD") {
	const auto p = make_problem(25, 2, 101, 3);
	TrainingConfig cfg;
	cfg.learning_rate = 0.3;
	cfg.momentum = 0.0;
	cfg.batch_size = 16;
	cfg.max_epochs = 3;
	cfg.patience_window = 50;
	cfg.seed = 99;
	const auto r = train(WeightModel::initial(Family::unconstrained, 2), p.projected, p.triplets, cfg);

	Matrix w = Matrix::Identity(2, 2);
	for (std::size_t epoch = 1; epoch <= 3; ++epoch) {
		const auto order = epoch_order(cfg.seed, epoch, p.triplets.size());
		for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
			std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(s),
			                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + cfg.batch_size)));
			w -= cfg.learning_rate * oracle_unconstrained_grad(w, p.projected, p.triplets, idx);
		}
	}
	CHECK(r.history.stop_reason == StopReason::max_epochs);
	CHECK(std::abs(r.model.parameters()[0] - w(0, 0)) < 1e-12);
	CHECK(std::abs(r.model.parameters()[1] - w(0, 1)) < 1e-12);
	CHECK(std::abs(r.model.parameters()[2] - w(1, 0)) < 1e-12);
	CHECK(std::abs(r.model.parameters()[3] - w(1, 1)) < 1e-12);
}

TEST_CASE("separable one-parameter problem matches a scalar Nesterov oracle") {
	// k = 1; every query prefers the reference with the same sign as itself.
	Matrix x(4, 1);
	x << 1.0, -1.0, 2.0, -0.5;
	std::vector<IndexedTriplet> ts{{0, 2, 1, 1}, {1, 3, 0, 1}, {2, 1, 0, 2}, {3, 2, 1, 2}};
	TrainingConfig cfg;
	cfg.learning_rate = 0.1;
	cfg.momentum = 0.9;
	cfg.batch_size = 4;
	cfg.max_epochs = 10;
	cfg.patience_window = 100;
	std::vector<double> losses;
	const auto r = train(WeightModel::initial(Family::diagonal_nonneg, 1), x, ts, cfg,
	                     [&](std::size_t, const EpochRecord& e) { losses.push_back(e.loss); });

	std::vector<double> c;
	for (const auto& t : ts)
		c.push_back(x(t.query, 0) * (x(t.preferred(), 0) - x(t.rejected(), 0)));
	double v = 1.0, u = 0.0;
	std::vector<double> oracle_losses;
	for (int epoch = 0; epoch < 10; ++epoch) {
		const double look = v + cfg.momentum * u;
		double g = 0.0;
		for (double ci : c)
			g += -(1.0 - logistic(std::abs(look) * ci)) * ci;
		g *= (look > 0) - (look < 0);
		g /= static_cast<double>(c.size());
		u = cfg.momentum * u - cfg.learning_rate * g;
		v += u;
		double loss = 0.0;
		for (double ci : c)
			loss += std::log1p(std::exp(-std::abs(v) * ci));
		oracle_losses.push_back(loss / static_cast<double>(c.size()));
	}
	REQUIRE(losses.size() == 10);
	CHECK(r.history.epochs.back().accuracy == 1.0);
	CHECK(r.model.parameters()[0] == doctest::Approx(v).epsilon(1e-12));
	for (std::size_t i = 0; i < 10; ++i) {
		CHECK(losses[i] == doctest::Approx(oracle_losses[i]).epsilon(1e-12));
		if (i > 0)
			CHECK(losses[i] < losses[i - 1]);
	}
}

TEST_CASE("epoch accuracy") {
	Matrix x(3, 1);
	x << 1.0, 1.0, 0.0;
	const auto id = WeightModel::identity(1);
	// logit = 1 * (1 - 0) for choosing row 1: P = 0.73
	CHECK(epoch_accuracy(id, x, std::vector<IndexedTriplet>{{0, 1, 2, 1}}) == 1.0);
	// equal references: P = 0.5 is not a correct prediction
	Matrix tie(3, 1);
	tie << 1.0, 2.0, 2.0;
	CHECK(epoch_accuracy(id, tie, std::vector<IndexedTriplet>{{0, 1, 2, 1}, {0, 1, 2, 2}}) == 0.0);
	const std::vector<IndexedTriplet> mixed{{0, 1, 2, 1}, {0, 1, 2, 1}, {0, 1, 2, 1}, {0, 1, 2, 2}};
	CHECK(epoch_accuracy(id, x, mixed) == 0.75);
	CHECK_THROWS_AS(epoch_accuracy(id, x, std::vector<IndexedTriplet>{}), ValidationError);
}

TEST_CASE("training is deterministic and the history matches the returned model") {
	const auto p = make_problem(40, 4, 600, 5);
	TrainingConfig cfg;
	cfg.learning_rate = 0.05;
	cfg.batch_size = 64;
	cfg.max_epochs = 30;
	cfg.patience_window = 5;
	cfg.seed = 7;
	for (Family f : {Family::diagonal_nonneg, Family::symmetric, Family::unconstrained}) {
		const auto a = train(WeightModel::initial(f, 4), p.projected, p.triplets, cfg);
		const auto b = train(WeightModel::initial(f, 4), p.projected, p.triplets, cfg);
		CHECK(a.model.parameters() == b.model.parameters());
		CHECK(a.history.epochs_run() == b.history.epochs_run());
		CHECK(a.history.epochs.back().accuracy == epoch_accuracy(a.model, p.projected, p.triplets));
	}
}

TEST_CASE("a small learning rate decreases the loss") {
	const auto p = make_problem(40, 4, 400, 6);
	TrainingConfig cfg;
	cfg.learning_rate = 1e-6;
	cfg.momentum = 0.0;
	cfg.batch_size = 400;
	cfg.max_epochs = 1;
	for (Family f : {Family::diagonal_nonneg, Family::diagonal_signed_l2, Family::symmetric, Family::unconstrained}) {
		cfg.lambda = f == Family::diagonal_signed_l2 ? 0.01 : 0.0;
		const auto init = WeightModel::initial(f, 4, cfg.lambda);
		const Evaluation before = evaluate(init, p.projected, p.triplets);
		const double pen = cfg.lambda * init.parameters().squaredNorm();
		const auto r = train(init, p.projected, p.triplets, cfg);
		CAPTURE(to_string(f));
		CHECK(r.history.epochs[0].loss < -before.mean_log_likelihood + pen);
	}
}

TEST_CASE("divergence is reported") {
	const auto p = make_problem(30, 3, 200, 8);
	TrainingConfig cfg;
	cfg.learning_rate = 1e12;
	cfg.batch_size = 16;
	CHECK_THROWS_AS(train(WeightModel::initial(Family::symmetric, 3), p.projected, p.triplets, cfg), DivergenceError);
}

TEST_CASE("stopping rules") {
	const std::vector<double> rising{0.1, 0.2, 0.3, 0.4};
	CHECK_FALSE(should_stop(rising, 2, StopRule::window_max));
	CHECK_FALSE(should_stop(std::span(rising).first(3), 2, StopRule::window_max));
	const std::vector<double> flat{0.5, 0.6, 0.6, 0.55};
	CHECK(should_stop(flat, 2, StopRule::window_max));
	// mean of the last window (0.575) beats the previous (0.55)
	CHECK_FALSE(should_stop(flat, 2, StopRule::window_mean));
	const std::vector<double> falling{0.6, 0.6, 0.5, 0.6};
	CHECK(should_stop(falling, 2, StopRule::window_mean));
	CHECK(parse_stop_rule("mean") == StopRule::window_mean);
	CHECK_THROWS_AS(parse_stop_rule("median"), ValidationError);
}

TEST_CASE("configuration checks") {
	auto bad = [](auto mutate) {
		TrainingConfig c;
		mutate(c);
		return c;
	};
	CHECK_THROWS_AS(bad([](auto& c) { c.learning_rate = -1; }).check(), ValidationError);
	CHECK_THROWS_AS(bad([](auto& c) { c.momentum = 1.0; }).check(), ValidationError);
	CHECK_THROWS_AS(bad([](auto& c) { c.batch_size = 0; }).check(), ValidationError);
	CHECK_THROWS_AS(bad([](auto& c) { c.patience_window = 0; }).check(), ValidationError);
	CHECK_NOTHROW(TrainingConfig::standard().check());
	CHECK(TrainingConfig::standard().learning_rate == 1e-5);
	CHECK(TrainingConfig::unconstrained_large().learning_rate == 1e-9);
	CHECK(TrainingConfig{}.batch_size == 256);
	CHECK(TrainingConfig{}.patience_window == 10);
	CHECK(TrainingConfig{}.momentum == 0.9);
}
