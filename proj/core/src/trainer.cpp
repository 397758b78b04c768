#include <simalign/error.hpp>
#include <simalign/random.hpp>
#include <simalign/trainer.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace simalign {

namespace {

constexpr std::size_t kEvalChunk = 4096;
constexpr std::uint64_t kShuffleTag = 0x73687566666c65ULL;

} // namespace

std::string_view to_string(StopRule rule) noexcept {
	return rule == StopRule::window_max ? "max" : "mean";
}

StopRule parse_stop_rule(std::string_view tag) {
	if (tag == "max")
		return StopRule::window_max;
	if (tag == "mean")
		return StopRule::window_mean;
	throw ValidationError("stop_rule", "expected 'max' or 'mean', got '" + std::string(tag) + "'");
}

std::string_view to_string(StopReason reason) noexcept {
	switch (reason) {
	case StopReason::early_stop: return "early_stop";
	case StopReason::max_epochs: return "max_epochs";
	case StopReason::no_parameters: return "no_parameters";
	}
	return "unknown";
}

void TrainingConfig::check() const {
	if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
		throw ValidationError("learning_rate", "must be a finite nonnegative real");
	if (!(momentum >= 0.0 && momentum < 1.0))
		throw ValidationError("momentum", "must lie in [0, 1)");
	if (batch_size == 0)
		throw ValidationError("batch_size", "must be positive");
	if (max_epochs == 0)
		throw ValidationError("max_epochs", "must be positive");
	if (patience_window == 0)
		throw ValidationError("patience_window", "must be positive");
	if (!(lambda >= 0.0) || !std::isfinite(lambda))
		throw ValidationError("lambda", "must be a finite nonnegative real");
}

TrainingConfig TrainingConfig::standard() {
	TrainingConfig c;
	c.learning_rate = 1e-5;
	c.momentum = 0.9;
	return c;
}

TrainingConfig TrainingConfig::unconstrained_large() {
	TrainingConfig c;
	c.learning_rate = 1e-9;
	c.momentum = 0.9;
	return c;
}

Evaluation evaluate(const WeightModel& model, const Matrix& projected,
                    std::span<const IndexedTriplet> triplets) {
	if (triplets.empty())
		throw ValidationError("dataset", "cannot evaluate on an empty triplet set");
	std::size_t correct = 0;
	double ll = 0.0;
	for (std::size_t start = 0; start < triplets.size(); start += kEvalChunk) {
		const auto chunk = triplets.subspan(start, std::min(kEvalChunk, triplets.size() - start));
		const TripletBatch batch = make_batch(projected, chunk);
		const Vector x = model.bilinear_rows(batch.query, batch.preference_differences());
		for (Eigen::Index i = 0; i < x.size(); ++i) {
			if (sigmoid(x[i]) > 0.5)
				++correct;
			ll += log_sigmoid(x[i]);
		}
	}
	const auto m = static_cast<double>(triplets.size());
	return {static_cast<double>(correct) / m, ll / m, triplets.size()};
}

double epoch_accuracy(const WeightModel& model, const Matrix& projected,
                      std::span<const IndexedTriplet> triplets) {
	return evaluate(model, projected, triplets).accuracy;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t m) {
	return permutation(m, derive_key(seed, kShuffleTag, epoch));
}

bool should_stop(std::span<const double> accuracies, std::size_t window, StopRule rule) {
	const std::size_t t = accuracies.size();
	if (window == 0 || t < 2 * window)
		return false;
	const auto recent = accuracies.subspan(t - window, window);
	const auto prior = accuracies.subspan(t - 2 * window, window);
	if (rule == StopRule::window_max)
		return *std::max_element(recent.begin(), recent.end()) <= *std::max_element(prior.begin(), prior.end());
	const double recent_sum = std::accumulate(recent.begin(), recent.end(), 0.0);
	const double prior_sum = std::accumulate(prior.begin(), prior.end(), 0.0);
	return recent_sum <= prior_sum;
}

TrainingResult train(WeightModel initial, const Matrix& projected, std::span<const IndexedTriplet> triplets,
                     const TrainingConfig& config, const EpochCallback& on_epoch) {
	config.check();
	if (projected.cols() != initial.k())
		throw DimensionError("projected embeddings have dimension " + std::to_string(projected.cols()) +
		                     ", model expects k=" + std::to_string(initial.k()));
	if (triplets.empty())
		throw ValidationError("dataset", "cannot train on an empty triplet set");

	WeightModel model = initial.family() == Family::diagonal_signed_l2
		? WeightModel::from_parameters(initial.family(), initial.k(), initial.parameters(), config.lambda)
		: std::move(initial);

	TrainingResult result{model, {}};
	if (model.family() == Family::identity)
		return result;

	const std::size_t m = triplets.size();
	Vector theta = model.parameters();
	Vector velocity = Vector::Zero(theta.size());
	std::vector<double> accuracies;

	using Clock = std::chrono::steady_clock;
	for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
		const auto started = Clock::now();
		const auto order = epoch_order(config.seed, epoch, m);
		for (std::size_t start = 0; start < m; start += config.batch_size) {
			const std::size_t len = std::min(config.batch_size, m - start);
			const auto indices = std::span<const std::size_t>(order).subspan(start, len);
			const TripletBatch batch = make_batch(projected, triplets, indices);

			Vector lookahead = theta + config.momentum * velocity;
			if (!lookahead.allFinite())
				throw DivergenceError(epoch);
			model.set_parameters(std::move(lookahead));
			const LossAndGradient lg = scaled_nll_and_gradient(model, batch, 1.0 / static_cast<double>(len));
			if (!std::isfinite(lg.loss) || !lg.gradient.allFinite())
				throw DivergenceError(epoch);

			velocity = config.momentum * velocity - config.learning_rate * lg.gradient;
			theta += velocity;
		}
		if (!theta.allFinite())
			throw DivergenceError(epoch);
		model.set_parameters(theta);

		const Evaluation eval = evaluate(model, projected, triplets);
		double penalty = 0.0;
		if (model.family() == Family::diagonal_signed_l2)
			penalty = model.lambda() * theta.squaredNorm();
		EpochRecord record;
		record.loss = -eval.mean_log_likelihood + penalty;
		record.accuracy = eval.accuracy;
		record.seconds = std::chrono::duration<double>(Clock::now() - started).count();
		if (!std::isfinite(record.loss))
			throw DivergenceError(epoch);

		result.history.epochs.push_back(record);
		accuracies.push_back(record.accuracy);
		if (on_epoch)
			on_epoch(epoch, record);

		if (should_stop(accuracies, config.patience_window, config.stop_rule)) {
			result.history.stop_reason = StopReason::early_stop;
			result.model = model;
			return result;
		}
	}
	result.history.stop_reason = StopReason::max_epochs;
	result.model = model;
	return result;
}

} // namespace simalign
