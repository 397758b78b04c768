/// @file  trainer.hpp
/// @brief Minibatch Nesterov SGD with windowed early stopping on training accuracy.

#pragma once

#include <simalign/model.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace simalign {

/// How two consecutive accuracy windows are compared.
enum class StopRule {
	window_max,   ///< stop when max(last P) <= max(previous P)
	window_mean,  ///< stop when mean(last P) <= mean(previous P)
};

std::string_view to_string(StopRule rule) noexcept;
StopRule parse_stop_rule(std::string_view tag);

struct TrainingConfig {
	double learning_rate = 1e-5;
	double momentum = 0.9;
	std::size_t batch_size = 256;
	std::size_t max_epochs = 1000;
	std::size_t patience_window = 10;
	std::uint64_t seed = 0;
	/// L2 coefficient; used by diagonal_signed_l2 only.
	double lambda = 0.0;
	StopRule stop_rule = StopRule::window_max;

	/// Throws ValidationError naming the bad field.
	void check() const;

	/// lr 1e-5, momentum 0.9.
	static TrainingConfig standard();
	/// lr 1e-9, momentum 0.9.
	static TrainingConfig unconstrained_large();
};

struct EpochRecord {
	double loss = 0.0;      ///< mean NLL per triplet on the training set, plus any penalty
	double accuracy = 0.0;  ///< training accuracy after the epoch
	double seconds = 0.0;
};

enum class StopReason { early_stop, max_epochs, no_parameters };

std::string_view to_string(StopReason reason) noexcept;

struct TrainingHistory {
	std::vector<EpochRecord> epochs;
	StopReason stop_reason = StopReason::no_parameters;

	std::size_t epochs_run() const noexcept { return epochs.size(); }
};

struct TrainingResult {
	WeightModel model;
	TrainingHistory history;
};

/// Accuracy and mean log-likelihood of the human choices.
struct Evaluation {
	double accuracy = 0.0;
	double mean_log_likelihood = 0.0;
	std::size_t count = 0;
};

/// One pass over `triplets` (rows of `projected`), in fixed-size chunks.
/// Correct means P(human choice) > 0.5 strictly. Throws ValidationError on an empty set.
Evaluation evaluate(const WeightModel& model, const Matrix& projected,
                    std::span<const IndexedTriplet> triplets);

double epoch_accuracy(const WeightModel& model, const Matrix& projected,
                      std::span<const IndexedTriplet> triplets);

/// Order in which epoch `epoch` (1-based) visits m triplets.
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t m);

/// True when the early-stopping rule fires given accuracies so far.
bool should_stop(std::span<const double> accuracies, std::size_t window, StopRule rule);

using EpochCallback = std::function<void(std::size_t epoch, const EpochRecord&)>;

/// Trains `initial` on the given triplets and returns the final-epoch model.
///
/// Each step evaluates the minibatch-mean gradient at the look-ahead point
/// theta + mu*u, then u <- mu*u - lr*grad and theta <- theta + u. Identity
/// models are returned untouched with an empty history. Throws DivergenceError
/// if the loss or any parameter becomes non-finite.
TrainingResult train(WeightModel initial, const Matrix& projected, std::span<const IndexedTriplet> triplets,
                     const TrainingConfig& config, const EpochCallback& on_epoch = {});

} // namespace simalign
