#include <simalign/error.hpp>
#include <simalign/experiments.hpp>
#include <simalign/random.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <unordered_set>

namespace simalign {

namespace {

constexpr std::uint64_t kTripletFoldTag = 0x74726970ULL;
constexpr std::uint64_t kImageFoldTag = 0x696d6167ULL;
constexpr std::uint64_t kRunSeedTag = 0x72756eULL;

std::size_t family_rank(Family f) {
	return static_cast<std::size_t>(f);
}

std::vector<IndexedTriplet> subset(std::span<const IndexedTriplet> all, const std::vector<std::size_t>& idx) {
	std::vector<IndexedTriplet> out;
	out.reserve(idx.size());
	for (auto i : idx)
		out.push_back(all[i]);
	return out;
}

} // namespace

std::string_view to_string(FoldMode mode) noexcept {
	return mode == FoldMode::heldout_triplets ? "triplets" : "images";
}

FoldMode parse_fold_mode(std::string_view tag) {
	if (tag == "triplets")
		return FoldMode::heldout_triplets;
	if (tag == "images")
		return FoldMode::heldout_images;
	throw ValidationError("mode", "expected 'triplets' or 'images', got '" + std::string(tag) + "'");
}

std::string_view to_string(Split split) noexcept {
	return split == Split::train ? "train" : "validation";
}

std::vector<FoldSpec> kfold_triplets(std::size_t dataset_size, std::size_t n_folds, std::uint64_t seed) {
	if (n_folds < 2)
		throw ValidationError("n_folds", "need at least 2 folds, got " + std::to_string(n_folds));
	if (dataset_size < n_folds)
		throw ValidationError("dataset", std::to_string(dataset_size) + " triplets cannot fill " +
		                                     std::to_string(n_folds) + " folds");
	const auto order = permutation(dataset_size, derive_key(seed, kTripletFoldTag));
	const std::size_t base = dataset_size / n_folds;
	const std::size_t extra = dataset_size % n_folds;

	std::vector<std::size_t> part_of(dataset_size);
	std::size_t pos = 0;
	for (std::size_t f = 0; f < n_folds; ++f) {
		const std::size_t len = base + (f < extra ? 1 : 0);
		for (std::size_t j = 0; j < len; ++j)
			part_of[order[pos++]] = f;
	}

	std::vector<FoldSpec> folds(n_folds);
	for (std::size_t f = 0; f < n_folds; ++f) {
		folds[f].mode = FoldMode::heldout_triplets;
		folds[f].fold = f;
	}
	// Ascending index order within each list keeps training input independent of the permutation.
	for (std::size_t i = 0; i < dataset_size; ++i) {
		for (std::size_t f = 0; f < n_folds; ++f) {
			if (part_of[i] == f)
				folds[f].validation.push_back(i);
			else
				folds[f].train.push_back(i);
		}
	}
	return folds;
}

FoldSpec fold_from_heldout_images(std::span<const IndexedTriplet> triplets, const EmbeddingTable& table,
                                  std::vector<std::string> heldout, std::size_t fold_index) {
	std::vector<bool> held(table.size(), false);
	for (const auto& id : heldout)
		held[table.index_of(id)] = true;
	FoldSpec fold;
	fold.mode = FoldMode::heldout_images;
	fold.fold = fold_index;
	fold.heldout_images = std::move(heldout);
	for (std::size_t i = 0; i < triplets.size(); ++i) {
		const auto& t = triplets[i];
		if (held[t.query] || held[t.ref1] || held[t.ref2])
			fold.validation.push_back(i);
		else
			fold.train.push_back(i);
	}
	return fold;
}

std::vector<FoldSpec> kfold_images(const TripletDataset& dataset, const EmbeddingTable& table,
                                   std::size_t n_folds, double target_train_fraction, std::uint64_t seed) {
	if (n_folds < 1)
		throw ValidationError("n_folds", "need at least 1 fold");
	if (!(target_train_fraction > 0.0 && target_train_fraction < 1.0))
		throw ValidationError("target_train_fraction", "must lie in (0, 1)");
	const auto triplets = index_dataset(dataset, table);
	const std::size_t m = triplets.size();
	if (m == 0)
		throw ValidationError("dataset", "empty dataset");

	// Images that appear in at least one triplet, in table order.
	std::vector<std::vector<std::size_t>> touching(table.size());
	for (std::size_t i = 0; i < m; ++i) {
		const auto& t = triplets[i];
		touching[t.query].push_back(i);
		touching[t.ref1].push_back(i);
		touching[t.ref2].push_back(i);
	}
	std::vector<std::size_t> images;
	for (std::size_t j = 0; j < table.size(); ++j)
		if (!touching[j].empty())
			images.push_back(j);

	const double target = target_train_fraction * static_cast<double>(m);
	std::vector<FoldSpec> folds;
	for (std::size_t f = 0; f < n_folds; ++f) {
		const auto order = permutation(images.size(), derive_key(seed, kImageFoldTag, f));
		std::vector<bool> removed(m, false);
		std::size_t surviving = m;
		std::vector<std::string> heldout;
		for (std::size_t pick : order) {
			if (static_cast<double>(surviving) <= target)
				break;
			const std::size_t image = images[pick];
			heldout.push_back(table.ids()[image]);
			for (std::size_t t : touching[image]) {
				if (!removed[t]) {
					removed[t] = true;
					--surviving;
				}
			}
		}
		FoldSpec fold = fold_from_heldout_images(triplets, table, std::move(heldout), f);
		if (fold.train.empty() || fold.validation.empty()) {
			const double achieved = static_cast<double>(fold.train.size()) / static_cast<double>(m);
			throw ValidationError("heldout_images", "fold " + std::to_string(f) +
			                                            " cannot reach the target training fraction " +
			                                            std::to_string(target_train_fraction) +
			                                            " (achieved " + std::to_string(achieved) + ")");
		}
		folds.push_back(std::move(fold));
	}
	return folds;
}

std::string check_image_fold(const FoldSpec& fold, std::span<const IndexedTriplet> triplets,
                             const EmbeddingTable& table) {
	std::vector<bool> held(table.size(), false);
	for (const auto& id : fold.heldout_images) {
		auto j = table.find(id);
		if (!j)
			return "held-out image '" + id + "' is not in the table";
		held[*j] = true;
	}
	auto touches_heldout = [&](const IndexedTriplet& t) { return held[t.query] || held[t.ref1] || held[t.ref2]; };
	if (fold.validation.empty())
		return "validation set is empty";
	for (auto i : fold.train)
		if (touches_heldout(triplets[i]))
			return "training triplet " + std::to_string(i) + " touches a held-out image";
	for (auto i : fold.validation)
		if (!touches_heldout(triplets[i]))
			return "validation triplet " + std::to_string(i) + " touches no held-out image";
	return {};
}

double mean_log_likelihood(const WeightModel& model, const Matrix& projected,
                           std::span<const IndexedTriplet> triplets) {
	return evaluate(model, projected, triplets).mean_log_likelihood;
}

bool canonical_less(const ReportRow& a, const ReportRow& b) noexcept {
	auto key = [](const ReportRow& r) {
		return std::tuple(r.fold, family_rank(r.family), r.k, static_cast<int>(r.split));
	};
	return key(a) < key(b);
}

std::vector<SummaryRow> summarize(const std::vector<ReportRow>& rows) {
	struct Acc {
		std::vector<double> accuracy;
		std::vector<double> ll;
	};
	std::map<std::tuple<std::size_t, Eigen::Index, int>, Acc> groups;
	for (const auto& r : rows) {
		auto& g = groups[{family_rank(r.family), r.k, static_cast<int>(r.split)}];
		g.accuracy.push_back(r.accuracy);
		g.ll.push_back(r.mean_ll);
	}
	auto mean_sem = [](const std::vector<double>& xs) {
		const auto n = static_cast<double>(xs.size());
		double mean = 0.0;
		for (double x : xs)
			mean += x;
		mean /= n;
		if (xs.size() < 2)
			return std::pair(mean, 0.0);
		double ss = 0.0;
		for (double x : xs)
			ss += (x - mean) * (x - mean);
		return std::pair(mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n));
	};
	std::vector<SummaryRow> out;
	for (const auto& [key, acc] : groups) {
		SummaryRow s;
		s.family = kAllFamilies[std::get<0>(key)];
		s.k = std::get<1>(key);
		s.split = static_cast<Split>(std::get<2>(key));
		s.folds = acc.accuracy.size();
		std::tie(s.accuracy_mean, s.accuracy_sem) = mean_sem(acc.accuracy);
		std::tie(s.mean_ll_mean, s.mean_ll_sem) = mean_sem(acc.ll);
		out.push_back(s);
	}
	return out;
}

const TrainingConfig& SweepSpec::config_for(Family family) const {
	auto it = per_family.find(family);
	return it == per_family.end() ? default_config : it->second;
}

void SweepSpec::check() const {
	if (ks.empty())
		throw ValidationError("ks", "sweep needs at least one k");
	if (families.empty())
		throw ValidationError("families", "sweep needs at least one family");
	for (auto k : ks)
		if (k < 1)
			throw ValidationError("ks", "k must be positive");
	default_config.check();
	for (const auto& [f, c] : per_family)
		c.check();
}

std::vector<ReportRow> run_sweep(const TripletDataset& dataset, const EmbeddingTable& corpus,
                                 const EmbeddingTable& judgments, const SweepSpec& sweep,
                                 const std::vector<FoldSpec>& folds,
                                 const std::function<void(const SweepProgress&)>& on_run) {
	sweep.check();
	if (folds.empty())
		throw ValidationError("folds", "no folds given");
	const auto triplets = index_dataset(dataset, judgments);
	if (corpus.dim() != judgments.dim())
		throw DimensionError("corpus dimension " + std::to_string(corpus.dim()) +
		                     " differs from judgment embedding dimension " + std::to_string(judgments.dim()));

	const Eigen::Index k_max = *std::max_element(sweep.ks.begin(), sweep.ks.end());
	const PcaProjection full = fit_pca(corpus, k_max, sweep.centered_projection);

	std::map<Eigen::Index, Matrix> projected;
	for (auto k : sweep.ks)
		projected.emplace(k, full.truncated(k).project_table(judgments));

	struct Run {
		std::size_t fold;
		Family family;
		Eigen::Index k;
	};
	std::vector<Run> runs;
	for (std::size_t f = 0; f < folds.size(); ++f)
		for (Family family : sweep.families)
			for (auto k : sweep.ks)
				runs.push_back({f, family, k});

	std::vector<std::array<ReportRow, 2>> results(runs.size());
	std::vector<std::exception_ptr> errors(runs.size());
	std::atomic<std::size_t> next{0};
	std::mutex progress_mutex;

	auto worker = [&] {
		for (std::size_t r = next++; r < runs.size(); r = next++) {
			const Run& run = runs[r];
			const FoldSpec& fold = folds[run.fold];
			try {
				const Matrix& x = projected.at(run.k);
				const auto train_set = subset(triplets, fold.train);
				const auto val_set = subset(triplets, fold.validation);

				TrainingConfig config = sweep.config_for(run.family);
				config.seed = derive_key(sweep.seed, kRunSeedTag, fold.fold);
				const auto trained = train(WeightModel::initial(run.family, run.k, config.lambda), x, train_set, config);

				const Evaluation tr = evaluate(trained.model, x, train_set);
				const Evaluation va = evaluate(trained.model, x, val_set);
				const std::size_t epochs = trained.history.epochs_run();
				results[r][0] = {fold.fold, run.family, run.k, Split::train, tr.accuracy, tr.mean_log_likelihood, epochs};
				results[r][1] = {fold.fold, run.family, run.k, Split::validation, va.accuracy,
				                 va.mean_log_likelihood, epochs};
				if (on_run) {
					std::lock_guard lock(progress_mutex);
					on_run({fold.fold, run.family, run.k, results[r][1]});
				}
			} catch (const std::exception& e) {
				errors[r] = std::make_exception_ptr(Error("fold " + std::to_string(fold.fold) + ", family " +
				                                          std::string(to_string(run.family)) + ", k=" +
				                                          std::to_string(run.k) + ": " + e.what()));
			}
		}
	};

	const std::size_t n_threads = std::max<std::size_t>(1, std::min(sweep.jobs, runs.size()));
	if (n_threads == 1) {
		worker();
	} else {
		std::vector<std::jthread> pool;
		for (std::size_t t = 0; t < n_threads; ++t)
			pool.emplace_back(worker);
	}
	for (const auto& e : errors)
		if (e)
			std::rethrow_exception(e);

	std::vector<ReportRow> rows;
	rows.reserve(2 * runs.size());
	for (const auto& pair : results)
		rows.insert(rows.end(), pair.begin(), pair.end());
	std::sort(rows.begin(), rows.end(), canonical_less);
	return rows;
}

std::vector<LambdaScore> lambda_sweep(const TripletDataset& dataset, const EmbeddingTable& corpus,
                                      const EmbeddingTable& judgments, Eigen::Index k,
                                      std::span<const double> grid, const TrainingConfig& base,
                                      const std::vector<FoldSpec>& folds, std::uint64_t seed,
                                      std::size_t jobs) {
	if (grid.empty())
		throw ValidationError("grid", "lambda grid is empty");
	std::vector<LambdaScore> out;
	for (double lambda : grid) {
		SweepSpec sweep;
		sweep.ks = {k};
		sweep.families = {Family::diagonal_signed_l2};
		sweep.default_config = base;
		sweep.default_config.lambda = lambda;
		sweep.seed = seed;
		sweep.jobs = jobs;
		for (const auto& s : summarize(run_sweep(dataset, corpus, judgments, sweep, folds)))
			if (s.split == Split::validation)
				out.push_back({lambda, s.accuracy_mean, s.accuracy_sem});
	}
	return out;
}

} // namespace simalign
