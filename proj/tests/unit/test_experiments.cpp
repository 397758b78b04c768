#include <doctest.h>

#include <support/oracles.hpp>

#include <simalign/error.hpp>
#include <simalign/experiments.hpp>
#include <simalign/synthetic.hpp>

#include <algorithm>
#include <numeric>
#include <set>

using namespace simalign;
using namespace simalign::testing;

namespace {

struct World {
	EmbeddingTable table;
	EmbeddingTable corpus;
	TripletDataset dataset;
};

World small_world(std::size_t n, Eigen::Index d, std::size_t m, std::uint64_t seed) {
	World w{sample_embeddings(n, d, derive_key(seed, 1)), sample_embeddings(200, d, derive_key(seed, 2), "c_"), {}};
	const auto pca = PcaProjection::identity(d);
	const auto truth = make_ground_truth(Family::unconstrained, d, 0.4, derive_key(seed, 3), pca, 0.3);
	const auto sk = sample_skeletons(w.table, m, derive_key(seed, 4));
	w.dataset = sample_judgments(truth, w.table, sk, derive_key(seed, 5));
	return w;
}

std::vector<std::size_t> sorted_union(const FoldSpec& f) {
	std::vector<std::size_t> all = f.train;
	all.insert(all.end(), f.validation.begin(), f.validation.end());
	std::sort(all.begin(), all.end());
	return all;
}

} // namespace

TEST_CASE("triplet folds partition the dataset") {
	const auto folds = kfold_triplets(10, 5, 1);
	REQUIRE(folds.size() == 5);
	std::vector<std::size_t> seen;
	for (const auto& f : folds) {
		CHECK(f.validation.size() == 2);
		CHECK(f.train.size() == 8);
		std::vector<std::size_t> expect(10);
		std::iota(expect.begin(), expect.end(), 0);
		CHECK(sorted_union(f) == expect);
		seen.insert(seen.end(), f.validation.begin(), f.validation.end());
	}
	std::sort(seen.begin(), seen.end());
	CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
	CHECK(seen.size() == 10);

	const auto big = kfold_triplets(112'784, 5, 2);
	for (const auto& f : big)
		CHECK((f.validation.size() == 22556 || f.validation.size() == 22557));

	const auto again = kfold_triplets(10, 5, 1);
	for (std::size_t i = 0; i < 5; ++i)
		CHECK(again[i].validation == folds[i].validation);
	CHECK(kfold_triplets(10, 5, 3)[0].validation != folds[0].validation);

	CHECK_THROWS_AS(kfold_triplets(10, 1, 0), ValidationError);
	CHECK_THROWS_AS(kfold_triplets(3, 5, 0), ValidationError);
}

TEST_CASE("fixed held-out image split") {
	const EmbeddingTable t({"A", "B", "C", "D", "E", "F"}, Matrix::Identity(6, 6));
	TripletDataset ds{{{"A", "B", "C", 1}, {"B", "C", "D", 1}, {"C", "D", "E", 2}, {"D", "E", "F", 1},
	                   {"E", "F", "A", 2}, {"F", "B", "C", 1}, {"B", "A", "D", 1}, {"C", "E", "F", 2}}};
	const auto ts = index_dataset(ds, t);
	const auto fold = fold_from_heldout_images(ts, t, {"A"});
	CHECK(fold.validation == std::vector<std::size_t>{0, 4, 6});
	CHECK(fold.train == std::vector<std::size_t>{1, 2, 3, 5, 7});
	CHECK(check_image_fold(fold, ts, t).empty());

	FoldSpec broken = fold;
	broken.train.push_back(0);
	CHECK_FALSE(check_image_fold(broken, ts, t).empty());
}

TEST_CASE("image folds never leak held-out images into training") {
	const auto w = small_world(40, 4, 3000, 11);
	const auto ts = index_dataset(w.dataset, w.table);
	const auto folds = kfold_images(w.dataset, w.table, 5, 0.8, 3);
	REQUIRE(folds.size() == 5);
	for (const auto& f : folds) {
		CHECK_FALSE(f.validation.empty());
		CHECK(f.train.size() <= static_cast<std::size_t>(0.8 * 3000));
		std::set<std::uint32_t> held;
		for (const auto& id : f.heldout_images)
			held.insert(static_cast<std::uint32_t>(w.table.index_of(id)));
		for (std::size_t i : f.train)
			for (std::uint32_t h : held)
				CHECK_FALSE(ts[i].touches(h));
		for (std::size_t i : f.validation) {
			bool hit = false;
			for (std::uint32_t h : held)
				hit = hit || ts[i].touches(h);
			CHECK(hit);
		}
		CHECK(sorted_union(f).size() == ts.size());
	}
	CHECK_THROWS_AS(kfold_images(w.dataset, w.table, 2, 1.5, 0), ValidationError);
}

TEST_CASE("mean log-likelihood") {
	Matrix x(3, 1);
	x << 1.0, 0.0, 0.0;
	const std::vector<IndexedTriplet> tie{{0, 1, 2, 1}};
	CHECK(mean_log_likelihood(WeightModel::identity(1), x, tie) == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
	// logit log(4) gives P = 0.8
	Matrix y(3, 1);
	y << 1.0, std::log(4.0), 0.0;
	CHECK(mean_log_likelihood(WeightModel::identity(1), y, tie) == doctest::Approx(std::log(0.8)).epsilon(1e-12));
	CHECK(std::log(0.8) == doctest::Approx(-0.223144).epsilon(1e-6));
}

TEST_CASE("summaries use the sample standard error") {
	std::vector<ReportRow> rows;
	const double accs[] = {0.6, 0.7, 0.8};
	for (std::size_t f = 0; f < 3; ++f)
		rows.push_back({f, Family::symmetric, 4, Split::validation, accs[f], -0.5 - 0.1 * static_cast<double>(f), 10});
	const auto s = summarize(rows);
	REQUIRE(s.size() == 1);
	CHECK(s[0].folds == 3);
	CHECK(s[0].accuracy_mean == doctest::Approx(0.7));
	// sample sd 0.1, divided by sqrt(3)
	CHECK(s[0].accuracy_sem == doctest::Approx(0.1 / std::sqrt(3.0)).epsilon(1e-12));
	CHECK(s[0].mean_ll_sem == doctest::Approx(0.1 / std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("sweep") {
	const auto w = small_world(30, 6, 1500, 21);
	SweepSpec spec;
	spec.ks = {2, 6};
	spec.families = {Family::identity, Family::diagonal_nonneg, Family::unconstrained};
	spec.default_config.learning_rate = 0.05;
	spec.default_config.batch_size = 64;
	spec.default_config.max_epochs = 15;
	spec.default_config.patience_window = 3;
	spec.seed = 5;
	const auto folds = kfold_triplets(w.dataset.size(), 3, 9);
	const auto rows = run_sweep(w.dataset, w.corpus, w.table, spec, folds);
	CHECK(rows.size() == 3 * 3 * 2 * 2);
	CHECK(std::is_sorted(rows.begin(), rows.end(), canonical_less));
	for (const auto& r : rows) {
		CHECK(r.accuracy >= 0.0);
		CHECK(r.accuracy <= 1.0);
		CHECK(r.mean_ll <= 0.0);
		if (r.family == Family::identity)
			CHECK(r.epochs == 0);
	}

	spec.jobs = 3;
	const auto parallel = run_sweep(w.dataset, w.corpus, w.table, spec, folds);
	REQUIRE(parallel.size() == rows.size());
	for (std::size_t i = 0; i < rows.size(); ++i) {
		CHECK(parallel[i].accuracy == rows[i].accuracy);
		CHECK(parallel[i].mean_ll == rows[i].mean_ll);
		CHECK(parallel[i].epochs == rows[i].epochs);
	}

	spec.ks = {7};
	CHECK_THROWS_AS(run_sweep(w.dataset, w.corpus, w.table, spec, folds), Error);
}

TEST_CASE("full-rank identity equals the raw dot product") {
	const auto w = small_world(20, 5, 400, 31);
	const auto pca = fit_pca(w.corpus, 5, false);
	const Matrix projected = pca.project_table(w.table);
	const auto ts = index_dataset(w.dataset, w.table);
	const auto id = WeightModel::identity(5);
	for (const auto& t : ts) {
		const Vector q = w.table.row(t.query).transpose();
		const double raw = 1.0 / (1.0 + std::exp(-(q.dot(w.table.row(t.ref1).transpose()) -
		                                          q.dot(w.table.row(t.ref2).transpose()))));
		const double got = id.choice_probability(projected.row(t.query).transpose(), projected.row(t.ref1).transpose(),
		                                         projected.row(t.ref2).transpose());
		CHECK(std::abs(raw - got) < 1e-8);
	}
}

TEST_CASE("richer families fit the training set at least as well") {
	const auto w = small_world(30, 4, 2000, 41);
	const auto ts = index_dataset(w.dataset, w.table);
	const Matrix x = w.table.vectors();
	TrainingConfig cfg;
	cfg.learning_rate = 0.05;
	cfg.batch_size = 100;
	cfg.max_epochs = 300;
	cfg.patience_window = 300;
	auto final_loss = [&](Family f) {
		return train(WeightModel::initial(f, 4), x, ts, cfg).history.epochs.back().loss;
	};
	const double id = -evaluate(WeightModel::identity(4), x, ts).mean_log_likelihood;
	const double diag = final_loss(Family::diagonal_nonneg);
	const double sym = final_loss(Family::symmetric);
	const double full = final_loss(Family::unconstrained);
	CHECK(diag <= id + 1e-3);
	CHECK(sym <= diag + 1e-3);
	CHECK(full <= sym + 1e-3);
}
