#include <simalign/model.hpp>
#include <simalign/pca.hpp>
#include <simalign/random.hpp>
#include <simalign/synthetic.hpp>
#include <simalign/trainer.hpp>

#include <benchmark/benchmark.h>

using namespace simalign;

namespace {

TripletBatch make_random_batch(Eigen::Index m, Eigen::Index k, std::uint64_t seed) {
	RandomStream rng(seed);
	auto fill = [&](Matrix& x) {
		x.resize(m, k);
		for (Eigen::Index i = 0; i < x.size(); ++i)
			x.data()[i] = rng.normal();
	};
	TripletBatch b;
	fill(b.query);
	fill(b.ref1);
	fill(b.ref2);
	b.chosen.resize(static_cast<std::size_t>(m));
	for (auto& c : b.chosen)
		c = static_cast<std::uint8_t>(1 + rng.below(2));
	return b;
}

void nll_gradient(benchmark::State& state, Family family) {
	const auto k = static_cast<Eigen::Index>(state.range(0));
	const auto batch = make_random_batch(256, k, 1);
	const auto model = WeightModel::initial(family, k, 0.01);
	for (auto _ : state)
		benchmark::DoNotOptimize(nll_and_gradient(model, batch));
	state.SetItemsProcessed(state.iterations() * batch.size());
}

void fit_pca_bench(benchmark::State& state) {
	const auto table = sample_embeddings(static_cast<std::size_t>(state.range(0)), state.range(1), 2);
	for (auto _ : state)
		benchmark::DoNotOptimize(fit_pca(table, 16));
}

void evaluate_bench(benchmark::State& state) {
	const auto table = sample_embeddings(256, 64, 3);
	const auto sk = sample_skeletons(table, 50'000, 4);
	TripletDataset ds;
	for (const auto& s : sk)
		ds.constraints.push_back({s.query, s.ref1, s.ref2, 1});
	const auto ts = index_dataset(ds, table);
	const auto model = WeightModel::initial(Family::unconstrained, 64);
	for (auto _ : state)
		benchmark::DoNotOptimize(evaluate(model, table.vectors(), ts));
	state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ts.size()));
}

} // namespace

BENCHMARK_CAPTURE(nll_gradient, diagonal_nonneg, Family::diagonal_nonneg)->Arg(8)->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(nll_gradient, symmetric, Family::symmetric)->Arg(8)->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(nll_gradient, unconstrained, Family::unconstrained)->Arg(8)->Arg(64)->Arg(512);
BENCHMARK(fit_pca_bench)->Args({512, 32})->Args({2048, 256});
BENCHMARK(evaluate_bench);

BENCHMARK_MAIN();
