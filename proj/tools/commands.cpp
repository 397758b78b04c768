#include "commands.hpp"
#include "manifest.hpp"

#include <simalign/error.hpp>
#include <simalign/experiments.hpp>
#include <simalign/io.hpp>
#include <simalign/random.hpp>
#include <simalign/synthetic.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

namespace fs = std::filesystem;

namespace simalign::cli {

namespace {

std::string join(const std::vector<std::string>& xs, const char* sep) {
	std::string out;
	for (std::size_t i = 0; i < xs.size(); ++i) {
		if (i)
			out += sep;
		out += xs[i];
	}
	return out;
}

/// Every option of `sub`, resolved to its final value (defaults included).
std::map<std::string, std::string> resolved_flags(const CLI::App& sub) {
	std::map<std::string, std::string> out;
	for (const CLI::Option* opt : sub.get_options()) {
		if (opt == sub.get_help_ptr() || opt == sub.get_help_all_ptr())
			continue;
		std::string name = opt->get_name(false, true);
		if (name.empty())
			continue;
		while (!name.empty() && name.front() == '-')
			name.erase(name.begin());
		if (opt->count() > 0)
			out[name] = opt->get_type_size() == 0 ? std::to_string(opt->count()) : join(opt->results(), ",");
		else
			out[name] = opt->get_default_str();
	}
	return out;
}

fs::path manifest_path(const fs::path& primary) {
	return fs::path(primary.string() + ".manifest.json");
}

/// Shared shell of a subcommand: manifest, output cleanup on failure.
class Invocation {
public:
	Invocation(const CLI::App& sub, const std::vector<std::string>& argv) {
		manifest_.subcommand = sub.get_name();
		manifest_.argv = argv;
		manifest_.flags = resolved_flags(sub);
	}

	void input(const fs::path& p) { manifest_.add_input(p); }

	fs::path output(const fs::path& p) {
		guard_.add(p);
		manifest_.outputs.push_back(p.string());
		return p;
	}

	void finish(const fs::path& primary) {
		const fs::path m = manifest_path(primary);
		guard_.add(m);
		manifest_.write(m);
		guard_.commit();
	}

private:
	RunManifest manifest_;
	OutputGuard guard_;
};

std::vector<std::string> split_list(const std::string& text) {
	std::vector<std::string> out;
	std::stringstream ss(text);
	std::string item;
	while (std::getline(ss, item, ','))
		if (!item.empty())
			out.push_back(item);
	return out;
}

std::vector<Family> parse_families(const std::string& text) {
	std::vector<Family> out;
	for (const auto& tag : split_list(text))
		out.push_back(parse_family(tag));
	if (out.empty())
		throw ValidationError("families", "no families given");
	return out;
}

std::vector<Eigen::Index> parse_ks(const std::string& text) {
	std::vector<Eigen::Index> out;
	for (const auto& item : split_list(text)) {
		std::size_t used = 0;
		long long k = 0;
		try {
			k = std::stoll(item, &used);
		} catch (const std::exception&) {
			used = 0;
		}
		if (used != item.size() || k < 1)
			throw ValidationError("k", "invalid k '" + item + "'");
		out.push_back(static_cast<Eigen::Index>(k));
	}
	if (out.empty())
		throw ValidationError("k", "no k values given");
	return out;
}

std::vector<double> parse_reals(const std::string& text, const char* field) {
	std::vector<double> out;
	for (const auto& item : split_list(text)) {
		auto v = parse_real(item);
		if (!v)
			throw ValidationError(field, "invalid real '" + item + "'");
		out.push_back(*v);
	}
	return out;
}

/// Training flags shared by train, cv, and lambda-sweep.
struct TrainingFlags {
	std::string preset;
	double lr = 0.0;
	double momentum = 0.9;
	std::size_t batch = 256;
	std::size_t max_epochs = 1000;
	std::size_t patience = 10;
	std::string stop_rule = "max";
	double lambda = 0.0;

	CLI::Option* lr_opt = nullptr;
	CLI::Option* momentum_opt = nullptr;
	CLI::Option* lambda_opt = nullptr;

	void add_to(CLI::App* sub) {
		sub->add_option("--preset", preset,
		                "Hyperparameter preset: standard (lr 1e-5, momentum 0.9) or unconstrained-large (lr 1e-9)")
			->check(CLI::IsMember({"standard", "unconstrained-large"}));
		lr_opt = sub->add_option("--lr", lr, "Learning rate (overrides the preset)");
		momentum_opt = sub->add_option("--momentum", momentum, "Nesterov momentum (overrides the preset)")
		                   ->capture_default_str();
		sub->add_option("--batch", batch, "Minibatch size")->capture_default_str();
		sub->add_option("--max-epochs", max_epochs, "Epoch limit")->capture_default_str();
		sub->add_option("--patience", patience, "Early-stopping window in epochs")->capture_default_str();
		sub->add_option("--stop-rule", stop_rule, "Window comparison: max or mean")
			->check(CLI::IsMember({"max", "mean"}))
			->capture_default_str();
		lambda_opt = sub->add_option("--lambda", lambda, "L2 coefficient for diagonal_signed_l2");
	}

	TrainingConfig config(std::uint64_t seed) const {
		TrainingConfig c = preset == "unconstrained-large" ? TrainingConfig::unconstrained_large()
		                                                   : TrainingConfig::standard();
		if (lr_opt->count())
			c.learning_rate = lr;
		if (momentum_opt->count())
			c.momentum = momentum;
		c.batch_size = batch;
		c.max_epochs = max_epochs;
		c.patience_window = patience;
		c.stop_rule = parse_stop_rule(stop_rule);
		c.lambda = lambda;
		c.seed = seed;
		c.check();
		return c;
	}

	void require_lambda_for(const std::vector<Family>& families) const {
		for (Family f : families)
			if (f == Family::diagonal_signed_l2 && !lambda_opt->count())
				throw ValidationError("lambda", "diagonal_signed_l2 needs an explicit --lambda (see lambda-sweep)");
	}
};

void log(const std::string& line) { std::cerr << line << '\n'; }

std::string fmt(double x) { return format_real(x); }

// --- expand ----------------------------------------------------------------

void add_expand(CLI::App& app, const std::vector<std::string>& argv) {
	auto* sub = app.add_subcommand("expand", "Expand 2-of-8 ranked trials into triplet constraints");
	auto trials = std::make_shared<std::string>();
	auto out = std::make_shared<std::string>();
	sub->add_option("--trials", *trials, "Input trials8.csv")->required()->check(CLI::ExistingFile);
	sub->add_option("--out", *out, "Output triplets.csv")->required();
	sub->callback([sub, trials, out, argv] {
		Invocation inv(*sub, argv);
		inv.input(*trials);
		const auto loaded = load_ranked_trials(*trials);
		TripletDataset dataset;
		for (const auto& t : loaded)
			for (auto& c : expand_ranked_trial(t))
				dataset.constraints.push_back(std::move(c));
		save_triplets(dataset, inv.output(*out));
		inv.finish(*out);
		log("expanded " + std::to_string(loaded.size()) + " trials into " + std::to_string(dataset.size()) +
		    " triplets");
	});
}

// --- fit-pca ---------------------------------------------------------------

void add_fit_pca(CLI::App& app, const std::vector<std::string>& argv) {
	auto* sub = app.add_subcommand("fit-pca", "Fit the PCA projection on a reference corpus");
	struct Opts {
		std::string corpus, out;
		Eigen::Index k = 0;
		bool centered = false;
	};
	auto o = std::make_shared<Opts>();
	sub->add_option("--corpus", o->corpus, "Corpus embeddings.csv (disjoint from judged images)")
		->required()
		->check(CLI::ExistingFile);
	sub->add_option("--k", o->k, "Number of components")->required();
	sub->add_flag("--centered", o->centered, "Subtract the corpus mean before projecting");
	sub->add_option("--out", o->out, "Output pca.tam")->required();
	sub->callback([sub, o, argv] {
		Invocation inv(*sub, argv);
		inv.input(o->corpus);
		const auto corpus = load_embeddings(o->corpus);
		const auto pca = fit_pca(corpus, o->k, o->centered);
		save_pca(pca, inv.output(o->out));
		inv.finish(o->out);
		log("fitted " + std::to_string(pca.k()) + " components on " + std::to_string(corpus.size()) + " x " +
		    std::to_string(corpus.dim()) + " corpus");
	});
}

// --- train -----------------------------------------------------------------

void add_train(CLI::App& app, const std::vector<std::string>& argv) {
	auto* sub = app.add_subcommand("train", "Train one weight model");
	struct Opts {
		std::string embeddings, triplets, pca, family, out, history;
		Eigen::Index k = 0;
		std::uint64_t seed = 0;
		TrainingFlags training;
	};
	auto o = std::make_shared<Opts>();
	sub->add_option("--embeddings", o->embeddings, "Judged-image embeddings.csv")->required()->check(CLI::ExistingFile);
	sub->add_option("--triplets", o->triplets, "Training triplets.csv")->required()->check(CLI::ExistingFile);
	sub->add_option("--pca", o->pca, "pca.tam (omit to train on raw embeddings)")->check(CLI::ExistingFile);
	sub->add_option("--k", o->k, "Keep only the first k PCA components");
	sub->add_option("--family", o->family, "identity | diagonal_nonneg | diagonal_signed_l2 | symmetric | unconstrained")
		->required();
	sub->add_option("--seed", o->seed, "Seed for shuffling")->capture_default_str();
	sub->add_option("--out", o->out, "Output model.tam")->required();
	sub->add_option("--history", o->history, "Per-epoch history CSV");
	o->training.add_to(sub);

	sub->callback([sub, o, argv] {
		Invocation inv(*sub, argv);
		const Family family = parse_family(o->family);
		o->training.require_lambda_for({family});
		const TrainingConfig config = o->training.config(o->seed);

		inv.input(o->embeddings);
		inv.input(o->triplets);
		const auto table = load_embeddings(o->embeddings);
		const auto dataset = load_triplets(o->triplets);
		PcaProjection pca = PcaProjection::identity(table.dim());
		bool has_pca = false;
		if (!o->pca.empty()) {
			inv.input(o->pca);
			pca = load_pca(o->pca);
			has_pca = true;
		}
		if (o->k > 0)
			pca = pca.truncated(o->k);
		const Matrix projected = pca.project_table(table);
		const auto triplets = index_dataset(dataset, table);

		const auto result = train(WeightModel::initial(family, pca.k(), config.lambda), projected, triplets, config,
		                          [](std::size_t epoch, const EpochRecord& r) {
			                          log("epoch " + std::to_string(epoch) + " loss=" + fmt(r.loss) +
			                              " train_acc=" + fmt(r.accuracy));
		                          });

		ModelFile file;
		file.model = result.model;
		if (has_pca)
			file.pca = pca;
		file.metadata = {{"seed", std::to_string(o->seed)},
		                 {"learning_rate", fmt(config.learning_rate)},
		                 {"momentum", fmt(config.momentum)},
		                 {"batch_size", std::to_string(config.batch_size)},
		                 {"max_epochs", std::to_string(config.max_epochs)},
		                 {"patience_window", std::to_string(config.patience_window)},
		                 {"stop_rule", std::string(to_string(config.stop_rule))},
		                 {"epochs", std::to_string(result.history.epochs_run())},
		                 {"stop_reason", std::string(to_string(result.history.stop_reason))}};
		save_model(file, inv.output(o->out));
		if (!o->history.empty())
			save_history(result.history, inv.output(o->history));
		inv.finish(o->out);
		log("trained " + o->family + " k=" + std::to_string(pca.k()) + " for " +
		    std::to_string(result.history.epochs_run()) + " epochs (" +
		    std::string(to_string(result.history.stop_reason)) + ")");
	});
}

// --- eval ------------------------------------------------------------------

void add_eval(CLI::App& app, const std::vector<std::string>& argv) {
	auto* sub = app.add_subcommand("eval", "Evaluate a model on triplets");
	struct Opts {
		std::string model, embeddings, triplets, report;
	};
	auto o = std::make_shared<Opts>();
	sub->add_option("--model", o->model, "model.tam")->required()->check(CLI::ExistingFile);
	sub->add_option("--embeddings", o->embeddings, "Judged-image embeddings.csv")->required()->check(CLI::ExistingFile);
	sub->add_option("--triplets", o->triplets, "Evaluation triplets.csv")->required()->check(CLI::ExistingFile);
	sub->add_option("--report", o->report, "Write a one-row report.csv");
	sub->callback([sub, o, argv] {
		Invocation inv(*sub, argv);
		for (const auto* p : {&o->model, &o->embeddings, &o->triplets})
			inv.input(*p);
		const auto file = load_model(o->model);
		const auto table = load_embeddings(o->embeddings);
		const auto dataset = load_triplets(o->triplets);
		const PcaProjection pca = file.pca ? *file.pca : PcaProjection::identity(table.dim());
		const Matrix projected = pca.project_table(table);
		if (projected.cols() != file.model.k())
			throw DimensionError("model k=" + std::to_string(file.model.k()) + " does not match projected dimension " +
			                     std::to_string(projected.cols()));
		const auto eval = evaluate(file.model, projected, index_dataset(dataset, table));
		std::cout << "accuracy=" << fmt(eval.accuracy) << " mean_ll=" << fmt(eval.mean_log_likelihood)
		          << " triplets=" << eval.count << '\n';
		if (!o->report.empty()) {
			std::size_t epochs = 0;
			if (auto it = file.metadata.find("epochs"); it != file.metadata.end())
				epochs = std::stoul(it->second);
			ReportRow row{0, file.model.family(), file.model.k(), Split::validation, eval.accuracy,
			              eval.mean_log_likelihood, epochs};
			save_report({row}, inv.output(o->report));
			inv.finish(o->report);
		}
	});
}

// --- cv --------------------------------------------------------------------

struct SweepFlags {
	std::string corpus, embeddings, triplets, mode = "triplets";
	std::size_t folds = 5;
	double target_train_fraction = 0.8;
	std::uint64_t seed = 0;
	std::size_t jobs = 1;
	bool centered = false;
	TrainingFlags training;

	void add_to(CLI::App* sub) {
		sub->add_option("--corpus", corpus, "PCA corpus embeddings.csv")->required()->check(CLI::ExistingFile);
		sub->add_option("--embeddings", embeddings, "Judged-image embeddings.csv")->required()->check(CLI::ExistingFile);
		sub->add_option("--triplets", triplets, "triplets.csv")->required()->check(CLI::ExistingFile);
		sub->add_option("--mode", mode, "Held-out unit: triplets or images")
			->check(CLI::IsMember({"triplets", "images"}))
			->capture_default_str();
		sub->add_option("--folds", folds, "Number of folds")->capture_default_str();
		sub->add_option("--target-train-fraction", target_train_fraction,
		                "Image mode: hold out images until training drops to this fraction")
			->capture_default_str();
		sub->add_option("--seed", seed, "Seed for folds and shuffling")->capture_default_str();
		sub->add_option("--jobs", jobs, "Parallel (fold, family, k) runs")->capture_default_str();
		sub->add_flag("--centered", centered, "Subtract the corpus mean before projecting");
		training.add_to(sub);
	}

	struct Loaded {
		EmbeddingTable corpus, judgments;
		TripletDataset dataset;
		std::vector<FoldSpec> folds;
	};

	Loaded load(Invocation& inv) const {
		for (const auto* p : {&corpus, &embeddings, &triplets})
			inv.input(*p);
		Loaded l{load_embeddings(corpus), load_embeddings(embeddings), load_triplets(triplets), {}};
		if (parse_fold_mode(mode) == FoldMode::heldout_triplets)
			l.folds = kfold_triplets(l.dataset.size(), folds, seed);
		else
			l.folds = kfold_images(l.dataset, l.judgments, folds, target_train_fraction, seed);
		return l;
	}
};

void add_cv(CLI::App& app, const std::vector<std::string>& argv) {
	auto* sub = app.add_subcommand("cv", "Cross-validated accuracy-vs-k sweep across model families");
	struct Opts {
		SweepFlags sweep;
		std::string families = "identity,diagonal_nonneg,symmetric,unconstrained";
		std::string ks;
		std::vector<std::string> family_lr;
		std::string out, summary;
	};
	auto o = std::make_shared<Opts>();
	o->sweep.add_to(sub);
	sub->add_option("--families", o->families, "Comma-separated family tags")->capture_default_str();
	sub->add_option("--k", o->ks, "Comma-separated k values")->required();
	sub->add_option("--family-lr", o->family_lr, "Per-family learning rate, FAMILY=LR (repeatable)");
	sub->add_option("--out", o->out, "Output report.csv")->required();
	sub->add_option("--summary", o->summary, "Output report_summary.csv (default: beside --out)");

	sub->callback([sub, o, argv] {
		Invocation inv(*sub, argv);
		SweepSpec spec;
		spec.families = parse_families(o->families);
		spec.ks = parse_ks(o->ks);
		o->sweep.training.require_lambda_for(spec.families);
		spec.default_config = o->sweep.training.config(o->sweep.seed);
		for (const auto& item : o->family_lr) {
			const auto eq = item.find('=');
			if (eq == std::string::npos)
				throw ValidationError("family-lr", "expected FAMILY=LR, got '" + item + "'");
			auto lr = parse_real(item.substr(eq + 1));
			if (!lr)
				throw ValidationError("family-lr", "invalid learning rate in '" + item + "'");
			TrainingConfig c = spec.default_config;
			c.learning_rate = *lr;
			spec.per_family[parse_family(item.substr(0, eq))] = c;
		}
		spec.seed = o->sweep.seed;
		spec.centered_projection = o->sweep.centered;
		spec.jobs = o->sweep.jobs;

		const auto loaded = o->sweep.load(inv);
		const auto rows = run_sweep(loaded.dataset, loaded.corpus, loaded.judgments, spec, loaded.folds,
		                            [](const SweepProgress& p) {
			                            log("fold " + std::to_string(p.fold) + " " + std::string(to_string(p.family)) +
			                                " k=" + std::to_string(p.k) + " validation_acc=" +
			                                fmt(p.validation.accuracy));
		                            });
		const fs::path summary = o->summary.empty()
			? fs::path(o->out).parent_path() / "report_summary.csv"
			: fs::path(o->summary);
		save_report(rows, inv.output(o->out));
		save_summary(summarize(rows), inv.output(summary));
		inv.finish(o->out);
	});
}

// --- lambda-sweep ----------------------------------------------------------

void add_lambda_sweep(CLI::App& app, const std::vector<std::string>& argv) {
	auto* sub = app.add_subcommand("lambda-sweep",
	                               "Cross-validated accuracy of the diagonal_signed_l2 baseline over a lambda grid");
	struct Opts {
		SweepFlags sweep;
		Eigen::Index k = 0;
		std::string grid = "1e-8,1e-6,1e-4,1e-2,1";
		std::string out;
	};
	auto o = std::make_shared<Opts>();
	o->sweep.add_to(sub);
	sub->add_option("--k", o->k, "Number of PCA components")->required();
	sub->add_option("--grid", o->grid, "Comma-separated lambda values")->capture_default_str();
	sub->add_option("--out", o->out, "Output CSV: lambda,accuracy_mean,accuracy_sem")->required();
	sub->callback([sub, o, argv] {
		Invocation inv(*sub, argv);
		const auto grid = parse_reals(o->grid, "grid");
		const auto loaded = o->sweep.load(inv);
		const auto scores = lambda_sweep(loaded.dataset, loaded.corpus, loaded.judgments, o->k, grid,
		                                 o->sweep.training.config(o->sweep.seed), loaded.folds, o->sweep.seed,
		                                 o->sweep.jobs);
		std::ofstream out(inv.output(o->out), std::ios::binary | std::ios::trunc);
		out << "lambda,accuracy_mean,accuracy_sem\n";
		for (const auto& s : scores)
			out << fmt(s.lambda) << ',' << fmt(s.validation_accuracy_mean) << ',' << fmt(s.validation_accuracy_sem)
			    << '\n';
		out.close();
		if (!out)
			throw Error(o->out + ": write failed");
		inv.finish(o->out);
	});
}

// --- synth -----------------------------------------------------------------

void add_synth(CLI::App& app, const std::vector<std::string>& argv) {
	auto* sub = app.add_subcommand("synth", "Generate a synthetic dataset from a known ground-truth model");
	struct Opts {
		std::size_t n = 64;
		Eigen::Index d = 32;
		Eigen::Index k = 8;
		std::size_t corpus_n = 512;
		std::string family = "unconstrained";
		double asymmetry = 0.0;
		double temperature = 1.0;
		double target_bayes = 0.0;
		std::size_t triplets = 10000;
		std::uint64_t seed = 0;
		bool no_pca = false;
		std::string out_dir = ".";
	};
	auto o = std::make_shared<Opts>();
	sub->add_option("--n", o->n, "Judged images")->capture_default_str();
	sub->add_option("--d", o->d, "Embedding dimension")->capture_default_str();
	sub->add_option("--k", o->k, "Dimension the truth operates in")->capture_default_str();
	sub->add_option("--corpus-n", o->corpus_n, "PCA corpus size")->capture_default_str();
	sub->add_option("--family", o->family, "Truth family")->capture_default_str();
	sub->add_option("--asymmetry", o->asymmetry, "Antisymmetric share of W*, in [0, 1]")->capture_default_str();
	sub->add_option("--temperature", o->temperature, "Logit temperature")->capture_default_str();
	sub->add_option("--target-bayes", o->target_bayes,
	                "Calibrate the temperature to this Bayes accuracy (overrides --temperature)");
	sub->add_option("--triplets", o->triplets, "Number of judgments")->capture_default_str();
	sub->add_option("--seed", o->seed, "Seed")->capture_default_str();
	sub->add_flag("--no-pca", o->no_pca, "Truth acts on raw embeddings (requires k = d)");
	sub->add_option("--out-dir", o->out_dir, "Output directory")->capture_default_str();

	sub->callback([sub, o, argv] {
		Invocation inv(*sub, argv);
		const fs::path dir(o->out_dir);
		fs::create_directories(dir);
		const Family family = parse_family(o->family);

		const auto corpus = sample_embeddings(o->corpus_n, o->d, derive_key(o->seed, 1), "corpus_");
		const auto images = sample_embeddings(o->n, o->d, derive_key(o->seed, 2));
		PcaProjection pca;
		if (o->no_pca) {
			if (o->k != o->d)
				throw ValidationError("k", "--no-pca requires k = d");
			pca = PcaProjection::identity(o->d);
		} else {
			pca = fit_pca(corpus, o->k);
		}
		GroundTruth truth = make_ground_truth(family, o->k, o->asymmetry, derive_key(o->seed, 3), pca, o->temperature);
		const auto skeletons = sample_skeletons(images, o->triplets, derive_key(o->seed, 4));
		if (o->target_bayes > 0.0)
			truth.temperature = calibrate_temperature(truth, images, skeletons, o->target_bayes);
		const auto dataset = sample_judgments(truth, images, skeletons, derive_key(o->seed, 5));
		const double bayes = bayes_accuracy(truth, images, skeletons);

		save_embeddings(images, inv.output(dir / "embeddings.csv"));
		save_embeddings(corpus, inv.output(dir / "corpus.csv"));
		save_triplets(dataset, inv.output(dir / "triplets.csv"));
		ModelFile file;
		file.model = truth.model;
		if (!o->no_pca)
			file.pca = truth.projection;
		file.metadata = {{"temperature", fmt(truth.temperature)},
		                 {"asymmetry", fmt(o->asymmetry)},
		                 {"bayes_accuracy", fmt(bayes)},
		                 {"seed", std::to_string(o->seed)}};
		save_model(file, inv.output(dir / "truth.tam"));
		inv.finish(dir / "triplets.csv");

		std::cout << "truth=" << (o->asymmetry == 0.0 ? "symmetric" : "asymmetric") << '\n';
		std::cout << "temperature=" << fmt(truth.temperature) << '\n';
		std::cout << "bayes_accuracy=" << fmt(bayes) << '\n';
	});
}

} // namespace

void register_commands(CLI::App& app, const std::vector<std::string>& argv) {
	add_expand(app, argv);
	add_fit_pca(app, argv);
	add_train(app, argv);
	add_eval(app, argv);
	add_cv(app, argv);
	add_lambda_sweep(app, argv);
	add_synth(app, argv);
}

} // namespace simalign::cli
