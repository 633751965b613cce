// kmgan: train, sample and audit KM-GAN models from the command line.

#include "kmgan/checkpoint.hpp"
#include "kmgan/classifier.hpp"
#include "kmgan/config.hpp"
#include "kmgan/csv.hpp"
#include "kmgan/metrics.hpp"
#include "kmgan/training.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

using namespace kmgan;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Config keys exposed as --flags on a subcommand.
struct ConfigFlags {
    std::string config_file;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App* app) {
        app->add_option("--config", config_file, "key=value config file");
        for (const auto& key : ExperimentConfig::keys()) {
            std::string names = "--" + flag_name(key);
            if (key == "classes") names += ",--k";
            options[key] = app->add_option(names, values[key], key);
        }
    }

    ExperimentConfig resolve() const {
        ConfigEntries file;
        if (!config_file.empty()) file = read_config_file(config_file);
        ConfigEntries flags;
        for (const auto& key : ExperimentConfig::keys())
            if (options.at(key)->count() > 0) flags.emplace_back(key, values.at(key));
        std::optional<std::string> env;
        if (const char* out = std::getenv("KMGAN_OUT")) env = out;
        return resolve_config(file, env, flags);
    }
};

TrainState load_state(const std::string& path) { return from_archive(Archive::load(path)); }

void write_rows(const fs::path& path, const Matrix& m, const std::string& prefix,
                const std::optional<std::vector<double>>& lead = std::nullopt, const std::string& lead_name = "") {
    std::vector<std::string> header;
    if (lead) header.push_back(lead_name);
    for (Eigen::Index c = 0; c < m.cols(); ++c) header.push_back(prefix + std::to_string(c));
    CsvTable t(header);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row;
        if (lead) row.push_back((*lead)[static_cast<std::size_t>(i)]);
        row.insert(row.end(), m.row(i).data(), m.row(i).data() + m.cols());
        t.add_row(std::move(row));
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    t.write(path);
}

int cmd_train(const ConfigFlags& flags, bool dump_only) {
    ExperimentConfig cfg = flags.resolve();
    if (dump_only) {
        std::cout << cfg.dump();
        return 0;
    }
    LabeledDataset data = load_dataset(cfg);
    TrainConfig tc = effective_train_config(cfg, data.size());
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream(fs::path(cfg.out_dir) / "config.txt") << cfg.dump();
    }
    RunOptions opt;
    opt.out_dir = cfg.out_dir;
    opt.snapshot_every_epochs = cfg.snapshot_every;
    opt.snapshot_samples = cfg.snapshot_samples;
    const std::uint64_t every = std::max<std::uint64_t>(1, tc.iterations / 20);
    opt.on_step = [&](std::uint64_t it, const LossReport& r, const TrainState&) {
        if ((it + 1) % every == 0 || it + 1 == tc.iterations)
            std::cerr << "iter " << it + 1 << "/" << tc.iterations << " l_d=" << r.l_d << " l_g=" << r.l_g
                      << " l_center=" << r.l_center << "\n";
    };
    TrainState st = run_training(tc, data, make_architecture(cfg, data.dim()), opt);
    for (const auto& w : st.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "trained " << to_string(tc.mode) << " for " << st.iteration << " iterations; artifacts in "
              << cfg.out_dir << "\n";
    return 0;
}

int cmd_generate(const std::string& ckpt, std::size_t n, std::uint64_t seed, const std::string& out) {
    TrainState st = load_state(ckpt);
    Rng rng(seed);
    write_rows(out, generate(st.generator, sample_noise(rng, n, st.config.noise_dim)), "p");
    std::cout << "wrote " << n << " samples to " << out << "\n";
    return 0;
}

int cmd_interpolate(const std::string& ckpt, std::uint64_t z0_seed, std::uint64_t z1_seed, std::size_t steps,
                    const std::string& out) {
    if (steps < 2) throw ConfigError("steps: must be at least 2");
    TrainState st = load_state(ckpt);
    Rng r0(z0_seed), r1(z1_seed);
    const Matrix z0 = sample_noise(r0, 1, st.config.noise_dim), z1 = sample_noise(r1, 1, st.config.noise_dim);
    Matrix z(static_cast<Eigen::Index>(steps), z0.cols());
    std::vector<double> betas;
    for (std::size_t i = 0; i < steps; ++i) {
        const double beta = static_cast<double>(i) / static_cast<double>(steps - 1);
        betas.push_back(beta);
        z.row(static_cast<Eigen::Index>(i)) = beta * z0 + (1.0 - beta) * z1;
    }
    write_rows(out, generate(st.generator, z), "p", betas, "beta");
    std::cout << "wrote " << steps << " interpolation rows to " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& classifier_path, std::size_t n, std::uint64_t seed,
             std::size_t splits, const std::string& out) {
    TrainState st = load_state(ckpt);
    Network clf = Archive::load(classifier_path).get_network("classifier");
    if (clf.spec.input_dim() != st.generator.spec.output_dim())
        throw ShapeError("classifier input " + std::to_string(clf.spec.input_dim()) + " != generator output " +
                         std::to_string(st.generator.spec.output_dim()));
    Rng rng(seed);
    ProbTable probs = classify(clf, generate(st.generator, sample_noise(rng, n, st.config.noise_dim)));
    FrequencyReport freq = class_frequencies(probs);
    InceptionScore is = inception_score(probs, splits);
    std::cout << freq.summary() << "inception score: " << is.mean << " +- " << is.stddev << "\n";
    if (!out.empty()) {
        CsvTable t({"class", "count", "fraction"});
        for (std::size_t c = 0; c < freq.counts.size(); ++c)
            t.add_row({static_cast<double>(c), static_cast<double>(freq.counts[c]), freq.fractions[c]});
        t.write(out);
    }
    return 0;
}

int cmd_export_features(const ConfigFlags& flags, const std::string& ckpt, const std::string& out) {
    ExperimentConfig cfg = flags.resolve();
    TrainState st = load_state(ckpt);
    LabeledDataset data = load_dataset(cfg);
    const Matrix feats = extract_features(st.discriminator, st.feature_layers, data.features);
    std::vector<std::string> header;
    for (Eigen::Index c = 0; c < feats.cols(); ++c) header.push_back("f" + std::to_string(c));
    if (data.labels) header.push_back("label");
    CsvTable t(header);
    for (Eigen::Index i = 0; i < feats.rows(); ++i) {
        std::vector<double> row(feats.row(i).data(), feats.row(i).data() + feats.cols());
        if (data.labels) row.push_back(static_cast<double>((*data.labels)[static_cast<std::size_t>(i)]));
        t.add_row(std::move(row));
    }
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    t.write(out);
    std::cout << "wrote " << feats.rows() << " feature rows to " << out << "\n";
    return 0;
}

int cmd_train_classifier(const ConfigFlags& flags, const ClassifierConfig& cc, double test_fraction,
                         const std::string& out) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test-fraction: must lie in (0, 1)");
    ExperimentConfig cfg = flags.resolve();
    LabeledDataset data = load_dataset(cfg);
    const auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(data.size()));
    LabeledDataset train = data.slice(0, data.size() - n_test), test = data.slice(data.size() - n_test, data.size());
    Network clf = train_classifier(train, cc);
    std::cout << "train accuracy " << accuracy(clf, train) << ", test accuracy " << accuracy(clf, test) << "\n";
    Archive a;
    a.put_network("classifier", clf);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    a.save(out);
    std::cout << "saved classifier to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KM-GAN: GAN training with K-Means guided discriminator features"};
    app.require_subcommand(1);

    ConfigFlags train_flags, export_flags, clf_flags;
    bool dump_config = false;
    auto* train = app.add_subcommand("train", "train a regular, reduced or vanilla model");
    train_flags.attach(train);
    train->add_flag("--dump-config", dump_config, "print the resolved configuration and exit");

    std::string ckpt, out, classifier_path;
    std::size_t n = 64, steps = 11, splits = 10;
    std::uint64_t seed = 1, z0_seed = 1, z1_seed = 2;

    auto* gen = app.add_subcommand("generate", "sample the generator of a checkpoint");
    gen->add_option("--checkpoint", ckpt)->required();
    gen->add_option("--n", n, "number of samples");
    gen->add_option("--seed", seed, "noise seed");
    gen->add_option("--out", out)->required();

    auto* interp = app.add_subcommand("interpolate", "generate along z = beta*z0 + (1-beta)*z1");
    interp->add_option("--checkpoint", ckpt)->required();
    interp->add_option("--z0-seed", z0_seed);
    interp->add_option("--z1-seed", z1_seed);
    interp->add_option("--steps", steps, "number of beta values on [0, 1]");
    interp->add_option("--out", out)->required();

    std::size_t eval_n = 5000;
    auto* eval = app.add_subcommand("eval", "class frequencies and inception score of generated samples");
    eval->add_option("--checkpoint", ckpt)->required();
    eval->add_option("--classifier", classifier_path)->required();
    eval->add_option("--n", eval_n, "number of samples");
    eval->add_option("--seed", seed, "noise seed");
    eval->add_option("--splits", splits);
    eval->add_option("--out", out, "optional frequency CSV");

    auto* exp = app.add_subcommand("export-features", "discriminator features of every sample of a dataset");
    export_flags.attach(exp);
    exp->add_option("--checkpoint", ckpt)->required();
    exp->add_option("--out", out)->required();

    ClassifierConfig cc;
    double test_fraction = 0.2;
    auto* tc = app.add_subcommand("train-classifier", "train the dense classifier used by eval");
    clf_flags.attach(tc);
    tc->add_option("--hidden", cc.hidden);
    tc->add_option("--classifier-epochs", cc.epochs);
    tc->add_option("--test-fraction", test_fraction);
    tc->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*train) return cmd_train(train_flags, dump_config);
        if (*gen) return cmd_generate(ckpt, n, seed, out);
        if (*interp) return cmd_interpolate(ckpt, z0_seed, z1_seed, steps, out);
        if (*eval) return cmd_eval(ckpt, classifier_path, eval_n, seed, splits, out);
        if (*exp) return cmd_export_features(export_flags, ckpt, out);
        if (*tc) return cmd_train_classifier(clf_flags, cc, test_fraction, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
