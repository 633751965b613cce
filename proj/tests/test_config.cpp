#include "kmgan/config.hpp"
#include "kmgan/csv.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

using namespace kmgan;
namespace fs = std::filesystem;

namespace {

// Per key: a non-default file value and a flag value that differs from it.
const std::map<std::string, std::pair<std::string, std::string>>& alternates() {
    static const std::map<std::string, std::pair<std::string, std::string>> m{
        {"mode", {"reduced", "vanilla"}},
        {"dataset", {"mnist", "csv"}},
        {"data_path", {"a/b", "c/d"}},
        {"data_limit", {"100", "200"}},
        {"data_seed", {"5", "6"}},
        {"architecture", {"image", "synthetic"}},
        {"feature_dim", {"8", "32"}},
        {"classes", {"10", "7"}},
        {"batch_size", {"32", "128"}},
        {"iterations", {"10", "20"}},
        {"epochs", {"3", "4"}},
        {"adam_alpha", {"0.001", "0.005"}},
        {"adam_beta1", {"0.9", "0.1"}},
        {"adam_beta2", {"0.99", "0.9"}},
        {"adam_eps", {"1e-06", "1e-07"}},
        {"d_round", {"10000", "2.5"}},
        {"lambda", {"5", "1"}},
        {"clip_bound", {"0.01", "1"}},
        {"noise_dim", {"64", "16"}},
        {"seed", {"9", "10"}},
        {"center_update_rule", {"batch_mean", "smoothed"}},
        {"norm_reduction", {"sum", "mean"}},
        {"loss_form", {"generalized", "basic"}},
        {"vanilla_objective", {"saturating", "non_saturating"}},
        {"init_std", {"0.1", "0.05"}},
        {"out_dir", {"runs/file", "runs/flag"}},
        {"snapshot_every", {"5", "1"}},
        {"snapshot_samples", {"16", "8"}},
    };
    return m;
}

// lambda > 0 is only valid with the generalized loss form.
ConfigEntries prerequisites(const std::string& key) {
    if (key == "lambda") return {{"loss_form", "generalized"}};
    return {};
}

struct CliResult {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

CliResult cli(const std::string& args, const std::string& env = "") {
    const fs::path dir = fs::temp_directory_path() / "kmgan_cli_io";
    fs::create_directories(dir);
    const std::string cmd = env + " \"" KMGAN_CLI_PATH "\" " + args + " >" + (dir / "out").string() + " 2>" +
                            (dir / "err").string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(dir / "out");
    r.err = slurp(dir / "err");
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "kmgan_cli_test" / name;
    fs::create_directories(p.parent_path());
    return p;
}

}  // namespace

TEST(Config, AlternatesCoverEveryKey) {
    std::set<std::string> covered;
    for (const auto& [k, v] : alternates()) covered.insert(k);
    const auto& keys = ExperimentConfig::keys();
    EXPECT_EQ(covered, std::set<std::string>(keys.begin(), keys.end()));
}

TEST(Config, FlagBeatsFileBeatsDefaultForEveryKey) {
    const ExperimentConfig defaults;
    for (const auto& key : ExperimentConfig::keys()) {
        const auto& [file_value, flag_value] = alternates().at(key);
        ASSERT_NE(defaults.get(key), file_value) << key;
        ASSERT_NE(file_value, flag_value) << key;

        ConfigEntries file = prerequisites(key), flags = prerequisites(key);
        EXPECT_EQ(resolve_config(file, std::nullopt, flags).get(key), defaults.get(key)) << key;
        file.emplace_back(key, file_value);
        EXPECT_EQ(resolve_config(file, std::nullopt, prerequisites(key)).get(key), file_value) << key;
        flags.emplace_back(key, flag_value);
        EXPECT_EQ(resolve_config(file, std::nullopt, flags).get(key), flag_value) << key;
    }
}

TEST(Config, EnvOutSitsBetweenFileAndFlag) {
    EXPECT_EQ(resolve_config({{"out_dir", "f"}}, std::string("e"), {}).out_dir, "e");
    EXPECT_EQ(resolve_config({{"out_dir", "f"}}, std::string("e"), {{"out_dir", "x"}}).out_dir, "x");
    EXPECT_EQ(resolve_config({}, std::nullopt, {}).out_dir, "runs/default");
}

TEST(Config, UnknownKeyIsNamed) {
    try {
        resolve_config({{"d_rund", "3"}}, std::nullopt, {});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("d_rund", 0), 0u) << e.what();
    }
    EXPECT_THROW(resolve_config({}, std::nullopt, {{"typo", "1"}}), ConfigError);
}

TEST(Config, BadValuesAreNamed) {
    for (const auto& [key, value] : ConfigEntries{{"batch_size", "abc"},
                                                  {"batch_size", "1"},
                                                  {"d_round", "-1"},
                                                  {"d_round", "1x"},
                                                  {"mode", "fancy"},
                                                  {"clip_bound", "0"},
                                                  {"lambda", "2"},
                                                  {"dataset", "cifar"},
                                                  {"seed", "-3"}}) {
        try {
            resolve_config({}, std::nullopt, {{key, value}});
            ADD_FAILURE() << key << "=" << value << " accepted";
        } catch (const ConfigError& e) {
            EXPECT_EQ(std::string(e.what()).rfind(key, 0), 0u) << e.what();
        }
    }
}

TEST(Config, ParseText) {
    auto e = parse_config_text("# comment\n\n  mode = reduced  \nd_round=0 # trailing\n");
    ASSERT_EQ(e.size(), 2u);
    EXPECT_EQ(e[0], (std::pair<std::string, std::string>{"mode", "reduced"}));
    EXPECT_EQ(e[1], (std::pair<std::string, std::string>{"d_round", "0"}));
    EXPECT_THROW(parse_config_text("mode reduced\n"), ConfigError);
    EXPECT_THROW(parse_config_text("=3\n"), ConfigError);
    EXPECT_THROW(read_config_file("/nonexistent/kmgan.cfg"), ConfigError);
}

TEST(Config, DumpRoundTrips) {
    ConfigEntries flags;
    for (const auto& key : ExperimentConfig::keys()) flags.emplace_back(key, alternates().at(key).first);
    ExperimentConfig c = resolve_config({}, std::nullopt, flags);
    ExperimentConfig back = resolve_config(parse_config_text(c.dump()), std::nullopt, {});
    EXPECT_EQ(back.dump(), c.dump());
    EXPECT_EQ(back.train.lambda, 5.0);
    EXPECT_EQ(*back.train.clip_bound, 0.01);
}

TEST(Config, EpochsDeriveIterations) {
    ExperimentConfig c = resolve_config({}, std::nullopt, {{"epochs", "200"}, {"batch_size", "64"}});
    EXPECT_EQ(effective_train_config(c, 10000).iterations, 200u * 157u);
    c.epochs = 0;
    EXPECT_EQ(effective_train_config(c, 10000).iterations, c.train.iterations);
}

TEST(Config, ArchitectureSelection) {
    ExperimentConfig c;
    EXPECT_EQ(make_architecture(c, 100).discriminator.input_dim(), 100u);
    c.dataset = "mnist";
    EXPECT_EQ(make_architecture(c, 784).discriminator.input_dim(), 784u);
    c.architecture = "synthetic";
    EXPECT_EQ(make_architecture(c, 784).discriminator.input_dim(), 100u);
}

TEST(Cli, ConfigErrorsExitTwo) {
    const auto cfg = scratch("bad.cfg");
    std::ofstream(cfg) << "mode=regular\nd_rund=3\n";
    CliResult r = cli("train --config " + cfg.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("d_rund"), std::string::npos) << r.err;

    r = cli("train --d-round -1");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("d_round"), std::string::npos) << r.err;

    EXPECT_EQ(cli("train --no-such-flag 1").code, 2);
    EXPECT_EQ(cli("").code, 2);
    r = cli("train --config /nonexistent/x.cfg");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("/nonexistent/x.cfg"), std::string::npos);
}

TEST(Cli, DumpConfigShowsPrecedence) {
    const auto cfg = scratch("p.cfg");
    std::ofstream(cfg) << "d_round=5\nseed=4\nout_dir=from_file\n";
    CliResult r = cli("train --config " + cfg.string() + " --seed 8 --k 3 --dump-config", "KMGAN_OUT=from_env");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("d_round=5\n"), std::string::npos);
    EXPECT_NE(r.out.find("seed=8\n"), std::string::npos);
    EXPECT_NE(r.out.find("classes=3\n"), std::string::npos);
    EXPECT_NE(r.out.find("out_dir=from_env\n"), std::string::npos);
    for (const auto& key : ExperimentConfig::keys()) EXPECT_NE(r.out.find(key + "="), std::string::npos) << key;
}

// End to end on the synthetic set: train, sample, interpolate, export, classify.
TEST(Cli, PipelineOnSynthetic) {
    const fs::path run = scratch("run");
    fs::remove_all(run);
    CliResult r = cli("train --mode regular --dataset synthetic --k 4 --d-round 0 --iterations 3 --out-dir " + run.string());
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"losses.csv", "final.ckpt", "config.txt", "features_epoch0.csv"})
        EXPECT_TRUE(fs::exists(run / f)) << f;
    EXPECT_EQ(CsvTable::read(run / "losses.csv").rows(), 3u);
    const std::string ckpt = (run / "final.ckpt").string();

    r = cli("generate --checkpoint " + ckpt + " --n 5 --seed 3 --out " + (run / "gen.csv").string());
    ASSERT_EQ(r.code, 0) << r.err;
    CsvTable gen = CsvTable::read(run / "gen.csv");
    EXPECT_EQ(gen.rows(), 5u);
    EXPECT_EQ(gen.header().size(), 100u);

    r = cli("interpolate --checkpoint " + ckpt + " --z0-seed 3 --z1-seed 4 --steps 11 --out " +
            (run / "interp.csv").string());
    ASSERT_EQ(r.code, 0) << r.err;
    CsvTable in = CsvTable::read(run / "interp.csv");
    ASSERT_EQ(in.rows(), 11u);
    EXPECT_EQ(in.header()[0], "beta");
    for (std::size_t i = 0; i < 11; ++i) EXPECT_NEAR(in.at(i, 0), 0.1 * static_cast<double>(i), 1e-15);
    cli("generate --checkpoint " + ckpt + " --n 1 --seed 4 --out " + (run / "z1.csv").string());
    CsvTable z0 = CsvTable::read(run / "gen.csv"), z1 = CsvTable::read(run / "z1.csv");
    // Batch size changes the matmul kernel, hence the ulp-level tolerance.
    for (std::size_t c = 0; c < 100; ++c) {
        EXPECT_NEAR(in.at(10, c + 1), z0.at(0, c), 1e-14);
        EXPECT_NEAR(in.at(0, c + 1), z1.at(0, c), 1e-14);
    }
    EXPECT_EQ(cli("interpolate --checkpoint " + ckpt + " --steps 1 --out " + (run / "x.csv").string()).code, 2);

    r = cli("export-features --dataset synthetic --checkpoint " + ckpt + " --out " + (run / "f1.csv").string());
    ASSERT_EQ(r.code, 0) << r.err;
    cli("export-features --dataset synthetic --checkpoint " + ckpt + " --out " + (run / "f2.csv").string());
    CsvTable f = CsvTable::read(run / "f1.csv");
    EXPECT_EQ(f.rows(), 10000u);
    EXPECT_EQ(f.header(), (std::vector<std::string>{"f0", "f1", "label"}));
    EXPECT_EQ(slurp(run / "f1.csv"), slurp(run / "f2.csv"));

    r = cli("train-classifier --dataset synthetic --classifier-epochs 1 --out " + (run / "clf.ckpt").string());
    ASSERT_EQ(r.code, 0) << r.err;
    r = cli("eval --checkpoint " + ckpt + " --classifier " + (run / "clf.ckpt").string() + " --n 500 --out " +
            (run / "freq.csv").string());
    ASSERT_EQ(r.code, 0) << r.err;
    CsvTable freq = CsvTable::read(run / "freq.csv");
    double total = 0, count = 0;
    for (std::size_t i = 0; i < freq.rows(); ++i) {
        total += freq.at(i, 2);
        count += freq.at(i, 1);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(count, 500.0);
    const auto pos = r.out.find("inception score: ");
    ASSERT_NE(pos, std::string::npos) << r.out;
    const double is = std::stod(r.out.substr(pos + 17));
    EXPECT_GE(is, 1.0);
    EXPECT_LE(is, 4.0);
    fs::remove_all(run);
}

TEST(Cli, RuntimeErrorsExitThreeAndNamePath) {
    CliResult r = cli("generate --checkpoint /nonexistent/model.ckpt --out /tmp/kmgan_never.csv");
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("/nonexistent/model.ckpt"), std::string::npos) << r.err;
    r = cli("train --dataset mnist --data-path /nonexistent/mnist --iterations 1");
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("/nonexistent/mnist"), std::string::npos) << r.err;
}
