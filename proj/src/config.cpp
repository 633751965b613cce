#include "kmgan/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace kmgan {

namespace {

std::string shortest(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError(key + ": invalid value '" + value + "' (expected " + expected + ")");
}

double parse_double(const std::string& key, const std::string& s) {
    double v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) bad_value(key, s, "a number");
    return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) bad_value(key, s, "a non-negative integer");
    return v;
}

template <class E>
E parse_enum(const std::string& key, const std::string& s, std::initializer_list<std::pair<const char*, E>> options) {
    std::string names;
    for (const auto& [name, value] : options) {
        if (s == name) return value;
        names += (names.empty() ? "" : "|") + std::string(name);
    }
    bad_value(key, s, names);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

struct Field {
    std::string name;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class T>
Field uint_field(const std::string& name, T ExperimentConfig::*member) {
    return {name, [member](const ExperimentConfig& c) { return std::to_string(c.*member); },
            [name, member](ExperimentConfig& c, const std::string& v) { c.*member = static_cast<T>(parse_uint(name, v)); }};
}

template <class T>
Field train_uint(const std::string& name, T TrainConfig::*member) {
    return {name, [member](const ExperimentConfig& c) { return std::to_string(c.train.*member); },
            [name, member](ExperimentConfig& c, const std::string& v) {
                c.train.*member = static_cast<T>(parse_uint(name, v));
            }};
}

Field train_double(const std::string& name, double TrainConfig::*member) {
    return {name, [member](const ExperimentConfig& c) { return shortest(c.train.*member); },
            [name, member](ExperimentConfig& c, const std::string& v) { c.train.*member = parse_double(name, v); }};
}

Field adam_double(const std::string& name, double AdamConfig::*member) {
    return {name, [member](const ExperimentConfig& c) { return shortest(c.train.adam.*member); },
            [name, member](ExperimentConfig& c, const std::string& v) { c.train.adam.*member = parse_double(name, v); }};
}

Field string_field(const std::string& name, std::string ExperimentConfig::*member) {
    return {name, [member](const ExperimentConfig& c) { return c.*member; },
            [member](ExperimentConfig& c, const std::string& v) { c.*member = v; }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"mode", [](const ExperimentConfig& c) { return to_string(c.train.mode); },
                     [](ExperimentConfig& c, const std::string& v) {
                         c.train.mode = parse_enum<TrainMode>("mode", v,
                                                              {{"regular", TrainMode::regular},
                                                               {"reduced", TrainMode::reduced},
                                                               {"vanilla", TrainMode::vanilla}});
                     }});
        f.push_back(string_field("dataset", &ExperimentConfig::dataset));
        f.push_back(string_field("data_path", &ExperimentConfig::data_path));
        f.push_back(uint_field("data_limit", &ExperimentConfig::data_limit));
        f.push_back(uint_field("data_seed", &ExperimentConfig::data_seed));
        f.push_back(string_field("architecture", &ExperimentConfig::architecture));
        f.push_back(uint_field("feature_dim", &ExperimentConfig::feature_dim));
        f.push_back(train_uint("classes", &TrainConfig::classes));
        f.push_back(train_uint("batch_size", &TrainConfig::batch_size));
        f.push_back(train_uint("iterations", &TrainConfig::iterations));
        f.push_back(uint_field("epochs", &ExperimentConfig::epochs));
        f.push_back(adam_double("adam_alpha", &AdamConfig::alpha));
        f.push_back(adam_double("adam_beta1", &AdamConfig::beta1));
        f.push_back(adam_double("adam_beta2", &AdamConfig::beta2));
        f.push_back(adam_double("adam_eps", &AdamConfig::epsilon));
        f.push_back(train_double("d_round", &TrainConfig::d_round));
        f.push_back(train_double("lambda", &TrainConfig::lambda));
        f.push_back({"clip_bound",
                     [](const ExperimentConfig& c) {
                         return c.train.clip_bound ? shortest(*c.train.clip_bound) : std::string("none");
                     },
                     [](ExperimentConfig& c, const std::string& v) {
                         if (v == "none") c.train.clip_bound.reset();
                         else c.train.clip_bound = parse_double("clip_bound", v);
                     }});
        f.push_back(train_uint("noise_dim", &TrainConfig::noise_dim));
        f.push_back(train_uint("seed", &TrainConfig::seed));
        f.push_back({"center_update_rule", [](const ExperimentConfig& c) { return to_string(c.train.center_update_rule); },
                     [](ExperimentConfig& c, const std::string& v) {
                         c.train.center_update_rule = parse_enum<CenterUpdateRule>(
                             "center_update_rule", v,
                             {{"smoothed", CenterUpdateRule::smoothed}, {"batch_mean", CenterUpdateRule::batch_mean}});
                     }});
        f.push_back({"norm_reduction", [](const ExperimentConfig& c) { return to_string(c.train.norm_reduction); },
                     [](ExperimentConfig& c, const std::string& v) {
                         c.train.norm_reduction = parse_enum<Reduction>(
                             "norm_reduction", v, {{"mean", Reduction::mean}, {"sum", Reduction::sum}});
                     }});
        f.push_back({"loss_form", [](const ExperimentConfig& c) { return to_string(c.train.loss_form); },
                     [](ExperimentConfig& c, const std::string& v) {
                         c.train.loss_form = parse_enum<LossForm>(
                             "loss_form", v, {{"basic", LossForm::basic}, {"generalized", LossForm::generalized}});
                     }});
        f.push_back({"vanilla_objective", [](const ExperimentConfig& c) { return to_string(c.train.vanilla_objective); },
                     [](ExperimentConfig& c, const std::string& v) {
                         c.train.vanilla_objective = parse_enum<GeneratorObjective>(
                             "vanilla_objective", v,
                             {{"non_saturating", GeneratorObjective::non_saturating},
                              {"saturating", GeneratorObjective::saturating}});
                     }});
        f.push_back(train_double("init_std", &TrainConfig::init_std));
        f.push_back(string_field("out_dir", &ExperimentConfig::out_dir));
        f.push_back(uint_field("snapshot_every", &ExperimentConfig::snapshot_every));
        f.push_back(uint_field("snapshot_samples", &ExperimentConfig::snapshot_samples));
        return f;
    }();
    return table;
}

const Field& field(const std::string& key) {
    for (const auto& f : fields())
        if (f.name == key) return f;
    throw ConfigError(key + ": unknown config key");
}

}  // namespace

const std::vector<std::string>& ExperimentConfig::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& f : fields()) n.push_back(f.name);
        return n;
    }();
    return names;
}

std::string ExperimentConfig::get(const std::string& key) const { return field(key).get(*this); }

void ExperimentConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, value); }

std::string ExperimentConfig::dump() const {
    std::string out;
    for (const auto& f : fields()) out += f.name + "=" + f.get(*this) + "\n";
    return out;
}

void ExperimentConfig::validate() const {
    try {
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (dataset != "synthetic" && dataset != "mnist" && dataset != "csv")
        bad_value("dataset", dataset, "synthetic|mnist|csv");
    if (architecture != "auto" && architecture != "synthetic" && architecture != "image")
        bad_value("architecture", architecture, "auto|synthetic|image");
    if (feature_dim < 1) bad_value("feature_dim", "0", "a positive integer");
    if (snapshot_every < 1) bad_value("snapshot_every", "0", "a positive integer");
    if (out_dir.empty()) throw ConfigError("out_dir: must not be empty");
}

ConfigEntries parse_config_text(const std::string& text, const std::string& origin) {
    ConfigEntries out;
    std::istringstream in(text);
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || trim(line.substr(0, eq)).empty())
            throw ConfigError(origin + ":" + std::to_string(n) + ": expected key=value");
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

ConfigEntries read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config file");
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config_text(os.str(), path.string());
}

ExperimentConfig resolve_config(const ConfigEntries& file_entries, const std::optional<std::string>& env_out,
                                const ConfigEntries& flag_entries) {
    ExperimentConfig c;
    for (const auto& [k, v] : file_entries) c.set(k, v);
    if (env_out) c.out_dir = *env_out;
    for (const auto& [k, v] : flag_entries) c.set(k, v);
    c.validate();
    return c;
}

std::string flag_name(const std::string& key) {
    std::string f = key;
    std::replace(f.begin(), f.end(), '_', '-');
    return f;
}

LabeledDataset load_dataset(const ExperimentConfig& config) {
    namespace fs = std::filesystem;
    LabeledDataset data;
    if (config.dataset == "synthetic") {
        Rng rng(config.data_seed);
        data = gen_synthetic(SyntheticSpec::standard(), rng);
    } else if (config.dataset == "csv") {
        data = read_synthetic_csv(config.data_path);
    } else {
        const fs::path dir(config.data_path);
        if (fs::exists(dir / "images-idx3-ubyte")) {
            data = load_idx(dir / "images-idx3-ubyte", dir / "labels-idx1-ubyte");
        } else if (fs::exists(dir / "train-images-idx3-ubyte")) {
            data = concat(load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte"),
                          load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte"));
        } else {
            throw DatasetError(dir.string() + ": no IDX files (expected images-idx3-ubyte or train-images-idx3-ubyte)");
        }
    }
    if (config.data_limit > 0 && config.data_limit < data.size()) data = data.slice(0, config.data_limit);
    return data;
}

Architecture make_architecture(const ExperimentConfig& config, std::size_t data_dim) {
    std::string kind = config.architecture;
    if (kind == "auto") kind = config.dataset == "mnist" ? "image" : "synthetic";
    if (kind == "synthetic") return synthetic_architecture(config.train.mode, config.train.noise_dim);
    return image_architecture(config.train.mode, data_dim, config.train.noise_dim, config.feature_dim);
}

TrainConfig effective_train_config(const ExperimentConfig& config, std::size_t dataset_size) {
    TrainConfig t = config.train;
    if (config.epochs > 0) t.iterations = config.epochs * iterations_per_epoch(dataset_size, t.batch_size);
    return t;
}

std::string to_string(CenterUpdateRule rule) { return rule == CenterUpdateRule::smoothed ? "smoothed" : "batch_mean"; }
std::string to_string(Reduction reduction) { return reduction == Reduction::mean ? "mean" : "sum"; }
std::string to_string(LossForm form) { return form == LossForm::basic ? "basic" : "generalized"; }
std::string to_string(GeneratorObjective objective) {
    return objective == GeneratorObjective::non_saturating ? "non_saturating" : "saturating";
}

}  // namespace kmgan
