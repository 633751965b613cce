#pragma once

#include "kmgan/datasets.hpp"
#include "kmgan/training.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kmgan {

/// Bad configuration: unknown key, unparsable value or failed validation.
/// The message starts with the offending key (or file path).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    TrainConfig train;
    std::string dataset = "synthetic";  // synthetic | mnist | csv
    std::string data_path = "data/mnist";
    std::size_t data_limit = 0;          // 0 keeps every row
    std::uint64_t data_seed = 1;
    std::string architecture = "auto";  // auto | synthetic | image
    std::size_t feature_dim = 16;
    std::uint64_t epochs = 0;           // when > 0, overrides iterations
    std::string out_dir = "runs/default";
    std::uint64_t snapshot_every = 10;
    std::size_t snapshot_samples = 64;

    /// Every key that may appear in a file or as a --flag.
    static const std::vector<std::string>& keys();

    std::string get(const std::string& key) const;
    /// Parses and assigns one value; throws ConfigError naming the key.
    void set(const std::string& key, const std::string& value);

    /// "key=value" per line, in keys() order.
    std::string dump() const;
    /// train.validate() plus string-valued fields; throws ConfigError.
    void validate() const;
};

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// key=value lines; '#' starts a comment; blank lines ignored.
ConfigEntries parse_config_text(const std::string& text, const std::string& origin = "<config>");
ConfigEntries read_config_file(const std::filesystem::path& path);

/// Defaults, then the file, then KMGAN_OUT (as out_dir), then flags.
ExperimentConfig resolve_config(const ConfigEntries& file_entries, const std::optional<std::string>& env_out,
                                const ConfigEntries& flag_entries);

/// Flag spelling of a key: d_round -> d-round.
std::string flag_name(const std::string& key);

LabeledDataset load_dataset(const ExperimentConfig& config);
Architecture make_architecture(const ExperimentConfig& config, std::size_t data_dim);
/// Copy of the train config with iterations derived from epochs when set.
TrainConfig effective_train_config(const ExperimentConfig& config, std::size_t dataset_size);

std::string to_string(CenterUpdateRule rule);
std::string to_string(Reduction reduction);
std::string to_string(LossForm form);
std::string to_string(GeneratorObjective objective);

}  // namespace kmgan
