#pragma once

#include "kmgan/adam.hpp"
#include "kmgan/mlp.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kmgan {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Ordered collection of named matrices, serialised as:
///   "KMG1" | u64 entry count | per entry: u32 name length, name bytes,
///   u64 rows, u64 cols, rows*cols little-endian IEEE-754 doubles (row-major).
class Archive {
public:
    void put(std::string name, Matrix value);
    const Matrix& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    const std::vector<std::pair<std::string, Matrix>>& entries() const { return entries_; }

    void put_params(const std::string& prefix, const ParamSet& params);
    /// Overwrites every parameter of `params` from `prefix.<name>` entries.
    void get_params(const std::string& prefix, ParamSet& params) const;

    void put_adam(const std::string& prefix, const AdamState& state);
    AdamState get_adam(const std::string& prefix) const;

    void put_network(const std::string& prefix, const Network& net);
    Network get_network(const std::string& prefix) const;

    std::vector<char> serialize() const;
    static Archive deserialize(const std::vector<char>& bytes);

    void save(const std::filesystem::path& path) const;
    static Archive load(const std::filesystem::path& path);

private:
    std::vector<std::pair<std::string, Matrix>> entries_;
};

}  // namespace kmgan
