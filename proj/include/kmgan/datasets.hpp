#pragma once

#include "kmgan/mlp.hpp"
#include "kmgan/rng.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

namespace kmgan {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LabeledDataset {
    Matrix features;
    std::optional<std::vector<std::size_t>> labels;
    std::optional<Matrix> latent;
    std::size_t classes = 0;

    std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

    /// Rows [begin, end) as a new dataset.
    LabeledDataset slice(std::size_t begin, std::size_t end) const;
    /// Rows in the given order.
    LabeledDataset select(const std::vector<std::size_t>& rows) const;
};

struct GaussianComponent {
    std::array<double, 2> mean{};
    std::array<double, 4> covariance{};  // row-major 2x2
};

struct SyntheticSpec {
    std::vector<GaussianComponent> components;
    std::size_t samples_per_component = 2500;
    MlpSpec lift;
    std::uint64_t lift_seed = 7;

    /// Four blobs at (+-3, +-3); anisotropic covariance diag(0.5, 0.125)
    /// rotated by 0, 30, 60 and 90 degrees. Lift 2 -> 10 sigmoid -> 100 sigmoid.
    static SyntheticSpec standard();
};

/// The frozen lift network (weights and biases ~ N(0, 1) from lift_seed).
Network make_lift(const SyntheticSpec& spec);

/// Samples every component, then pushes the 2-D latents through the lift.
LabeledDataset gen_synthetic(const SyntheticSpec& spec, Rng& rng);

/// CSV with header latent0,latent1,label,f0..f{d-1}.
void write_synthetic_csv(const std::filesystem::path& path, const LabeledDataset& data);
LabeledDataset read_synthetic_csv(const std::filesystem::path& path);

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Loads IDX images (u8 pixels, scaled to [0, 1], flattened row-major) and
/// optionally the matching IDX labels.
LabeledDataset load_idx(const std::filesystem::path& images,
                        const std::optional<std::filesystem::path>& labels = std::nullopt);

/// Writes u8 IDX files; pixels are rounded from [0, 1] to 0..255.
void write_idx_images(const std::filesystem::path& path, const Matrix& pixels, std::uint32_t rows,
                      std::uint32_t cols);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::size_t>& labels);

/// Concatenates datasets with equal width.
LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);

}  // namespace kmgan
