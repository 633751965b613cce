#include "kmgan/datasets.hpp"

#include "kmgan/csv.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

namespace kmgan {

LabeledDataset LabeledDataset::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > size()) throw std::out_of_range("dataset slice out of range");
    std::vector<std::size_t> rows(end - begin);
    for (std::size_t i = begin; i < end; ++i) rows[i - begin] = i;
    return select(rows);
}

LabeledDataset LabeledDataset::select(const std::vector<std::size_t>& rows) const {
    LabeledDataset out;
    out.classes = classes;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    if (labels) out.labels.emplace();
    if (latent) out.latent = Matrix(static_cast<Eigen::Index>(rows.size()), latent->cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = static_cast<Eigen::Index>(rows[i]);
        const auto dst = static_cast<Eigen::Index>(i);
        if (rows[i] >= size()) throw std::out_of_range("dataset row out of range");
        out.features.row(dst) = features.row(src);
        if (labels) out.labels->push_back((*labels)[rows[i]]);
        if (latent) out.latent->row(dst) = latent->row(src);
    }
    return out;
}

SyntheticSpec SyntheticSpec::standard() {
    SyntheticSpec spec;
    const std::array<std::array<double, 2>, 4> means{{{3.0, 3.0}, {-3.0, 3.0}, {-3.0, -3.0}, {3.0, -3.0}}};
    const double major = 0.5;
    const double minor = 0.125;
    for (std::size_t c = 0; c < 4; ++c) {
        const double angle = static_cast<double>(c) * 30.0 * std::numbers::pi / 180.0;
        const double cs = std::cos(angle);
        const double sn = std::sin(angle);
        // R diag(major, minor) R^T
        const double a = major * cs * cs + minor * sn * sn;
        const double b = (major - minor) * cs * sn;
        const double d = major * sn * sn + minor * cs * cs;
        spec.components.push_back({means[c], {a, b, b, d}});
    }
    spec.lift = MlpSpec({Dense{2, 10}, Activation{ActivationKind::sigmoid}, Dense{10, 100},
                         Activation{ActivationKind::sigmoid}});
    return spec;
}

Network make_lift(const SyntheticSpec& spec) {
    if (spec.lift.input_dim() != 2) throw std::invalid_argument("lift must take 2-D input");
    Rng rng(spec.lift_seed);
    Network net{spec.lift, init_params(spec.lift, rng, 1.0)};
    for (auto& p : net.params.entries()) {
        if (p.name.ends_with(".bias")) {
            Matrix& v = p.tensor.mutable_value();
            for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = standard_normal(rng);
        }
    }
    return net;
}

LabeledDataset gen_synthetic(const SyntheticSpec& spec, Rng& rng) {
    if (spec.components.empty()) throw std::invalid_argument("synthetic spec has no components");
    const std::size_t per = spec.samples_per_component;
    const std::size_t n = per * spec.components.size();
    Matrix latent(static_cast<Eigen::Index>(n), 2);
    std::vector<std::size_t> labels(n);
    for (std::size_t c = 0; c < spec.components.size(); ++c) {
        const auto& comp = spec.components[c];
        const double a = comp.covariance[0];
        const double b = comp.covariance[1];
        const double d = comp.covariance[3];
        if (std::abs(comp.covariance[1] - comp.covariance[2]) > 1e-12 || !(a > 0.0) || !(a * d - b * b > 0.0))
            throw std::invalid_argument("component " + std::to_string(c) + ": covariance is not SPD");
        // Cholesky factor of [[a, b], [b, d]]
        const double l11 = std::sqrt(a);
        const double l21 = b / l11;
        const double l22 = std::sqrt(d - l21 * l21);
        for (std::size_t s = 0; s < per; ++s) {
            const double z1 = standard_normal(rng);
            const double z2 = standard_normal(rng);
            const auto row = static_cast<Eigen::Index>(c * per + s);
            latent(row, 0) = comp.mean[0] + l11 * z1;
            latent(row, 1) = comp.mean[1] + l21 * z1 + l22 * z2;
            labels[c * per + s] = c;
        }
    }
    Network lift = make_lift(spec);
    LabeledDataset out;
    out.features = lift.infer(latent);
    out.labels = std::move(labels);
    out.latent = std::move(latent);
    out.classes = spec.components.size();
    return out;
}

void write_synthetic_csv(const std::filesystem::path& path, const LabeledDataset& data) {
    if (!data.latent || !data.labels) throw std::invalid_argument("synthetic CSV needs latents and labels");
    std::vector<std::string> header{"latent0", "latent1", "label"};
    for (std::size_t c = 0; c < data.dim(); ++c) header.push_back("f" + std::to_string(c));
    CsvTable t(header);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        std::vector<double> row{(*data.latent)(r, 0), (*data.latent)(r, 1), static_cast<double>((*data.labels)[i])};
        for (Eigen::Index c = 0; c < data.features.cols(); ++c) row.push_back(data.features(r, c));
        t.add_row(std::move(row));
    }
    t.write(path);
}

LabeledDataset read_synthetic_csv(const std::filesystem::path& path) {
    CsvTable t = CsvTable::read(path);
    const auto& h = t.header();
    if (h.size() < 4 || h[0] != "latent0" || h[1] != "latent1" || h[2] != "label")
        throw DatasetError("synthetic CSV: unexpected header");
    LabeledDataset out;
    const auto n = static_cast<Eigen::Index>(t.rows());
    out.features.resize(n, static_cast<Eigen::Index>(h.size() - 3));
    out.latent = Matrix(n, 2);
    out.labels.emplace();
    std::size_t classes = 0;
    for (std::size_t i = 0; i < t.rows(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        (*out.latent)(r, 0) = t.at(i, 0);
        (*out.latent)(r, 1) = t.at(i, 1);
        const double lab = t.at(i, 2);
        if (lab < 0 || lab != std::floor(lab)) throw DatasetError("synthetic CSV: bad label");
        out.labels->push_back(static_cast<std::size_t>(lab));
        classes = std::max(classes, static_cast<std::size_t>(lab) + 1);
        for (std::size_t c = 3; c < h.size(); ++c) out.features(r, static_cast<Eigen::Index>(c - 3)) = t.at(i, c);
    }
    out.classes = classes;
    return out;
}

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
           (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void put_be32(std::vector<char>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images,
                        const std::optional<std::filesystem::path>& labels) {
    const auto img = read_bytes(images);
    if (img.size() < 16) throw DatasetError(images.string() + ": truncated IDX header");
    if (be32(img, 0) != kIdxImageMagic) throw DatasetError(images.string() + ": bad IDX image magic");
    const std::uint32_t count = be32(img, 4);
    const std::uint32_t rows = be32(img, 8);
    const std::uint32_t cols = be32(img, 12);
    const std::uint64_t pixels = std::uint64_t{rows} * cols;
    if (img.size() != 16 + pixels * count) throw DatasetError(images.string() + ": truncated IDX payload");

    LabeledDataset out;
    out.features.resize(count, static_cast<Eigen::Index>(pixels));
    for (std::uint32_t i = 0; i < count; ++i)
        for (std::uint64_t p = 0; p < pixels; ++p)
            out.features(i, static_cast<Eigen::Index>(p)) = img[16 + i * pixels + p] / 255.0;

    if (labels) {
        const auto lab = read_bytes(*labels);
        if (lab.size() < 8) throw DatasetError(labels->string() + ": truncated IDX header");
        if (be32(lab, 0) != kIdxLabelMagic) throw DatasetError(labels->string() + ": bad IDX label magic");
        const std::uint32_t n = be32(lab, 4);
        if (n != count) throw DatasetError("IDX image/label count mismatch");
        if (lab.size() != 8 + std::uint64_t{n}) throw DatasetError(labels->string() + ": truncated IDX payload");
        out.labels.emplace();
        std::size_t classes = 0;
        for (std::uint32_t i = 0; i < n; ++i) {
            out.labels->push_back(lab[8 + i]);
            classes = std::max<std::size_t>(classes, lab[8 + i] + 1u);
        }
        out.classes = classes;
    }
    return out;
}

void write_idx_images(const std::filesystem::path& path, const Matrix& pixels, std::uint32_t rows,
                      std::uint32_t cols) {
    if (static_cast<std::uint64_t>(pixels.cols()) != std::uint64_t{rows} * cols)
        throw std::invalid_argument("write_idx_images: width != rows * cols");
    std::vector<char> out;
    put_be32(out, kIdxImageMagic);
    put_be32(out, static_cast<std::uint32_t>(pixels.rows()));
    put_be32(out, rows);
    put_be32(out, cols);
    for (Eigen::Index i = 0; i < pixels.rows(); ++i)
        for (Eigen::Index p = 0; p < pixels.cols(); ++p) {
            const double v = std::clamp(pixels(i, p), 0.0, 1.0);
            out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    write_file(path, out);
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::size_t>& labels) {
    std::vector<char> out;
    put_be32(out, kIdxLabelMagic);
    put_be32(out, static_cast<std::uint32_t>(labels.size()));
    for (auto l : labels) {
        if (l > 255) throw std::invalid_argument("IDX labels must fit in a byte");
        out.push_back(static_cast<char>(static_cast<unsigned char>(l)));
    }
    write_file(path, out);
}

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("concat: width mismatch");
    LabeledDataset out;
    out.features.resize(a.features.rows() + b.features.rows(), a.features.cols());
    out.features << a.features, b.features;
    if (a.labels && b.labels) {
        out.labels = *a.labels;
        out.labels->insert(out.labels->end(), b.labels->begin(), b.labels->end());
    }
    out.classes = std::max(a.classes, b.classes);
    return out;
}

}  // namespace kmgan
