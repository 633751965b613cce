#include "kmgan/datasets.hpp"
#include "kmgan/kmeans.hpp"
#include "kmgan/metrics.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

using namespace kmgan;
namespace fs = std::filesystem;

namespace {

const LabeledDataset& default_synthetic() {
    static const LabeledDataset data = [] {
        Rng rng(1);
        return gen_synthetic(SyntheticSpec::standard(), rng);
    }();
    return data;
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

// Hand-built 2-image 2x3 IDX pair.
struct Fixture {
    fs::path dir = fs::temp_directory_path() / "kmgan_idx_fixture";
    fs::path images = dir / "images.idx";
    fs::path labels = dir / "labels.idx";
    std::vector<unsigned char> image_bytes, label_bytes;

    Fixture() {
        fs::create_directories(dir);
        put_be32(image_bytes, kIdxImageMagic);
        put_be32(image_bytes, 2);
        put_be32(image_bytes, 2);
        put_be32(image_bytes, 3);
        for (unsigned char px : {0, 0, 0, 0, 0, 0, 255, 51, 0, 102, 204, 1}) image_bytes.push_back(px);
        put_be32(label_bytes, kIdxLabelMagic);
        put_be32(label_bytes, 2);
        label_bytes.push_back(4);
        label_bytes.push_back(9);
        write_bytes(images, image_bytes);
        write_bytes(labels, label_bytes);
    }
    ~Fixture() { fs::remove_all(dir); }
};

}  // namespace

TEST(Synthetic, ShapeAndLabels) {
    const auto& d = default_synthetic();
    EXPECT_EQ(d.size(), 10000u);
    EXPECT_EQ(d.dim(), 100u);
    EXPECT_EQ(d.classes, 4u);
    ASSERT_TRUE(d.labels && d.latent);
    std::vector<std::size_t> counts(4, 0);
    for (auto l : *d.labels) ++counts.at(l);
    EXPECT_EQ(counts, (std::vector<std::size_t>{2500, 2500, 2500, 2500}));
    EXPECT_EQ(d.latent->rows(), 10000);
    EXPECT_EQ(d.latent->cols(), 2);
}

TEST(Synthetic, OutputsInOpenUnitInterval) {
    const auto& d = default_synthetic();
    EXPECT_GT(d.features.minCoeff(), 0.0);
    EXPECT_LT(d.features.maxCoeff(), 1.0);
}

TEST(Synthetic, Deterministic) {
    Rng a(9), b(9);
    auto x = gen_synthetic(SyntheticSpec::standard(), a);
    auto y = gen_synthetic(SyntheticSpec::standard(), b);
    EXPECT_EQ(x.features, y.features);
    EXPECT_EQ(*x.latent, *y.latent);
    EXPECT_EQ(*x.labels, *y.labels);
}

TEST(Synthetic, LiftIsFrozenAcrossSamplingSeeds) {
    auto spec = SyntheticSpec::standard();
    Network l1 = make_lift(spec), l2 = make_lift(spec);
    for (std::size_t i = 0; i < l1.params.entries().size(); ++i)
        EXPECT_EQ(l1.params.entries()[i].tensor.value(), l2.params.entries()[i].tensor.value());
    Rng a(1), b(2);
    auto x = gen_synthetic(spec, a), y = gen_synthetic(spec, b);
    EXPECT_NE(*x.latent, *y.latent);
    EXPECT_TRUE(infer(l1.spec, l1.params, *y.latent).isApprox(y.features, 1e-12));
}

TEST(Synthetic, SampleMomentsMatchComponents) {
    const auto& d = default_synthetic();
    const auto spec = SyntheticSpec::standard();
    for (std::size_t c = 0; c < 4; ++c) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < d.size(); ++i)
            if ((*d.labels)[i] == c) rows.push_back(i);
        Matrix z(static_cast<Eigen::Index>(rows.size()), 2);
        for (std::size_t i = 0; i < rows.size(); ++i) z.row(static_cast<Eigen::Index>(i)) = d.latent->row(static_cast<Eigen::Index>(rows[i]));
        RowVector mu = z.colwise().mean();
        Matrix centered = z.rowwise() - mu;
        Matrix cov = centered.transpose() * centered / static_cast<double>(rows.size() - 1);
        const auto& comp = spec.components[c];
        EXPECT_NEAR(mu(0), comp.mean[0], 0.05);
        EXPECT_NEAR(mu(1), comp.mean[1], 0.05);
        for (int k = 0; k < 4; ++k) EXPECT_NEAR(cov(k / 2, k % 2), comp.covariance[static_cast<std::size_t>(k)], 0.05);
    }
}

TEST(Synthetic, LatentsAreSeparable) {
    const auto& d = default_synthetic();
    Rng rng(3);
    LloydResult r = lloyd_full(*d.latent, 4, rng);
    EXPECT_GE(purity(r.assignment.labels, *d.labels), 0.95);
}

TEST(Synthetic, LiftInjectiveOnSamples) {
    const auto& d = default_synthetic();
    std::set<std::vector<double>> lat;
    for (Eigen::Index i = 0; i < d.features.rows(); ++i) lat.insert({(*d.latent)(i, 0), (*d.latent)(i, 1)});
    // Sorted rows: equal neighbours must come from the same latent.
    std::vector<std::pair<std::vector<double>, std::vector<double>>> rows;
    for (Eigen::Index i = 0; i < d.features.rows(); ++i) {
        RowVector f = d.features.row(i);
        rows.push_back({std::vector<double>(f.data(), f.data() + f.size()), {(*d.latent)(i, 0), (*d.latent)(i, 1)}});
    }
    std::sort(rows.begin(), rows.end());
    std::size_t distinct_out = 1;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].first != rows[i - 1].first) ++distinct_out;
        else EXPECT_EQ(rows[i].second, rows[i - 1].second) << "two latents share one image";
    }
    EXPECT_EQ(distinct_out, lat.size());
}

TEST(Synthetic, RejectsNonSpdCovariance) {
    auto spec = SyntheticSpec::standard();
    spec.components[2].covariance = {1.0, 2.0, 2.0, 1.0};
    Rng rng(1);
    EXPECT_THROW(gen_synthetic(spec, rng), std::invalid_argument);
    spec = SyntheticSpec::standard();
    spec.components[0].covariance = {1.0, 0.2, 0.1, 1.0};
    EXPECT_THROW(gen_synthetic(spec, rng), std::invalid_argument);
}

TEST(Synthetic, CsvRoundTrip) {
    const auto part = default_synthetic().slice(0, 50);
    const auto path = fs::temp_directory_path() / "kmgan_syn.csv";
    write_synthetic_csv(path, part);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header.rfind("latent0,latent1,label,f0,f1,", 0), 0u);
    EXPECT_NE(header.find(",f99"), std::string::npos);
    auto back = read_synthetic_csv(path);
    EXPECT_EQ(back.features, part.features);
    EXPECT_EQ(*back.labels, *part.labels);
    EXPECT_EQ(*back.latent, *part.latent);
    fs::remove(path);
}

TEST(Idx, LoadsFixture) {
    Fixture fx;
    auto d = load_idx(fx.images, fx.labels);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d.dim(), 6u);
    EXPECT_TRUE(d.features.row(0).isZero());
    EXPECT_DOUBLE_EQ(d.features(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(d.features(1, 1), 0.2);
    EXPECT_DOUBLE_EQ(d.features(1, 3), 0.4);
    EXPECT_DOUBLE_EQ(d.features(1, 5), 1.0 / 255.0);
    EXPECT_EQ(*d.labels, (std::vector<std::size_t>{4, 9}));
    EXPECT_FALSE(load_idx(fx.images).labels.has_value());
}

TEST(Idx, WriteThenLoadIsByteExact) {
    Fixture fx;
    auto d = load_idx(fx.images, fx.labels);
    const auto img2 = fx.dir / "copy_images.idx", lab2 = fx.dir / "copy_labels.idx";
    write_idx_images(img2, d.features, 2, 3);
    write_idx_labels(lab2, *d.labels);
    EXPECT_EQ(read_bytes(img2), fx.image_bytes);
    EXPECT_EQ(read_bytes(lab2), fx.label_bytes);
}

TEST(Idx, RejectsEveryMagicMutation) {
    Fixture fx;
    for (std::size_t byte = 0; byte < 4; ++byte)
        for (int v = 0; v < 256; ++v) {
            if (v == fx.image_bytes[byte]) continue;
            auto img = fx.image_bytes;
            img[byte] = static_cast<unsigned char>(v);
            write_bytes(fx.images, img);
            EXPECT_THROW(load_idx(fx.images), DatasetError) << byte << " " << v;
        }
    write_bytes(fx.images, fx.image_bytes);
    for (std::size_t byte = 0; byte < 4; ++byte)
        for (int v = 0; v < 256; ++v) {
            if (v == fx.label_bytes[byte]) continue;
            auto lab = fx.label_bytes;
            lab[byte] = static_cast<unsigned char>(v);
            write_bytes(fx.labels, lab);
            EXPECT_THROW(load_idx(fx.images, fx.labels), DatasetError) << byte << " " << v;
        }
}

TEST(Idx, RejectsTruncationAndMismatch) {
    Fixture fx;
    auto img = fx.image_bytes;
    img.pop_back();
    write_bytes(fx.images, img);
    EXPECT_THROW(load_idx(fx.images), DatasetError);
    write_bytes(fx.images, std::vector<unsigned char>(fx.image_bytes.begin(), fx.image_bytes.begin() + 10));
    EXPECT_THROW(load_idx(fx.images), DatasetError);

    write_bytes(fx.images, fx.image_bytes);
    auto lab = fx.label_bytes;
    lab[7] = 3;
    lab.push_back(1);
    write_bytes(fx.labels, lab);
    EXPECT_THROW(load_idx(fx.images, fx.labels), DatasetError);
    EXPECT_THROW(load_idx(fx.dir / "missing.idx"), DatasetError);
}

TEST(Dataset, SliceSelectConcat) {
    const auto& d = default_synthetic();
    auto a = d.slice(10, 20);
    EXPECT_EQ(a.size(), 10u);
    EXPECT_EQ(a.features.row(0), d.features.row(10));
    auto s = d.select({5, 2});
    EXPECT_EQ(s.features.row(1), d.features.row(2));
    EXPECT_EQ((*s.labels)[0], (*d.labels)[5]);
    auto c = concat(a, s);
    EXPECT_EQ(c.size(), 12u);
    EXPECT_EQ(c.features.row(11), d.features.row(2));
    EXPECT_THROW(d.slice(5, 20000), std::out_of_range);
    EXPECT_THROW(d.select({10000}), std::out_of_range);
}

TEST(Mnist, FullSetWhenAvailable) {
    const char* dir = std::getenv("KMGAN_MNIST_FULL_DIR");
    if (!dir) GTEST_SKIP() << "set KMGAN_MNIST_FULL_DIR to the four original IDX files";
    const fs::path p(dir);
    auto train = load_idx(p / "train-images-idx3-ubyte", p / "train-labels-idx1-ubyte");
    auto test = load_idx(p / "t10k-images-idx3-ubyte", p / "t10k-labels-idx1-ubyte");
    auto all = concat(train, test);
    EXPECT_EQ(all.size(), 70000u);
    EXPECT_EQ(all.dim(), 784u);
}
