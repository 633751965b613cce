#include "kmgan/training.hpp"

#include "kmgan/csv.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace kmgan {

void TrainConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
        throw std::invalid_argument(key + ": " + why);
    };
    if (batch_size < 2) fail("batch_size", "must be at least 2");
    if (classes < 1) fail("classes", "must be at least 1");
    if (iterations < 1) fail("iterations", "must be at least 1");
    if (noise_dim < 1) fail("noise_dim", "must be positive");
    if (!(adam.alpha > 0.0)) fail("adam_alpha", "must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) fail("adam_beta1", "must lie in [0, 1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) fail("adam_beta2", "must lie in [0, 1)");
    if (!(adam.epsilon > 0.0)) fail("adam_eps", "must be positive");
    if (!(d_round >= 0.0)) fail("d_round", "must be non-negative");
    if (!(lambda >= 0.0)) fail("lambda", "must be non-negative");
    if (lambda > 0.0 && loss_form != LossForm::generalized)
        fail("lambda", "a positive lambda needs loss_form=generalized");
    if (clip_bound && !(*clip_bound > 0.0)) fail("clip_bound", "must be positive");
    if (!(init_std > 0.0)) fail("init_std", "must be positive");
}

Architecture synthetic_architecture(TrainMode mode, std::size_t noise_dim) {
    Architecture arch;
    std::vector<Layer> d{Dense{100, 100}, Activation{ActivationKind::relu}, BatchNorm{100},
                         Dense{100, 50},  Activation{ActivationKind::relu}, BatchNorm{50},
                         Dense{50, 10},   Activation{ActivationKind::relu}, BatchNorm{10},
                         Dense{10, 2},    Activation{ActivationKind::sigmoid}};
    arch.feature_layers = d.size();
    if (mode == TrainMode::vanilla) {
        d.push_back(Dense{2, 1});
        d.push_back(Activation{ActivationKind::sigmoid});
    }
    arch.discriminator = MlpSpec(std::move(d));
    arch.generator = MlpSpec({Dense{noise_dim, 10}, Activation{ActivationKind::relu}, BatchNorm{10},
                              Dense{10, 50}, Activation{ActivationKind::relu}, BatchNorm{50},
                              Dense{50, 100}, Activation{ActivationKind::relu}, BatchNorm{100}});
    return arch;
}

Architecture image_architecture(TrainMode mode, std::size_t pixels, std::size_t noise_dim,
                                std::size_t feature_dim) {
    Architecture arch;
    std::vector<Layer> d{Dense{pixels, 256},      Activation{ActivationKind::relu},
                         Dense{256, 64},          Activation{ActivationKind::relu},
                         Dense{64, feature_dim},  Activation{ActivationKind::sigmoid}};
    arch.feature_layers = d.size();
    if (mode == TrainMode::vanilla) {
        d.push_back(Dense{feature_dim, 1});
        d.push_back(Activation{ActivationKind::sigmoid});
    }
    arch.discriminator = MlpSpec(std::move(d));
    arch.generator = MlpSpec({Dense{noise_dim, 128}, Activation{ActivationKind::relu}, BatchNorm{128},
                              Dense{128, 256}, Activation{ActivationKind::relu}, BatchNorm{256},
                              Dense{256, pixels}, Activation{ActivationKind::sigmoid}});
    return arch;
}

BatchSampler::BatchSampler(std::size_t n, Rng& rng) : order_(n) {
    if (n == 0) throw std::invalid_argument("BatchSampler over an empty dataset");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle(rng);
}

void BatchSampler::reshuffle(Rng& rng) {
    // Fisher-Yates with the portable index draw.
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[uniform_index(rng, i)]);
    cursor_ = 0;
    ++epochs_;
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch, Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
        if (cursor_ == order_.size()) reshuffle(rng);
        out.push_back(order_[cursor_++]);
    }
    return out;
}

Matrix sample_noise(Rng& rng, std::size_t rows, std::size_t noise_dim) {
    Matrix z(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(noise_dim));
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = standard_normal(rng);
    return z;
}

Matrix next_real_batch(TrainState& state, const LabeledDataset& dataset) {
    const auto idx = state.sampler.next(state.config.batch_size, state.rng);
    Matrix batch(static_cast<Eigen::Index>(idx.size()), dataset.features.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        batch.row(static_cast<Eigen::Index>(i)) = dataset.features.row(static_cast<Eigen::Index>(idx[i]));
    return batch;
}

Matrix extract_features(const Network& discriminator, std::size_t feature_layers, const Matrix& x) {
    return infer(discriminator.spec, discriminator.params, x, feature_layers);
}

Matrix generate(const Network& generator, const Matrix& noise) { return generator.infer(noise); }

std::uint64_t iterations_per_epoch(std::size_t dataset_size, std::size_t batch_size) {
    return (dataset_size + batch_size - 1) / batch_size;
}

TrainState init_training(const TrainConfig& config, const LabeledDataset& dataset,
                         const Architecture& arch) {
    config.validate();
    if (dataset.size() == 0) throw std::invalid_argument("dataset is empty");
    if (config.mode != TrainMode::vanilla && dataset.size() < config.classes)
        throw std::invalid_argument("dataset has fewer samples than classes");
    if (arch.discriminator.input_dim() != dataset.dim())
        throw ShapeError("discriminator input " + std::to_string(arch.discriminator.input_dim()) +
                         " != data dimension " + std::to_string(dataset.dim()));
    if (arch.generator.input_dim() != config.noise_dim)
        throw ShapeError("generator input " + std::to_string(arch.generator.input_dim()) +
                         " != noise_dim " + std::to_string(config.noise_dim));
    if (arch.generator.output_dim() != dataset.dim())
        throw ShapeError("generator output " + std::to_string(arch.generator.output_dim()) +
                         " != data dimension " + std::to_string(dataset.dim()));
    if (arch.feature_layers == 0 || arch.feature_layers > arch.discriminator.size())
        throw std::invalid_argument("feature_layers out of range");

    TrainState st;
    st.config = config;
    st.rng = Rng(config.seed);
    st.feature_layers = arch.feature_layers;
    st.adam_d = AdamState(config.adam);
    st.adam_g = AdamState(config.adam);

    if (config.mode == TrainMode::reduced) {
        // Pixel-space centers come first, then the networks.
        st.real_centers = kmeanspp_init(dataset.features, config.classes, st.rng, &st.warnings);
    }
    st.discriminator = Network{arch.discriminator, init_params(arch.discriminator, st.rng, config.init_std)};
    st.generator = Network{arch.generator, init_params(arch.generator, st.rng, config.init_std)};
    if (config.mode == TrainMode::regular) {
        Matrix feats = extract_features(st.discriminator, st.feature_layers, dataset.features);
        st.real_centers = kmeanspp_init(feats, config.classes, st.rng, &st.warnings);
        st.fake_centers = st.real_centers;
    }
    st.sampler = BatchSampler(dataset.size(), st.rng);
    return st;
}

namespace {

void notify(const StepObserver& observer, StepPhase phase) {
    if (observer) observer(phase);
}

void check_batches(const TrainState& st, const Matrix& real, const Matrix& noise) {
    const auto b = static_cast<Eigen::Index>(st.config.batch_size);
    if (real.rows() != b || noise.rows() != b)
        throw ShapeError("batch sizes must equal batch_size = " + std::to_string(b));
    if (static_cast<std::size_t>(noise.cols()) != st.config.noise_dim)
        throw ShapeError("noise batch width != noise_dim");
}

Tensor d_features(TrainState& st, const Tensor& x) {
    return forward(st.discriminator.spec, st.discriminator.params, x, Mode::train, st.feature_layers);
}

Tensor g_output(TrainState& st, const Matrix& z) {
    return forward(st.generator.spec, st.generator.params, Tensor(z), Mode::train);
}

void step_params(Network& net, AdamState& adam, const Gradients& grads) {
    adam_step(net.params, net.params.collect(grads), adam);
}

void apply_clip(TrainState& st, const StepObserver& observer) {
    if (st.config.clip_bound) {
        clip_weights(st.discriminator.params, *st.config.clip_bound);
        notify(observer, StepPhase::clip);
    }
}

void check_report(const LossReport& r, std::uint64_t iteration) {
    for (double v : {r.l_d, r.l_g, r.l_center, r.l_intra, r.l_inter}) {
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "non-finite loss at iteration " << iteration << ": l_d=" << r.l_d << " l_g=" << r.l_g
               << " l_center=" << r.l_center << " l_intra=" << r.l_intra << " l_inter=" << r.l_inter;
            throw NumericError(os.str());
        }
    }
}

}  // namespace

LossReport train_step_regular(TrainState& st, const Matrix& real_batch, const Matrix& noise_batch,
                              const StepObserver& observer) {
    if (st.config.mode != TrainMode::regular) throw std::logic_error("train_step_regular in a non-regular state");
    check_batches(st, real_batch, noise_batch);
    const TrainConfig& cfg = st.config;
    const bool generalized = cfg.loss_form == LossForm::generalized;
    LossReport report;

    // (1) Labels from an eval-mode pass outside the graph.
    const Matrix fake_eval = generate(st.generator, noise_batch);
    const Matrix real_feats = extract_features(st.discriminator, st.feature_layers, real_batch);
    const Matrix fake_feats = extract_features(st.discriminator, st.feature_layers, fake_eval);
    const Assignment real_assign = assign_labels(real_feats, st.real_centers);
    const Assignment fake_to_real = assign_labels(fake_feats, st.real_centers);
    const Assignment fake_assign = assign_labels(fake_feats, st.fake_centers);
    const CenterTargets c_real = build_center_targets(real_assign, st.real_centers);
    const CenterTargets c_gen = build_center_targets(fake_to_real, st.real_centers);
    notify(observer, StepPhase::assign_labels);

    // (2) Discriminator.
    {
        const Matrix fake_pixels = g_output(st, noise_batch).value();
        Tensor fr = d_features(st, Tensor(real_batch));
        Tensor ff = d_features(st, Tensor(fake_pixels));
        Tensor intra = intra_loss(fr.detach(), ff.detach(), cfg.norm_reduction);
        Tensor inter = inter_loss(fr.detach(), ff.detach(), cfg.norm_reduction);
        std::optional<Regularizers> reg;
        if (generalized) reg = Regularizers{intra_loss(fr, ff, cfg.norm_reduction), inter_loss(fr, ff, cfg.norm_reduction)};
        Tensor loss = d_loss(fr, c_real, ff, c_gen, cfg.norm_reduction, cfg.lambda, reg);
        report.l_d = loss.item();
        report.l_intra = intra.item();
        report.l_inter = inter.item();
        step_params(st.discriminator, st.adam_d, backward(loss));
        notify(observer, StepPhase::discriminator_update);
    }

    // (3) Generator.
    {
        Tensor ff = d_features(st, g_output(st, noise_batch));
        std::optional<Regularizers> reg;
        if (generalized) {
            Tensor fr = forward(st.discriminator.spec, st.discriminator.params, Tensor(real_batch), Mode::train,
                                st.feature_layers, /*update_running=*/false)
                            .detach();
            reg = Regularizers{Tensor::scalar(0.0), inter_loss(fr, ff, cfg.norm_reduction)};
        }
        Tensor loss = g_loss(ff, c_gen, cfg.norm_reduction, cfg.lambda, reg);
        report.l_g = loss.item();
        step_params(st.generator, st.adam_g, backward(loss));
        notify(observer, StepPhase::generator_update);
    }

    // (4) Joint center-loss step, gated by d_round.
    {
        Tensor fr = d_features(st, Tensor(real_batch));
        Tensor ff = d_features(st, g_output(st, noise_batch));
        Tensor loss = center_loss(st.real_centers, st.fake_centers, fr, ff, real_assign, fake_assign);
        report.l_center = loss.item();
        report.applied_center_step = report.l_center >= cfg.d_round;
        if (report.applied_center_step) {
            check_report(report, st.iteration);
            Gradients grads = backward(loss);
            step_params(st.discriminator, st.adam_d, grads);
            step_params(st.generator, st.adam_g, grads);
            notify(observer, StepPhase::center_loss_update);
        }
    }

    // (5) Clip, (6) minibatch center updates on the first-pass features.
    apply_clip(st, observer);
    st.real_centers = update_centers_minibatch(st.real_centers, real_feats, real_assign, cfg.center_update_rule);
    st.fake_centers = update_centers_minibatch(st.fake_centers, fake_feats, fake_assign, cfg.center_update_rule);
    notify(observer, StepPhase::centers_update);

    check_report(report, st.iteration);
    ++st.iteration;
    return report;
}

LossReport train_step_reduced(TrainState& st, const Matrix& real_batch, const Matrix& noise_batch,
                              const StepObserver& observer) {
    if (st.config.mode != TrainMode::reduced) throw std::logic_error("train_step_reduced in a non-reduced state");
    check_batches(st, real_batch, noise_batch);
    const TrainConfig& cfg = st.config;
    LossReport report;

    // Labels in pixel space.
    const Matrix fake_eval = generate(st.generator, noise_batch);
    const Assignment real_assign = assign_labels(real_batch, st.real_centers);
    const Assignment fake_assign = assign_labels(fake_eval, st.real_centers);
    const Matrix c_real = build_center_targets(real_assign, st.real_centers).rows;
    const Matrix c_gen = build_center_targets(fake_assign, st.real_centers).rows;
    notify(observer, StepPhase::assign_labels);

    // Center step first.
    {
        Tensor dr = d_features(st, Tensor(c_real));
        Tensor dg = d_features(st, Tensor(c_gen));
        Tensor total = sum(abs(sub(dr, dg)));
        Tensor loss = cfg.norm_reduction == Reduction::mean
                          ? scale(total, 1.0 / static_cast<double>(c_real.rows()))
                          : total;
        report.l_center = loss.item();
        report.applied_center_step = report.l_center >= cfg.d_round;
        if (report.applied_center_step) {
            if (loss.requires_grad()) {
                Gradients grads = backward(loss);
                step_params(st.discriminator, st.adam_d, grads);
                step_params(st.generator, st.adam_g, grads);
            }
            notify(observer, StepPhase::center_loss_update);
        }
    }

    // Discriminator: real features toward the features of their pixel centers.
    {
        Tensor fx = d_features(st, Tensor(real_batch));
        Tensor fc = d_features(st, Tensor(c_real));
        Tensor loss = target_distance(fx, fc, cfg.norm_reduction);
        report.l_d = loss.item();
        step_params(st.discriminator, st.adam_d, backward(loss));
        notify(observer, StepPhase::discriminator_update);
    }

    // Generator: fake features toward the features of their pixel centers.
    {
        Tensor ff = d_features(st, g_output(st, noise_batch));
        Tensor fc = d_features(st, Tensor(c_gen)).detach();
        Tensor loss = target_distance(ff, fc, cfg.norm_reduction);
        report.l_g = loss.item();
        step_params(st.generator, st.adam_g, backward(loss));
        notify(observer, StepPhase::generator_update);
    }

    apply_clip(st, observer);
    st.real_centers = update_centers_minibatch(st.real_centers, real_batch, real_assign, cfg.center_update_rule);
    notify(observer, StepPhase::centers_update);

    check_report(report, st.iteration);
    ++st.iteration;
    return report;
}

LossReport train_step_vanilla(TrainState& st, const Matrix& real_batch, const Matrix& noise_batch,
                              const StepObserver& observer) {
    if (st.config.mode != TrainMode::vanilla) throw std::logic_error("train_step_vanilla in a non-vanilla state");
    check_batches(st, real_batch, noise_batch);
    const TrainConfig& cfg = st.config;
    LossReport report;
    auto& dnet = st.discriminator;

    {
        const Matrix fake_pixels = g_output(st, noise_batch).value();
        Tensor pr = dnet(Tensor(real_batch), Mode::train);
        Tensor pf = dnet(Tensor(fake_pixels), Mode::train);
        VanillaLosses losses = vanilla_gan_losses(pr, pf, cfg.vanilla_objective);
        report.l_d = losses.d.item();
        step_params(dnet, st.adam_d, backward(losses.d));
        notify(observer, StepPhase::discriminator_update);
    }
    {
        Tensor pf = dnet(g_output(st, noise_batch), Mode::train);
        // The real-side probabilities only enter the D loss; a constant keeps the call total.
        Tensor pr = Tensor(Matrix::Constant(pf.rows(), 1, 0.5));
        VanillaLosses losses = vanilla_gan_losses(pr, pf, cfg.vanilla_objective);
        report.l_g = losses.g.item();
        step_params(st.generator, st.adam_g, backward(losses.g));
        notify(observer, StepPhase::generator_update);
    }
    apply_clip(st, observer);

    check_report(report, st.iteration);
    ++st.iteration;
    return report;
}

LossReport train_step(TrainState& st, const Matrix& real_batch, const Matrix& noise_batch,
                      const StepObserver& observer) {
    switch (st.config.mode) {
        case TrainMode::regular: return train_step_regular(st, real_batch, noise_batch, observer);
        case TrainMode::reduced: return train_step_reduced(st, real_batch, noise_batch, observer);
        case TrainMode::vanilla: return train_step_vanilla(st, real_batch, noise_batch, observer);
    }
    throw std::logic_error("unknown training mode");
}

namespace {

void write_features_csv(const std::filesystem::path& path, const Matrix& feats,
                        const std::optional<std::vector<std::size_t>>& labels) {
    std::vector<std::string> header;
    for (Eigen::Index c = 0; c < feats.cols(); ++c) header.push_back("f" + std::to_string(c));
    if (labels) header.push_back("label");
    CsvTable t(header);
    for (Eigen::Index i = 0; i < feats.rows(); ++i) {
        std::vector<double> row(feats.row(i).data(), feats.row(i).data() + feats.cols());
        if (labels) row.push_back(static_cast<double>((*labels)[static_cast<std::size_t>(i)]));
        t.add_row(std::move(row));
    }
    t.write(path);
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m, const std::string& prefix) {
    std::vector<std::string> header;
    for (Eigen::Index c = 0; c < m.cols(); ++c) header.push_back(prefix + std::to_string(c));
    CsvTable t(header);
    for (Eigen::Index i = 0; i < m.rows(); ++i) t.add_row(std::vector<double>(m.row(i).data(), m.row(i).data() + m.cols()));
    t.write(path);
}

void snapshot(const std::filesystem::path& dir, std::uint64_t epoch, const TrainState& st,
              const LabeledDataset& data, const Matrix& fixed_noise) {
    const std::string e = std::to_string(epoch);
    write_features_csv(dir / ("features_epoch" + e + ".csv"),
                       extract_features(st.discriminator, st.feature_layers, data.features), data.labels);
    write_matrix_csv(dir / ("samples_epoch" + e + ".csv"), generate(st.generator, fixed_noise), "p");
    if (st.config.mode != TrainMode::vanilla)
        write_centers_csv(dir / ("centers_epoch" + e + ".csv"), st.real_centers);
}

}  // namespace

TrainState run_training(const TrainConfig& config, const LabeledDataset& dataset, const Architecture& arch,
                        const RunOptions& options) {
    TrainState st = init_training(config, dataset, arch);
    const std::uint64_t per_epoch = iterations_per_epoch(dataset.size(), config.batch_size);

    std::ofstream losses;
    Matrix fixed_noise;
    if (options.out_dir) {
        std::filesystem::create_directories(*options.out_dir);
        losses.open(*options.out_dir / "losses.csv", std::ios::trunc);
        if (!losses) throw std::runtime_error("cannot write " + (*options.out_dir / "losses.csv").string());
        losses << loss_csv_header() << '\n';
        Rng noise_rng(config.seed ^ 0x5eedf00dULL);
        fixed_noise = sample_noise(noise_rng, options.snapshot_samples, config.noise_dim);
        snapshot(*options.out_dir, 0, st, dataset, fixed_noise);
    }

    try {
        for (std::uint64_t it = 0; it < config.iterations; ++it) {
            Matrix real = next_real_batch(st, dataset);
            Matrix noise = sample_noise(st.rng, config.batch_size, config.noise_dim);
            LossReport r = train_step(st, real, noise);
            if (losses.is_open()) losses << loss_csv_row(st.iteration, r) << '\n';
            if (options.on_step) options.on_step(st.iteration, r, st);
            if (options.out_dir && options.snapshot_every_epochs > 0 && st.iteration % per_epoch == 0) {
                const std::uint64_t epoch = st.iteration / per_epoch;
                if (epoch % options.snapshot_every_epochs == 0) snapshot(*options.out_dir, epoch, st, dataset, fixed_noise);
            }
        }
    } catch (...) {
        if (losses.is_open()) losses.flush();
        throw;
    }

    if (options.out_dir) {
        losses.flush();
        to_archive(st).save(*options.out_dir / "final.ckpt");
    }
    return st;
}

std::string to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::regular: return "regular";
        case TrainMode::reduced: return "reduced";
        case TrainMode::vanilla: return "vanilla";
    }
    return "?";
}

TrainMode parse_train_mode(const std::string& s) {
    if (s == "regular") return TrainMode::regular;
    if (s == "reduced") return TrainMode::reduced;
    if (s == "vanilla") return TrainMode::vanilla;
    throw std::invalid_argument("unknown mode '" + s + "' (expected regular, reduced or vanilla)");
}

Archive to_archive(const TrainState& st) {
    Archive a;
    Matrix meta(1, 5);
    meta << static_cast<double>(st.config.mode), static_cast<double>(st.config.noise_dim),
        static_cast<double>(st.feature_layers), static_cast<double>(st.iteration),
        static_cast<double>(st.config.classes);
    a.put("meta", std::move(meta));
    a.put_network("d", st.discriminator);
    a.put_network("g", st.generator);
    a.put_adam("adam_d", st.adam_d);
    a.put_adam("adam_g", st.adam_g);
    if (st.real_centers.k() > 0) a.put("centers.real", st.real_centers.centers);
    if (st.fake_centers.k() > 0) a.put("centers.fake", st.fake_centers.centers);
    return a;
}

TrainState from_archive(const Archive& a) {
    const Matrix& meta = a.get("meta");
    if (meta.cols() != 5) throw CheckpointError("malformed meta entry");
    TrainState st;
    const int mode = static_cast<int>(meta(0, 0));
    if (mode < 0 || mode > 2) throw CheckpointError("unknown training mode in checkpoint");
    st.config.mode = static_cast<TrainMode>(mode);
    st.config.noise_dim = static_cast<std::size_t>(meta(0, 1));
    st.feature_layers = static_cast<std::size_t>(meta(0, 2));
    st.iteration = static_cast<std::uint64_t>(meta(0, 3));
    st.config.classes = static_cast<std::size_t>(meta(0, 4));
    st.discriminator = a.get_network("d");
    st.generator = a.get_network("g");
    if (st.generator.spec.input_dim() != st.config.noise_dim)
        throw CheckpointError("checkpoint generator input does not match its noise_dim");
    if (st.feature_layers == 0 || st.feature_layers > st.discriminator.spec.size())
        throw CheckpointError("checkpoint feature_layers out of range");
    st.adam_d = a.get_adam("adam_d");
    st.adam_g = a.get_adam("adam_g");
    if (a.contains("centers.real")) st.real_centers = Centroids(a.get("centers.real"));
    if (a.contains("centers.fake")) st.fake_centers = Centroids(a.get("centers.fake"));
    return st;
}

}  // namespace kmgan
