#include "atnet/training.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

#include <json.hpp>

namespace atnet {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kDropoutStream = 0x44524F50ULL;
constexpr std::uint64_t kPriorStream = 0x5052494FULL;

std::string checkpoint_name(std::uint64_t iter) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "checkpoint_iter_%08llu.bin", static_cast<unsigned long long>(iter));
    return buf;
}

using InputProvider = std::function<Tensor(std::size_t index, const TrainingPair& pair)>;

// Shared optimization loop for both stages.
TrainResult run_training(const TrainRun& run, const NetworkSpec& spec, ParameterStore params,
                         std::optional<OptimizerState> optimizer, std::uint64_t start_iter, PairDataset& data,
                         const LossConfig& loss_cfg, const InputProvider& make_input,
                         std::map<std::string, std::string> meta) {
    run.validate();
    loss_cfg.validate();
    if (!optimizer) optimizer = OptimizerState::for_params(params, run.adam);

    std::ofstream log;
    if (!run.output_dir.empty()) {
        std::error_code ec;
        fs::create_directories(run.output_dir, ec);
        if (ec) throw IoError("cannot create " + run.output_dir.string() + ": " + ec.message());
        const fs::path log_path = run.output_dir / "loss_log.jsonl";
        log.open(log_path, start_iter == 0 ? std::ios::trunc : std::ios::app);
        if (!log) throw IoError("cannot open loss log " + log_path.string());
    }

    meta["stage"] = run.stage == Stage::prior ? "prior" : "restoration";
    meta["seed"] = std::to_string(run.seed);
    meta["batch_size"] = std::to_string(run.batch_size);
    meta["lambda_p"] = std::to_string(loss_cfg.lambda_p);

    auto snapshot = [&](std::uint64_t iter) {
        Checkpoint c;
        c.spec = spec;
        c.params = params;
        c.optimizer = optimizer;
        c.step = iter;
        c.meta = meta;
        return c;
    };

    EpochSampler sampler(run.seed, data.size());
    TrainResult result;
    const ForwardMode mode = ForwardMode::train;
    for (std::uint64_t iter = start_iter; iter < run.max_iters; ++iter) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto indices = sampler.batch(iter, run.batch_size);
        Gradients grads = Gradients::zeros_like(params);
        LossRecord record;
        record.iter = iter + 1;
        bool finite = true;
        for (std::size_t b = 0; b < indices.size(); ++b) {
            const TrainingPair& pair = data.get(indices[b]);
            const Tensor input = make_input(indices[b], pair);
            SeededRng rng(derive_seed(run.seed, {kDropoutStream, iter, b}));
            LossValue sample{};
            auto closure = [&](const Tensor& out, Tensor& grad) {
                sample = sample_loss(out, pair.clean, loss_cfg, &grad);
                for (double& g : grad.data) g /= static_cast<double>(indices.size());
                return sample.total;
            };
            try {
                GradientResult r = compute_gradients(spec, params, input, mode, &rng, closure);
                grads.add(r.grads);
            } catch (const NumericalError&) {
                finite = false;
            }
            record.loss.l1 += sample.l1 / indices.size();
            record.loss.perceptual += sample.perceptual / indices.size();
            record.loss.total += sample.total / indices.size();
        }
        if (!finite) {
            ++optimizer->rejected_steps;
            record.skipped = true;
        } else {
            record.skipped = !adam_step(params, grads, *optimizer);
        }
        const auto t1 = std::chrono::steady_clock::now();
        if (run.log_wall_time) record.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        result.losses.push_back(record);
        if (log) {
            log << format_loss_record(record) << '\n';
            log.flush();
        }
        const std::uint64_t done = iter + 1;
        if (!run.output_dir.empty() && run.checkpoint_every > 0 && done % run.checkpoint_every == 0 &&
            done != run.max_iters) {
            save_checkpoint(snapshot(done), run.output_dir / checkpoint_name(done));
        }
    }
    result.checkpoint = snapshot(std::max(start_iter, run.max_iters));
    if (!run.output_dir.empty()) save_checkpoint(result.checkpoint, run.output_dir / "checkpoint.bin");
    return result;
}

void check_resume(const std::optional<Checkpoint>& resume, const NetworkSpec& spec) {
    if (resume && resume->spec.descriptor() != spec.descriptor())
        throw CheckpointError("resume checkpoint holds network '" + resume->spec.descriptor() + "', expected '" +
                              spec.descriptor() + "'");
}

}  // namespace

void TrainRun::validate() const {
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
    if (!(adam.lr > 0.0)) throw InvalidArgument("learning rate must be > 0");
}

std::uint64_t prior_seed(std::uint64_t run_seed, std::uint64_t index) {
    return derive_seed(run_seed, {kPriorStream, index});
}

Tensor restoration_input(const Tensor& degraded, const UncertaintyMap& prior) {
    return concat_channels(degraded, prior.values);
}

TrainResult train_prior_network(const TrainRun& run, const LossConfig& loss_cfg, double dropout_rate,
                                const std::optional<Checkpoint>& resume) {
    if (run.stage != Stage::prior) throw InvalidArgument("train_prior_network: run stage must be prior");
    NetworkSpec spec = build_atnet1_spec(dropout_rate);
    spec.upsample = run.upsample;
    check_resume(resume, spec);
    PairDataset data = PairDataset::from_manifest(run.manifest, spec.spatial_divisor());
    ParameterStore params = resume ? resume->params : init_parameters(spec, derive_seed(run.seed, {1}));
    std::optional<OptimizerState> opt;
    if (resume) opt = resume->optimizer;
    return run_training(run, spec, std::move(params), opt, resume ? resume->step : 0, data, loss_cfg,
                        [](std::size_t, const TrainingPair& pair) { return pair.degraded; }, {});
}

TrainResult train_restoration_network(const TrainRun& run, const Checkpoint& prior_ckpt, const PriorSettings& prior,
                                      const LossConfig& loss_cfg, const std::optional<Checkpoint>& resume) {
    if (run.stage != Stage::restoration) throw InvalidArgument("train_restoration_network: run stage must be restoration");
    if (prior_ckpt.spec.name != "atnet1" || prior_ckpt.spec.output_channels() != 3 || prior_ckpt.spec.input_channels != 3)
        throw CheckpointError("stage-1 checkpoint does not hold the prior network (found '" + prior_ckpt.spec.name + "')");
    check_parameters(prior_ckpt.spec, prior_ckpt.params);
    NetworkSpec spec = build_atnet_spec(prior.prior_channels);
    spec.upsample = run.upsample;
    check_resume(resume, spec);
    const VarianceReduction reduction =
        prior.prior_channels == 1 ? VarianceReduction::channel_mean : VarianceReduction::per_channel;

    PairDataset data = PairDataset::from_manifest(run.manifest, spec.spatial_divisor());
    const PriorNetwork prior_net{prior_ckpt.spec, prior_ckpt.params};
    std::map<std::size_t, UncertaintyMap> cache;
    auto make_input = [&](std::size_t index, const TrainingPair& pair) {
        auto it = cache.find(index);
        if (it != cache.end()) return restoration_input(pair.degraded, it->second);
        const SeededRng rng(prior_seed(run.seed, index));
        UncertaintyMap d = estimate_prior(prior_net, pair.degraded, prior.samples, rng, reduction).prior;
        Tensor input = restoration_input(pair.degraded, d);
        if (prior.cache) cache.emplace(index, std::move(d));
        return input;
    };
    ParameterStore params = resume ? resume->params : init_parameters(spec, derive_seed(run.seed, {2}));
    std::optional<OptimizerState> opt;
    if (resume) opt = resume->optimizer;
    std::map<std::string, std::string> meta{{"mc_samples", std::to_string(prior.samples)},
                                            {"prior_network", prior_ckpt.spec.descriptor()}};
    return run_training(run, spec, std::move(params), opt, resume ? resume->step : 0, data, loss_cfg, make_input,
                        std::move(meta));
}

std::string format_loss_record(const LossRecord& record) {
    nlohmann::ordered_json j;
    j["iter"] = record.iter;
    j["l1"] = record.loss.l1;
    j["lp"] = record.loss.perceptual;
    j["total"] = record.loss.total;
    j["wall_ms"] = record.wall_ms;
    if (record.skipped) j["skipped"] = true;
    return j.dump();
}

}  // namespace atnet
