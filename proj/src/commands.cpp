#include "atnet/commands.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>

#include "atnet/checkpoint.hpp"
#include "atnet/evaluation.hpp"
#include "atnet/kernels.hpp"
#include "atnet/metrics.hpp"
#include "atnet/synth.hpp"
#include "atnet/training.hpp"

namespace atnet {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCommands[] = {"synth", "train-prior", "train-restore", "estimate", "restore", "eval"};

fs::path required_path(const RunConfig& cfg, const std::string& key, const std::string& flag) {
    const fs::path p = cfg.get_path(key);
    if (p.empty()) throw UsageError("missing " + key + " (set " + flag + " or " + key + "=...)");
    return p;
}

fs::path existing_path(const RunConfig& cfg, const std::string& key, const std::string& flag) {
    const fs::path p = required_path(cfg, key, flag);
    if (!fs::exists(p)) throw IoError("missing " + key + ": " + p.string() + " does not exist");
    return p;
}

fs::path prepare_output(const RunConfig& cfg) {
    const fs::path out = required_path(cfg, "output", "--output");
    fs::create_directories(out);
    cfg.write(out / kResolvedConfigName);
    return out;
}

int positive_int(const RunConfig& cfg, const std::string& key, std::int64_t min) {
    const std::int64_t v = cfg.get_int(key);
    if (v < min || v > 1'000'000'000)
        throw UsageError(key + " must be at least " + std::to_string(min) + " (got " + std::to_string(v) + ")");
    return static_cast<int>(v);
}

DegradationConfig degradation_config(const RunConfig& cfg) {
    DegradationConfig d;
    d.n_warp_centers = positive_int(cfg, "n_warp_centers", 0);
    d.warp_strength = {cfg.get_double("warp_strength_lo"), cfg.get_double("warp_strength_hi")};
    d.warp_falloff_sigma = {cfg.get_double("warp_falloff_lo"), cfg.get_double("warp_falloff_hi")};
    d.psf_sigma = {cfg.get_double("psf_sigma_lo"), cfg.get_double("psf_sigma_hi")};
    d.noise_sigma = cfg.get_double("noise_sigma");
    d.warp_first = cfg.get_bool("warp_first");
    d.seed = cfg.get_u64("seed");
    d.validate();
    return d;
}

UpsampleMode upsample_mode(const RunConfig& cfg) {
    const std::string m = cfg.get_string("upsample");
    if (m == "bilinear") return UpsampleMode::bilinear;
    if (m == "nearest") return UpsampleMode::nearest;
    throw UsageError("upsample must be bilinear or nearest (got '" + m + "')");
}

int prior_channels(const RunConfig& cfg) {
    const auto c = cfg.get_int("prior_channels");
    if (c != 1 && c != 3) throw UsageError("prior_channels must be 1 or 3");
    return static_cast<int>(c);
}

LossConfig loss_config(const RunConfig& cfg) {
    LossConfig l;
    l.lambda_p = cfg.get_double("lambda_p");
    if (l.lambda_p > 0)
        l.extractor = make_feature_extractor(cfg.get_path("feature_weights"), cfg.get_u64("feature_seed"),
                                             FeatureTap::pool3);
    l.validate();
    return l;
}

TrainRun train_run(const RunConfig& cfg, Stage stage, const fs::path& out) {
    TrainRun run;
    run.stage = stage;
    run.batch_size = positive_int(cfg, "batch", 1);
    run.max_iters = cfg.get_u64(stage == Stage::prior ? "iters_prior" : "iters_restore");
    run.seed = cfg.get_u64("seed");
    run.checkpoint_every = cfg.get_u64("checkpoint_every");
    run.manifest = existing_path(cfg, "manifest", "--manifest");
    run.output_dir = out;
    run.adam = {cfg.get_double("lr"), cfg.get_double("beta1"), cfg.get_double("beta2"), cfg.get_double("eps")};
    run.upsample = upsample_mode(cfg);
    run.log_wall_time = cfg.get_bool("log_wall_time");
    run.validate();
    return run;
}

std::optional<Checkpoint> resume_checkpoint(const RunConfig& cfg) {
    const fs::path p = cfg.get_path("resume");
    if (p.empty()) return std::nullopt;
    if (!fs::exists(p)) throw IoError("missing resume checkpoint: " + p.string() + " does not exist");
    return load_checkpoint(p);
}

void report_training(const TrainResult& r, const fs::path& out, std::ostream& os) {
    os << "trained to step " << r.checkpoint.step;
    if (!r.losses.empty())
        os << ", first loss " << r.losses.front().loss.total << ", last loss " << r.losses.back().loss.total;
    os << "\ncheckpoint: " << (out / "checkpoint.bin").string() << '\n';
}

std::vector<fs::path> input_images(const fs::path& input) {
    if (fs::is_directory(input)) {
        auto files = list_image_files(input);
        if (files.empty()) throw InvalidArgument("no images in " + input.string());
        return files;
    }
    return {input};
}

int cmd_synth(const RunConfig& cfg, std::ostream& os) {
    const fs::path in = existing_path(cfg, "input", "--input");
    const auto dcfg = degradation_config(cfg);
    const int pairs = positive_int(cfg, "pairs_per_image", 1);
    const fs::path out = prepare_output(cfg);
    const fs::path manifest = generate_dataset(in, out, dcfg, pairs);
    os << "wrote " << read_manifest(manifest).size() << " pairs, manifest " << manifest.string() << '\n';
    return kExitOk;
}

int cmd_train_prior(const RunConfig& cfg, std::ostream& os) {
    const double rate = cfg.get_double("dropout_rate");
    const LossConfig loss = loss_config(cfg);
    const auto resume = resume_checkpoint(cfg);
    const fs::path out = prepare_output(cfg);
    const TrainRun run = train_run(cfg, Stage::prior, out);
    report_training(train_prior_network(run, loss, rate, resume), out, os);
    return kExitOk;
}

int cmd_train_restore(const RunConfig& cfg, std::ostream& os) {
    const Checkpoint prior = load_checkpoint(existing_path(cfg, "atnet1_ckpt", "--atnet1-ckpt"));
    PriorSettings settings;
    settings.samples = positive_int(cfg, "S", 2);
    settings.prior_channels = prior_channels(cfg);
    settings.cache = cfg.get_bool("cache_priors");
    const LossConfig loss = loss_config(cfg);
    const auto resume = resume_checkpoint(cfg);
    const fs::path out = prepare_output(cfg);
    const TrainRun run = train_run(cfg, Stage::restoration, out);
    report_training(train_restoration_network(run, prior, settings, loss, resume), out, os);
    return kExitOk;
}

int cmd_estimate(const RunConfig& cfg, std::ostream& os) {
    const fs::path in = existing_path(cfg, "input", "--input");
    const Checkpoint ckpt = load_checkpoint(existing_path(cfg, "atnet1_ckpt", "--atnet1-ckpt"));
    const int samples = positive_int(cfg, "S", 2);
    const auto reduction =
        prior_channels(cfg) == 1 ? VarianceReduction::channel_mean : VarianceReduction::per_channel;
    const PriorNetwork net{ckpt.spec, ckpt.params};
    const auto files = input_images(in);
    const fs::path out = prepare_output(cfg);
    for (std::size_t i = 0; i < files.size(); ++i) {
        const Image y = load_image(files[i]);
        const auto d = estimate_image_prior(net, y, samples, SeededRng(prior_seed(cfg.get_u64("seed"), i)), reduction);
        const std::string stem = files[i].stem().string();
        save_uncertainty_map(d, out / (stem + "_prior.bin"));
        save_image(uncertainty_preview(d), out / (stem + "_prior.png"));
        os << stem << ": prior written\n";
    }
    return kExitOk;
}

int cmd_restore(const RunConfig& cfg, std::ostream& os) {
    const fs::path in = existing_path(cfg, "input", "--input");
    const Checkpoint prior = load_checkpoint(existing_path(cfg, "atnet1_ckpt", "--atnet1-ckpt"));
    const Checkpoint restorer = load_checkpoint(existing_path(cfg, "atnet_ckpt", "--atnet-ckpt"));
    const auto models = RestorationModels::from_checkpoints(prior, restorer);
    const int samples = positive_int(cfg, "S", 2);
    const bool save_prior = cfg.get_bool("save_prior");
    const auto files = input_images(in);
    const fs::path out = prepare_output(cfg);
    for (std::size_t i = 0; i < files.size(); ++i) {
        const Image y = load_image(files[i]);
        const Restoration r = restore_image(models, y, samples, SeededRng(prior_seed(cfg.get_u64("seed"), i)));
        const std::string stem = files[i].stem().string();
        save_image(r.restored, out / (stem + "_restored.png"));
        if (save_prior) save_image(uncertainty_preview(r.prior), out / (stem + "_prior.png"));
        os << stem << ": " << (out / (stem + "_restored.png")).string() << '\n';
    }
    return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& os) {
    const fs::path manifest = existing_path(cfg, "manifest", "--manifest");
    const fs::path prior_path = existing_path(cfg, "atnet1_ckpt", "--atnet1-ckpt");
    const fs::path restorer_path = existing_path(cfg, "atnet_ckpt", "--atnet-ckpt");
    const Checkpoint prior = load_checkpoint(prior_path);
    const Checkpoint restorer = load_checkpoint(restorer_path);
    const int samples = positive_int(cfg, "S", 2);
    const std::uint64_t seed = cfg.get_u64("seed");
    const auto extractor =
        make_feature_extractor(cfg.get_path("feature_weights"), cfg.get_u64("feature_seed"), FeatureTap::pool5);
    const fs::path gallery_dir = cfg.get_path("gallery");
    const fs::path probes_dir = cfg.get_path("probes");
    if (gallery_dir.empty() != probes_dir.empty())
        throw UsageError("identification needs both gallery and probes");
    const fs::path out = prepare_output(cfg);

    MetricsReport report = evaluate_restoration(manifest, prior, restorer, samples, seed, *extractor);
    report.config["atnet1_ckpt"] = prior_path.string();
    report.config["atnet_ckpt"] = restorer_path.string();
    report.config["manifest"] = manifest.string();

    if (!gallery_dir.empty()) {
        const fs::path weights = cfg.get_path("embedding_weights");
        const ProjectionEmbedding provider = weights.empty()
                                                 ? ProjectionEmbedding::random(cfg.get_u64("embedding_seed"))
                                                 : ProjectionEmbedding::from_file(weights);
        const Gallery gallery = Gallery::from_directory(gallery_dir, provider);
        auto probes = load_labeled_images(probes_dir);
        if (probes.empty()) throw InvalidArgument("no probe images under " + probes_dir.string());
        report.topk_baseline = topk_identification(probes, gallery, provider);
        const auto models = RestorationModels::from_checkpoints(prior, restorer);
        for (std::size_t i = 0; i < probes.size(); ++i)
            probes[i].image =
                restore_image(models, probes[i].image, samples, SeededRng(derive_seed(seed, {0x50524F4245, i})))
                    .restored;
        report.topk_restored = topk_identification(probes, gallery, provider);
        report.config["gallery"] = gallery_dir.string();
        report.config["probes"] = probes_dir.string();
    }

    std::ofstream(out / "report.json", std::ios::binary) << report.to_json();
    const std::string table = report.to_table();
    std::ofstream(out / "report.txt", std::ios::binary) << table;
    os << table;
    return kExitOk;
}

}  // namespace

bool is_command(const std::string& name) {
    for (const char* c : kCommands)
        if (name == c) return true;
    return false;
}

int run_command(const std::string& name, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        if (!is_command(name)) throw UsageError("unknown command '" + name + "'");
        const auto threads = cfg.get_int("threads");
        if (threads < 0) throw UsageError("threads must be >= 0");
        set_worker_threads(static_cast<int>(threads));
        if (name == "synth") return cmd_synth(cfg, out);
        if (name == "train-prior") return cmd_train_prior(cfg, out);
        if (name == "train-restore") return cmd_train_restore(cfg, out);
        if (name == "estimate") return cmd_estimate(cfg, out);
        if (name == "restore") return cmd_restore(cfg, out);
        return cmd_eval(cfg, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace atnet
