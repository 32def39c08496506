#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "atnet/checkpoint.hpp"
#include "atnet/dataset.hpp"
#include "atnet/features.hpp"
#include "atnet/loss.hpp"
#include "atnet/optimizer.hpp"
#include "atnet/training.hpp"
#include "support.hpp"

using namespace atnet;
using namespace atnet::test;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<const FeatureExtractor> descriptor() {
    return make_feature_extractor({}, 20211, FeatureTap::pool3);
}

// Four 16x16 pairs, enough for fast end-to-end training checks.
fs::path tiny_dataset(const fs::path& root) {
    fs::create_directories(root / "clean");
    for (int i = 0; i < 4; ++i)
        save_image(smooth_image(16, 16, 3, 500 + i), root / "clean" / ("c" + std::to_string(i) + ".png"));
    DegradationConfig cfg;
    cfg.seed = 3;
    cfg.warp_strength = {0.5, 1.5};
    cfg.warp_falloff_sigma = {3.0, 6.0};
    return generate_dataset(root / "clean", root / "data", cfg, 1);
}

TrainRun tiny_run(const fs::path& manifest, const fs::path& out, std::uint64_t iters) {
    TrainRun run;
    run.batch_size = 2;
    run.max_iters = iters;
    run.seed = 11;
    run.manifest = manifest;
    run.output_dir = out;
    run.adam.lr = 1e-3;
    return run;
}

LossConfig loss_cfg() {
    LossConfig c;
    c.extractor = descriptor();
    return c;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("l1 loss") {
    const std::vector<Image> a = {random_image(8, 8, 3, 1), random_image(8, 8, 3, 2)};
    CHECK(l1_loss(a, a) == 0.0);
    std::vector<Image> shifted = a;
    Image base(8, 8, 3, 0.3), plus(8, 8, 3, 0.5);
    CHECK(l1_loss(std::vector<Image>{plus}, std::vector<Image>{base}) == doctest::Approx(0.2).epsilon(1e-12));
    const std::vector<Image> b = {random_image(8, 8, 3, 3), random_image(8, 8, 3, 4)};
    double sum = 0;
    for (int i = 0; i < 2; ++i)
        for (std::size_t p = 0; p < a[i].size(); ++p) sum += std::abs(a[i].data[p] - b[i].data[p]);
    CHECK(std::abs(l1_loss(a, b) - sum / (2 * a[0].size())) < 1e-12);
    CHECK_THROWS_AS(l1_loss(a, std::vector<Image>{b[0]}), InvalidArgument);
    CHECK_THROWS_AS(l1_loss(std::vector<Image>{a[0]}, std::vector<Image>{Image(8, 7, 3)}), InvalidArgument);
}

TEST_CASE("perceptual and total loss") {
    const auto ext = descriptor();
    const std::vector<Image> a = {random_image(16, 16, 3, 1)}, b = {random_image(16, 16, 3, 2)};
    CHECK(perceptual_loss(a, a, *ext) == 0.0);
    CHECK(perceptual_loss(a, b, *ext) == perceptual_loss(b, a, *ext));
    CHECK(perceptual_loss(a, b, *ext) > 0.0);
    const IdentityExtractor id;
    double sq = 0;
    for (std::size_t p = 0; p < a[0].size(); ++p) sq += (a[0].data[p] - b[0].data[p]) * (a[0].data[p] - b[0].data[p]);
    CHECK(std::abs(perceptual_loss(a, b, id) - sq / a[0].size()) < 1e-12);

    LossConfig cfg = loss_cfg();
    CHECK(cfg.lambda_p == 0.002);
    const LossValue v = total_loss(a, b, cfg);
    CHECK(v.total == v.l1 + 0.002 * v.perceptual);
    CHECK(v.total >= 0.0);
    CHECK(total_loss(a, a, cfg).total == 0.0);
    cfg.lambda_p = 0.0;
    CHECK(total_loss(a, b, cfg).total == l1_loss(a, b));
    cfg.lambda_p = -1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    LossConfig no_ext;
    CHECK_THROWS_AS(no_ext.validate(), InvalidArgument);
}

TEST_CASE("feature extractor") {
    const auto ext = ConvFeatureExtractor::random_descriptor(20211, FeatureTap::pool3);
    const Tensor x = to_tensor(random_image(20, 24, 3, 3));
    CHECK(ext.features(x) == ext.features(x));
    CHECK(ext.tap() == "pool3");
    CHECK(ConvFeatureExtractor::random_descriptor(20211, FeatureTap::pool5).tap() == "pool5");
    // Odd sizes are edge-padded, so any pipeline-sized image is accepted.
    CHECK_NOTHROW(ext.features(to_tensor(random_image(13, 11, 3, 4))));

    // Vector-Jacobian product against central differences.
    const Tensor f = ext.features(x);
    const Tensor w = random_tensor(f.channels, f.height, f.width, 5);
    const Tensor g = ext.backward(x, w);
    SeededRng rng(6);
    double worst = 0;
    for (int k = 0; k < 40; ++k) {
        const std::size_t i = rng.uniform_index(x.size());
        Tensor xp = x, xm = x;
        xp.data[i] += 1e-5;
        xm.data[i] -= 1e-5;
        const Tensor fp = ext.features(xp), fm = ext.features(xm);
        double d = 0;
        for (std::size_t j = 0; j < f.size(); ++j) d += w.data[j] * (fp.data[j] - fm.data[j]);
        worst = std::max(worst, relative_error(g.data[i], d / 2e-5));
    }
    CHECK(worst < 1e-3);

    TempDir dir("ext");
    Checkpoint c;
    c.spec = ext.spec();
    c.params = ext.params();
    save_checkpoint(c, dir / "w.bin");
    const auto loaded = make_feature_extractor(dir / "w.bin", 0, FeatureTap::pool3);
    CHECK(loaded->features(x) == f);
    CHECK_THROWS_AS(make_feature_extractor(dir / "missing.bin", 0, FeatureTap::pool3), IoError);
}

TEST_CASE("sample loss gradient matches finite differences") {
    const LossConfig cfg = loss_cfg();
    const Tensor target = to_tensor(random_image(16, 16, 3, 7));
    Tensor pred = to_tensor(random_image(16, 16, 3, 8));
    Tensor grad;
    sample_loss(pred, target, cfg, &grad);
    SeededRng rng(9);
    double worst = 0;
    for (int k = 0; k < 40; ++k) {
        const std::size_t i = rng.uniform_index(pred.size());
        const double orig = pred.data[i];
        pred.data[i] = orig + 1e-6;
        const double lp = sample_loss(pred, target, cfg, nullptr).total;
        pred.data[i] = orig - 1e-6;
        const double lm = sample_loss(pred, target, cfg, nullptr).total;
        pred.data[i] = orig;
        worst = std::max(worst, relative_error(grad.data[i], (lp - lm) / 2e-6));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("adam") {
    NetworkSpec s;
    s.name = "c";
    s.input_channels = 1;
    s.layers = {Conv3x3Layer{1, 1}};
    ParameterStore p = init_parameters(s, 1);
    const ParameterStore before = p;
    OptimizerState st = OptimizerState::for_params(p);
    CHECK(st.config.lr == 2e-4);
    CHECK(st.config.beta1 == 0.9);
    CHECK(st.config.beta2 == 0.999);
    CHECK(st.config.eps == 1e-8);
    CHECK(adam_step(p, Gradients::zeros_like(p), st));
    CHECK(p == before);
    CHECK(st.step == 1);

    OptimizerState one = OptimizerState::for_params(p, {1e-3, 0.9, 0.999, 1e-8});
    Gradients g = Gradients::zeros_like(p);
    for (auto& v : g.values) std::fill(v.begin(), v.end(), 1.0);
    const float w0 = p.tensors()[0].values[0];
    adam_step(p, g, one);
    CHECK(std::abs((p.tensors()[0].values[0] - w0) + 1e-3) < 1e-6);

    g.values[0][0] = std::nan("");
    const ParameterStore held = p;
    CHECK_FALSE(adam_step(p, g, one));
    CHECK(p == held);
    CHECK(one.rejected_steps == 1);
    CHECK(one.step == 1);
}

TEST_CASE("dataset and sampler") {
    const Image img = random_image(18, 23, 3, 1);
    const Image c = center_crop_to_multiple(img, 4);
    CHECK(c.height == 16);
    CHECK(c.width == 20);
    CHECK(c.at(0, 0, 0) == img.at(1, 1, 0));

    EpochSampler a(5, 7), b(5, 7);
    std::vector<std::size_t> seen;
    for (int t = 0; t < 7; ++t) seen.push_back(a.batch(t, 1)[0]);
    std::sort(seen.begin(), seen.end());
    for (std::size_t i = 0; i < 7; ++i) CHECK(seen[i] == i);
    CHECK(a.batch(40, 3) == b.batch(40, 3));
    CHECK(EpochSampler(5, 7).permutation(0) != EpochSampler(5, 7).permutation(1));
    CHECK_THROWS_AS(EpochSampler(1, 0), InvalidArgument);
}

TEST_CASE("paper-scale defaults") {
    CHECK(kPriorIterations == 200000);
    CHECK(kRestorationIterations == 1500000);
    CHECK(kDefaultBatchSize == 10);
    CHECK(kDefaultMcSamples == 10);
    TrainRun run;
    CHECK(run.batch_size == 10);
    run.batch_size = 0;
    CHECK_THROWS_AS(run.validate(), InvalidArgument);
}

TEST_CASE("training is deterministic and resumable") {
    TempDir dir("train");
    const fs::path manifest = tiny_dataset(dir.path());
    TrainRun run = tiny_run(manifest, dir / "a", 10);
    run.checkpoint_every = 5;
    const TrainResult a = train_prior_network(run, loss_cfg(), 0.1);
    run.output_dir = dir / "b";
    const TrainResult b = train_prior_network(run, loss_cfg(), 0.1);
    CHECK(a.checkpoint.params == b.checkpoint.params);
    CHECK(read_file(dir / "a" / "loss_log.jsonl") == read_file(dir / "b" / "loss_log.jsonl"));
    CHECK(read_file(dir / "a" / "checkpoint.bin") == read_file(dir / "b" / "checkpoint.bin"));
    REQUIRE(fs::exists(dir / "a" / "checkpoint_iter_00000005.bin"));

    const Checkpoint mid = load_checkpoint(dir / "a" / "checkpoint_iter_00000005.bin");
    CHECK(mid.step == 5);
    CHECK(mid.meta.at("stage") == "prior");
    run.output_dir = dir / "c";
    const TrainResult resumed = train_prior_network(run, loss_cfg(), 0.1, mid);
    CHECK(resumed.checkpoint.params == a.checkpoint.params);
    CHECK(*resumed.checkpoint.optimizer == *a.checkpoint.optimizer);
    REQUIRE(resumed.losses.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(format_loss_record(resumed.losses[i]) == format_loss_record(a.losses[5 + i]));

    // The log has one record per iteration with the documented fields.
    const std::string log = read_file(dir / "a" / "loss_log.jsonl");
    CHECK(std::count(log.begin(), log.end(), '\n') == 10);
    CHECK(log.rfind("{\"iter\":1,\"l1\":", 0) == 0);
    CHECK(log.find("\"wall_ms\":0") != std::string::npos);

    // A different dropout rate is a different network; resuming across it is refused.
    CHECK_THROWS_AS(train_prior_network(run, loss_cfg(), 0.2, mid), CheckpointError);
}

TEST_CASE("both stages reduce the training loss") {
    TempDir dir("train2");
    const fs::path manifest = tiny_dataset(dir.path());
    TrainRun run = tiny_run(manifest, dir / "prior", 60);
    const TrainResult prior = train_prior_network(run, loss_cfg(), 0.1);
    auto trend = [](const TrainResult& r) {
        std::vector<double> first, last;
        for (int i = 0; i < 20; ++i) {
            first.push_back(r.losses[i].loss.total);
            last.push_back(r.losses[r.losses.size() - 20 + i].loss.total);
        }
        return std::pair{median(first), median(last)};
    };
    const auto [p0, p1] = trend(prior);
    CHECK(p1 < p0);

    const ParameterStore frozen = prior.checkpoint.params;
    run.output_dir = dir / "restore";
    run.stage = Stage::restoration;
    PriorSettings settings;
    settings.samples = 3;
    const TrainResult restore = train_restoration_network(run, prior.checkpoint, settings, loss_cfg());
    CHECK(prior.checkpoint.params == frozen);
    CHECK(restore.checkpoint.spec.input_channels == 6);
    CHECK(restore.checkpoint.meta.at("stage") == "restoration");
    const auto [r0, r1] = trend(restore);
    CHECK(r1 < r0);

    // Recomputing priors on every visit gives the same run as caching them.
    settings.cache = false;
    run.max_iters = 4;
    run.output_dir.clear();
    const TrainResult cached = train_restoration_network(run, prior.checkpoint, {3, 3, true}, loss_cfg());
    const TrainResult fresh = train_restoration_network(run, prior.checkpoint, settings, loss_cfg());
    CHECK(cached.checkpoint.params == fresh.checkpoint.params);

    CHECK_THROWS_AS(train_restoration_network(run, restore.checkpoint, settings, loss_cfg()), CheckpointError);
}

}  // TEST_SUITE
