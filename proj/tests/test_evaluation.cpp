#include <doctest.h>

#include <cmath>
#include <fstream>

#include "atnet/evaluation.hpp"
#include "atnet/metrics.hpp"
#include "atnet/synth.hpp"
#include "support.hpp"

using namespace atnet;
using namespace atnet::test;
namespace fs = std::filesystem;

namespace {

// Restoration stub whose output is exactly its first three input channels.
Checkpoint identity_restorer() {
    Checkpoint c;
    c.spec.name = "stub_restore";
    c.spec.input_channels = 6;
    c.spec.layers = {Res2BlockLayer{6, 3, 3}};
    c.spec.output = OutputActivation::none;
    c.params = zero_parameters(c.spec);
    auto& w = c.params.get("L0.shortcut.w").values;
    for (int o = 0; o < 3; ++o) w[o * 6 + o] = 1.0f;
    return c;
}

Checkpoint stub_prior() {
    Checkpoint c;
    c.spec.name = "stub_prior";
    c.spec.input_channels = 3;
    c.spec.layers = {Res2BlockLayer{3, 3, 3}};
    c.spec.dropout_rate = 0.2;
    c.spec.dropout_everywhere = true;
    c.params = init_parameters(c.spec, 4);
    return c;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("d_vgg") {
    const auto ext = make_feature_extractor({}, 20211, FeatureTap::pool5);
    const Image a = random_image(32, 32, 3, 1), b = random_image(32, 32, 3, 2);
    CHECK(d_vgg(a, a, *ext) == 0.0);
    CHECK(d_vgg(a, b, *ext) == d_vgg(b, a, *ext));
    CHECK(d_vgg(a, b, *ext) > 0.0);
    CHECK(std::abs(d_vgg(a, b, IdentityExtractor{}) - mean_squared_error(a, b)) < 1e-15);
}

TEST_CASE("summaries exclude infinite psnr rows") {
    const std::vector<MetricRow> rows = {{"a", 20.0, 0.5, 1.0}, {"b", kPsnrInfinite, 1.0, 0.0}, {"c", 30.0, 0.7, 2.0}};
    const MetricSummary s = summarize(rows);
    CHECK(s.count == 3);
    CHECK(s.psnr_infinite == 1);
    CHECK(std::abs(s.psnr - 25.0) < 1e-9);
    CHECK(std::abs(s.ssim - 2.2 / 3) < 1e-9);
    CHECK(std::abs(s.d_vgg - 1.0) < 1e-9);
}

TEST_CASE("evaluation on an identity manifest") {
    TempDir dir("eval");
    fs::create_directories(dir / "clean");
    save_image(smooth_image(20, 28, 3, 1), dir / "clean" / "a.png");
    save_image(smooth_image(16, 16, 3, 2), dir / "clean" / "b.png");
    const fs::path m = generate_dataset(dir / "clean", dir / "data", identity_degradation(3), 2);
    const auto ext = make_feature_extractor({}, 20211, FeatureTap::pool5);
    const MetricsReport r = evaluate_restoration(m, stub_prior(), identity_restorer(), 3, 9, *ext);
    REQUIRE(r.restored.size() == 4);
    REQUIRE(r.baseline.size() == 4);
    for (const auto& row : r.restored) {
        CHECK(std::isinf(row.psnr));
        CHECK(row.ssim == doctest::Approx(1.0));
        CHECK(row.d_vgg == 0.0);
    }
    CHECK(r.restored_summary.psnr_infinite == 4);
    CHECK(r.baseline_summary.count == 4);
    const std::string json = r.to_json();
    CHECK(json.find("\"psnr\": \"inf\"") != std::string::npos);
    CHECK(json.find("\"baseline\"") != std::string::npos);
    CHECK(json.find("\"seed\": \"9\"") != std::string::npos);
    const std::string table = r.to_table();
    CHECK(table.find("turbulence-distorted") != std::string::npos);
    CHECK(table.find("restored") != std::string::npos);

    const MetricsReport again = evaluate_restoration(m, stub_prior(), identity_restorer(), 3, 9, *ext);
    CHECK(again.to_json() == json);

    CHECK_THROWS_AS(evaluate_restoration(dir / "none.jsonl", stub_prior(), identity_restorer(), 3, 9, *ext), IoError);
    CHECK_THROWS_AS(evaluate_restoration(m, identity_restorer(), identity_restorer(), 3, 9, *ext), CheckpointError);
}

TEST_CASE("restore_image pads and crops arbitrary sizes") {
    const NetworkSpec p = build_atnet1_spec();
    const NetworkSpec s = build_atnet_spec(3);
    const RestorationModels models{{p, init_parameters(p, 1)}, s, init_parameters(s, 2)};
    const Image y = random_image(13, 18, 3, 3);
    const Restoration r = restore_image(models, y, 2, SeededRng(4));
    CHECK(r.restored.same_shape(y));
    CHECK(r.prior.values.height == 13);
    CHECK(r.prior.values.width == 18);
    CHECK(restore_image(models, y, 2, SeededRng(4)).restored == r.restored);
    CHECK_THROWS_AS(restore_image(models, Image(13, 18, 1), 2, SeededRng(4)), InvalidArgument);

    const NetworkSpec s1 = build_atnet_spec(1);
    const RestorationModels reduced{{p, init_parameters(p, 1)}, s1, init_parameters(s1, 2)};
    CHECK(reduced.reduction() == VarianceReduction::channel_mean);
    CHECK(restore_image(reduced, y, 2, SeededRng(4)).prior.values.channels == 1);
}

TEST_CASE("top-k fixtures") {
    Gallery g;
    g.add("ann", {1, 0, 0, 0});
    g.add("bob", {0, 1, 0, 0});
    g.add("bob", {0, 0, 1, 0});
    g.add("cat", {0, 0, 0, 1});

    const auto self = topk_from_embeddings({{"ann", {1, 0, 0, 0}}, {"bob", {0, 0, 1, 0}}, {"cat", {0, 0, 0, 1}}}, g);
    CHECK(self.accuracy == std::vector<double>{100, 100, 100});
    CHECK(self.probes == 3);

    // ann probe nearest to cat, then ann: miss at 1, hit at 3.
    const double a = 0.6, b = 0.8;
    const auto miss = topk_from_embeddings({{"ann", {a, 0, 0, b}}, {"cat", {0, 0, 0, 1}}}, g, {1, 2, 3});
    CHECK(miss.accuracy == std::vector<double>{50, 100, 100});

    // Exact tie between bob (second gallery slot) and cat: insertion order puts bob first.
    const double r = std::sqrt(0.5);
    const auto tie = topk_from_embeddings({{"cat", {0, r, 0, r}}}, g, {1, 2});
    CHECK(tie.accuracy == std::vector<double>{0, 100});

    CHECK_THROWS_AS(topk_from_embeddings({{"dan", {1, 0, 0, 0}}}, g), InvalidArgument);
    CHECK_THROWS_AS(topk_from_embeddings({{"ann", {1, 0, 0, 0}}}, Gallery{}), InvalidArgument);
    CHECK_THROWS_AS(topk_from_embeddings({{"ann", {1, 0, 0, 0}}}, g, {0}), InvalidArgument);
}

TEST_CASE("projection embedding and directory galleries") {
    const ProjectionEmbedding e = ProjectionEmbedding::random(7);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto v = e.embed(random_image(24 + s, 30, 3, s));
        double n = 0;
        for (double x : v) n += x * x;
        CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-6);
        CHECK(v == e.embed(random_image(24 + s, 30, 3, s)));
    }
    const auto zero = e.embed(Image(16, 16, 3, 0.0));
    CHECK(zero[0] == 1.0);

    TempDir dir("gal");
    {
        std::ofstream out(dir / "emb.json");
        out << "{\"grid\": 2, \"dim\": 2, \"weights\": [1,0,0,0, 0,0,0,1]}";
    }
    const auto f = ProjectionEmbedding::from_file(dir / "emb.json");
    Image img(8, 8, 1, 0.0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) img.at(y, x, 0) = 1.0;
    const auto v = f.embed(img);
    CHECK(v[0] == doctest::Approx(1.0));
    CHECK(v[1] == doctest::Approx(0.0));
    std::ofstream(dir / "bad.json") << "{\"grid\": 2, \"dim\": 3, \"weights\": [1]}";
    CHECK_THROWS(ProjectionEmbedding::from_file(dir / "bad.json"));
    CHECK_THROWS_AS(ProjectionEmbedding::from_file(dir / "none.json"), IoError);

    for (const char* id : {"p1", "p2", "p3"}) {
        fs::create_directories(dir / "gallery" / id);
        fs::create_directories(dir / "probes" / id);
    }
    for (int i = 0; i < 3; ++i) {
        const Image face = smooth_image(32, 32, 3, 40 + i);
        const std::string id = "p" + std::to_string(i + 1);
        save_image(face, dir / "gallery" / id / "g.png");
        save_image(face, dir / "probes" / id / "q.png");
    }
    const Gallery g = Gallery::from_directory(dir / "gallery", e);
    CHECK(g.size() == 3);
    CHECK(g.labels == std::vector<std::string>{"p1", "p2", "p3"});
    const auto probes = load_labeled_images(dir / "probes");
    const TopKResult res = topk_identification(probes, g, e);
    CHECK(res.accuracy[0] == 100.0);
    fs::create_directories(dir / "empty");
    CHECK_THROWS_AS(Gallery::from_directory(dir / "empty", e), InvalidArgument);
}

}  // TEST_SUITE
