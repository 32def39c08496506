#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "atnet/uncertainty.hpp"
#include "support.hpp"

using namespace atnet;
using namespace atnet::test;

namespace {

PriorNetwork random_prior(double rate, std::uint64_t seed = 1) {
    const NetworkSpec s = build_atnet1_spec(rate);
    return {s, init_parameters(s, seed)};
}

double mean_of(const Tensor& t) {
    double s = 0;
    for (double v : t.data) s += v;
    return s / t.size();
}

}  // namespace

TEST_SUITE("uncertainty") {

TEST_CASE("mc samples") {
    const Tensor y = to_tensor(random_image(16, 16, 3, 2));
    const auto zero = mc_forward_samples(random_prior(0.0), y, 4, SeededRng(5));
    for (const auto& s : zero.samples) CHECK(s == zero.samples[0]);

    const PriorNetwork net = random_prior(0.1);
    const SeededRng rng(7);
    const auto a = mc_forward_samples(net, y, kDefaultMcSamples, rng);
    const auto b = mc_forward_samples(net, y, kDefaultMcSamples, rng);
    CHECK(a.count() == 10);
    CHECK(a.samples == b.samples);
    CHECK(a.seeds == b.seeds);
    for (int i = 0; i < a.count(); ++i) CHECK(a.seeds[i] == derive_seed(7, {static_cast<std::uint64_t>(i)}));
    CHECK(a.samples[0] != a.samples[1]);
    CHECK_THROWS_AS(mc_forward_samples(net, y, 1, rng), InvalidArgument);
    CHECK_THROWS_AS(mc_forward_samples(net, to_tensor(random_image(14, 16, 3, 2)), 2, rng), InvalidArgument);
}

TEST_CASE("variance map") {
    McSampleSet two;
    two.samples = {Tensor(3, 4, 4, 0.0), Tensor(3, 4, 4, 2.0)};
    for (double v : variance_map(two).values.data) CHECK(v == 1.0);

    McSampleSet set;
    for (int i = 0; i < 6; ++i) set.samples.push_back(to_tensor(random_image(5, 7, 3, 30 + i)));
    const auto d = variance_map(set);
    for (double v : d.values.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 0.25);
    }
    McSampleSet shuffled = set;
    std::reverse(shuffled.samples.begin(), shuffled.samples.end());
    std::swap(shuffled.samples[1], shuffled.samples[4]);
    CHECK(max_abs_difference(variance_map(shuffled).values, d.values) < 1e-15);

    // Brute-force E[p^2] - E[p]^2 agrees with the two-pass result.
    for (std::size_t p = 0; p < d.values.size(); ++p) {
        double m = 0, m2 = 0;
        for (const auto& s : set.samples) {
            m += s.data[p];
            m2 += s.data[p] * s.data[p];
        }
        m /= 6;
        m2 /= 6;
        CHECK(std::abs(d.values.data[p] - (m2 - m * m)) < 1e-9);
    }

    const auto reduced = variance_map(set, VarianceReduction::channel_mean);
    CHECK(reduced.values.channels == 1);
    CHECK(reduced.reduction == VarianceReduction::channel_mean);
    const double expect = (d.values.at(0, 2, 3) + d.values.at(1, 2, 3) + d.values.at(2, 2, 3)) / 3;
    CHECK(std::abs(reduced.values.at(0, 2, 3) - expect) < 1e-15);

    McSampleSet ragged = set;
    ragged.samples.push_back(Tensor(3, 5, 6));
    CHECK_THROWS_AS(variance_map(ragged), InvalidArgument);
    McSampleSet one;
    one.samples = {Tensor(1, 2, 2)};
    CHECK_THROWS_AS(variance_map(one), InvalidArgument);
}

TEST_CASE("prior estimate") {
    const Tensor y = to_tensor(random_image(16, 16, 3, 3));
    const auto zero = estimate_prior(random_prior(0.0), y, 4, SeededRng(1));
    CHECK(std::all_of(zero.prior.values.data.begin(), zero.prior.values.data.end(), [](double v) { return v == 0; }));

    const auto est = estimate_prior(random_prior(0.1), y, kDefaultMcSamples, SeededRng(1));
    CHECK(est.prior.values.same_shape(y));
    CHECK(est.mean_prediction.same_shape(y));
    CHECK(*std::max_element(est.prior.values.data.begin(), est.prior.values.data.end()) > 0.0);
    CHECK(est.mean_prediction ==
          sample_mean(mc_forward_samples(random_prior(0.1), y, kDefaultMcSamples, SeededRng(1))));
}

TEST_CASE("more dropout gives more variance") {
    const Tensor y = to_tensor(smooth_image(16, 16, 3, 4));
    double low = 0, high = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        low += mean_of(estimate_prior(random_prior(0.05, 9), y, kDefaultMcSamples, SeededRng(s)).prior.values);
        high += mean_of(estimate_prior(random_prior(0.3, 9), y, kDefaultMcSamples, SeededRng(s)).prior.values);
    }
    CHECK(high >= low);
}

TEST_CASE("map files and preview") {
    TempDir dir("umap");
    UncertaintyMap m{to_tensor(random_image(9, 8, 3, 5)), VarianceReduction::per_channel};
    for (double& v : m.values.data) v = static_cast<float>(v * 0.1);
    save_uncertainty_map(m, dir / "d.bin");
    const auto back = load_uncertainty_map(dir / "d.bin");
    CHECK(back.values == m.values);
    CHECK(read_file(dir / "d.bin").substr(0, 8) == "ATUMAP01");
    CHECK(read_file(dir / "d.bin").size() == 8 + 12 + 4 * m.values.size());

    const Image preview = uncertainty_preview(m);
    CHECK(preview.channels == 1);
    CHECK(preview.height == 9);
    CHECK(*std::min_element(preview.data.begin(), preview.data.end()) == 0.0);
    CHECK(*std::max_element(preview.data.begin(), preview.data.end()) == 1.0);
    const Image flat = uncertainty_preview({Tensor(1, 8, 8, 0.01), VarianceReduction::channel_mean});
    for (double v : flat.data) CHECK(v == 0.0);

    std::string bytes = read_file(dir / "d.bin");
    std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, 30);
    CHECK_THROWS_AS(load_uncertainty_map(dir / "short.bin"), IoError);
}

}  // TEST_SUITE
