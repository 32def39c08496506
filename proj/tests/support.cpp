#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include <unistd.h>

#include "atnet/features.hpp"
#include "atnet/synth.hpp"
#include "atnet/training.hpp"

namespace atnet::test {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    SeededRng rng(derive_seed(static_cast<std::uint64_t>(::getpid()), {counter++}));
    path_ = fs::temp_directory_path() / ("atnet_" + tag + "_" + std::to_string(rng.next_u64() % 1000000000));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

Image random_image(int h, int w, int c, std::uint64_t seed) {
    SeededRng rng(seed);
    Image img(h, w, c);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

Image smooth_image(int h, int w, int c, std::uint64_t seed) {
    SeededRng rng(seed);
    Image img(h, w, c, 0.5);
    for (int ch = 0; ch < c; ++ch) {
        for (int k = 0; k < 3; ++k) {
            const double fy = rng.uniform(0.5, 3.0), fx = rng.uniform(0.5, 3.0);
            const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
            const double amp = rng.uniform(0.05, 0.13);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    img.at(y, x, ch) += amp * std::sin(2 * std::numbers::pi * (fy * y / h + fx * x / w) + phase);
        }
    }
    return img;
}

Tensor random_tensor(int c, int h, int w, std::uint64_t seed, double scale) {
    SeededRng rng(seed);
    Tensor t(c, h, w);
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::pair<std::string, std::string>> snapshot_tree(const fs::path& dir) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), dir).generic_string(), read_file(e.path()));
    std::sort(out.begin(), out.end());
    return out;
}

double relative_error(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-7});
    return std::abs(a - b) / denom;
}

namespace {

struct WeightedSum {
    Tensor weights;

    double operator()(const Tensor& out) const {
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += weights.data[i] * out.data[i];
        return s;
    }
};

}  // namespace

constexpr double kMinStep = 1e-7;

GradCheck check_gradients(const NetworkSpec& spec, const ParameterStore& params_in, const Tensor& input,
                          ForwardMode mode, std::uint64_t seed, std::size_t param_samples, std::size_t input_samples, double h) {
    ParameterStore params = params_in;
    SeededRng probe(seed);
    const Tensor out0 = forward(spec, params, input, ForwardMode::eval_deterministic, nullptr);
    const WeightedSum loss{random_tensor(out0.channels, out0.height, out0.width, derive_seed(seed, {1}))};

    const std::uint64_t mask_seed = derive_seed(seed, {2});
    Tensor x = input;
    auto eval_current = [&]() {
        SeededRng rng(mask_seed);
        return loss(forward(spec, params, x, mode, &rng));
    };
    SeededRng rng(mask_seed);
    const GradientResult g = compute_gradients(spec, params, input, mode, &rng, [&](const Tensor& out, Tensor& grad) {
        grad = loss.weights;
        return loss(out);
    });

    GradCheck result;
    auto record = [&](double analytic, double numeric, const std::string& where) {
        const double e = relative_error(analytic, numeric);
        if (e >= result.max_rel_error) {
            result.max_rel_error = e;
            std::ostringstream os;
            os << where << " analytic=" << analytic << " numeric=" << numeric;
            result.worst = os.str();
        }
    };

    auto& tensors = params.tensors();
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    for (std::size_t t = 0; t < tensors.size(); ++t) picks.emplace_back(t, probe.uniform_index(tensors[t].values.size()));
    const std::size_t total = params.scalar_count();
    while (total > 0 && picks.size() < param_samples) {
        std::size_t flat = probe.uniform_index(total);
        std::size_t t = 0;
        while (flat >= tensors[t].values.size()) flat -= tensors[t++].values.size();
        picks.emplace_back(t, flat);
    }
    // Central difference at the largest step in {h, h/4, ...} whose forward and backward
    // one-sided differences agree. Disagreement means the step straddles a ReLU kink,
    // where the central difference is not an estimate of the derivative.
    auto probe_at = [&](const std::function<double(double)>& set, const std::string& where, double analytic) {
        const double l0 = eval_current();
        double numeric = 0.0;
        for (double step = h;; step /= 4) {
            const double up = set(step);
            const double lp = eval_current();
            const double down = set(-step);
            const double lm = eval_current();
            set(0.0);
            const double fwd = (lp - l0) / up;
            const double bwd = (l0 - lm) / -down;
            numeric = (lp - lm) / (up - down);
            // Allowance for rounding in the loss itself, which dominates tiny gradients.
            const double noise = 1e-12 * (1.0 + std::abs(l0)) / step;
            if (std::abs(fwd - bwd) <= 1e-4 * std::max(std::abs(fwd), std::abs(bwd)) + noise) break;
            if (step / 4 < kMinStep) {
                ++result.unresolved;
                break;
            }
            if (step == h) ++result.kinks;
        }
        record(analytic, numeric, where);
    };

    for (const auto& [t, i] : picks) {
        float& p = tensors[t].values[i];
        const float orig = p;
        // Returns the perturbation actually applied after rounding to float.
        auto set = [&](double d) {
            p = static_cast<float>(orig + d);
            return static_cast<double>(p) - static_cast<double>(orig);
        };
        probe_at(set, tensors[t].name + "[" + std::to_string(i) + "]", g.grads.values[t][i]);
        ++result.params_checked;
    }

    for (std::size_t k = 0; k < input_samples && x.size() > 0; ++k) {
        const std::size_t i = probe.uniform_index(x.size());
        const double orig = x.data[i];
        auto set = [&](double d) {
            x.data[i] = orig + d;
            return x.data[i] - orig;
        };
        probe_at(set, "input[" + std::to_string(i) + "]", g.input_grad.data[i]);
        ++result.inputs_checked;
    }
    return result;
}

SmokeRun run_smoke(const fs::path& root, std::uint64_t iters, std::uint64_t seed) {
    const fs::path clean = root / "clean";
    fs::create_directories(clean);
    for (int i = 0; i < 4; ++i)
        save_image(smooth_image(64, 64, 3, derive_seed(seed, {100, static_cast<std::uint64_t>(i)})),
                   clean / ("face" + std::to_string(i) + ".png"));
    DegradationConfig dcfg;
    dcfg.seed = seed;
    SmokeRun run;
    run.manifest = generate_dataset(clean, root / "data", dcfg, 1);

    LossConfig loss;
    loss.extractor = make_feature_extractor({}, 20211, FeatureTap::pool3);

    TrainRun train;
    train.batch_size = 4;
    train.max_iters = iters;
    train.seed = seed;
    train.manifest = run.manifest;

    run.prior_dir = root / "prior";
    train.stage = Stage::prior;
    train.output_dir = run.prior_dir;
    TrainResult prior = train_prior_network(train, loss, kDefaultDropoutRate);
    run.prior = prior.checkpoint;
    run.prior_first_loss = prior.losses.front().loss.total;
    run.prior_last_loss = prior.losses.back().loss.total;

    run.restore_dir = root / "restore";
    train.stage = Stage::restoration;
    train.output_dir = run.restore_dir;
    TrainResult restore = train_restoration_network(train, run.prior, PriorSettings{}, loss);
    run.restoration = restore.checkpoint;
    run.restore_first_loss = restore.losses.front().loss.total;
    run.restore_last_loss = restore.losses.back().loss.total;
    return run;
}

}  // namespace atnet::test
