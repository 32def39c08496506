#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "atnet/checkpoint.hpp"
#include "atnet/commands.hpp"
#include "atnet/config.hpp"
#include "atnet/network.hpp"
#include "support.hpp"

using namespace atnet;
using namespace atnet::test;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::string& cmd, const std::vector<std::pair<std::string, std::string>>& overrides,
        const fs::path& config = {}) {
    std::ostringstream out, err;
    const RunConfig cfg = resolve_config(config, overrides);
    const int code = run_command(cmd, cfg, out, err);
    return {code, out.str(), err.str()};
}

int cli(const std::string& args) {
    const std::string cmd = std::string(ATNET_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_clean(const fs::path& dir, int n) {
    fs::create_directories(dir);
    for (int i = 0; i < n; ++i) save_image(smooth_image(16, 20, 3, 60 + i), dir / ("c" + std::to_string(i) + ".png"));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config defaults and precedence") {
    const RunConfig d = resolve_config({}, {});
    CHECK(d.get_int("S") == 10);
    CHECK(d.get_double("lambda_p") == 0.002);
    CHECK(d.get_double("lr") == 2e-4);
    CHECK(d.get_int("batch") == 10);
    CHECK(d.get_u64("iters_prior") == 200000);
    CHECK(d.get_u64("iters_restore") == 1500000);
    CHECK(d.get_double("dropout_rate") == 0.1);

    TempDir dir("cfg");
    std::ofstream(dir / "run.cfg") << "# comment\n\nS = 4\nlambda_p=0.01\nupsample=nearest\n";
    const RunConfig f = resolve_config(dir / "run.cfg", {});
    CHECK(f.get_int("S") == 4);
    CHECK(f.get_double("lambda_p") == 0.01);
    CHECK(f.get_string("upsample") == "nearest");
    CHECK(resolve_config(dir / "run.cfg", {{"S", "6"}}).get_int("S") == 6);

    CHECK_THROWS_WITH_AS(resolve_config({}, {{"foo", "1"}}), doctest::Contains("foo"), UsageError);
    std::ofstream(dir / "bad.cfg") << "foo=3\n";
    CHECK_THROWS_WITH_AS(resolve_config(dir / "bad.cfg", {}), doctest::Contains("foo"), UsageError);
    CHECK_THROWS_AS(resolve_config({}, {{"S", "four"}}), UsageError);
    CHECK_THROWS_AS(resolve_config({}, {{"seed", "-1"}}), UsageError);
    CHECK_THROWS_AS(resolve_config({}, {{"warp_first", "maybe"}}), UsageError);
    CHECK_THROWS_AS(resolve_config({}, {{"lr", "nan"}}), UsageError);
    std::ofstream(dir / "noeq.cfg") << "S 4\n";
    CHECK_THROWS_AS(resolve_config(dir / "noeq.cfg", {}), UsageError);
    CHECK_THROWS_AS(resolve_config(dir / "missing.cfg", {}), UsageError);
}

TEST_CASE("serialized config replays exactly") {
    TempDir dir("cfg");
    const RunConfig a = resolve_config({}, {{"lr", "0.1"}, {"seed", "99"}, {"input", "some dir/x"}});
    a.write(dir / "r.txt");
    const RunConfig b = resolve_config(dir / "r.txt", {});
    CHECK(b == resolve_config(dir / "r.txt", {}));
    CHECK(b.serialize() == a.serialize());
    CHECK(b.get_double("lr") == 0.1);
    CHECK(b.get_string("input") == "some dir/x");
}

TEST_CASE("synth command is reproducible from its resolved config") {
    TempDir dir("cli");
    write_clean(dir / "clean", 2);
    const auto first = run("synth", {{"input", (dir / "clean").string()}, {"output", (dir / "a").string()},
                                     {"seed", "5"}, {"pairs_per_image", "2"}});
    REQUIRE(first.code == 0);
    CHECK(fs::exists(dir / "a" / kResolvedConfigName));
    const auto again = run("synth", {{"output", (dir / "b").string()}}, dir / "a" / kResolvedConfigName);
    REQUIRE(again.code == 0);
    auto a = snapshot_tree(dir / "a"), b = snapshot_tree(dir / "b");
    REQUIRE(a.size() == b.size());
    // Everything but the echoed output path is identical.
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        if (a[i].first != kResolvedConfigName) CHECK(a[i].second == b[i].second);
    }
}

TEST_CASE("estimate and restore write their outputs") {
    TempDir dir("cli");
    write_clean(dir / "in", 2);
    Checkpoint prior{build_atnet1_spec(), init_parameters(build_atnet1_spec(), 1), {}, 0, {}};
    Checkpoint restorer{build_atnet_spec(3), init_parameters(build_atnet_spec(3), 2), {}, 0, {}};
    save_checkpoint(prior, dir / "p.bin");
    save_checkpoint(restorer, dir / "r.bin");

    const auto one = run("restore", {{"input", (dir / "in" / "c0.png").string()},
                                     {"atnet1_ckpt", (dir / "p.bin").string()},
                                     {"atnet_ckpt", (dir / "r.bin").string()},
                                     {"output", (dir / "out").string()},
                                     {"S", "3"},
                                     {"save_prior", "true"}});
    CHECK(one.code == 0);
    CHECK(load_image(dir / "out" / "c0_restored.png").same_shape(load_image(dir / "in" / "c0.png")));
    CHECK(fs::exists(dir / "out" / "c0_prior.png"));
    CHECK(fs::exists(dir / "out" / kResolvedConfigName));

    const auto est = run("estimate", {{"input", (dir / "in").string()},
                                      {"atnet1_ckpt", (dir / "p.bin").string()},
                                      {"output", (dir / "est").string()},
                                      {"S", "3"}});
    CHECK(est.code == 0);
    CHECK(fs::exists(dir / "est" / "c1_prior.bin"));
    CHECK(fs::exists(dir / "est" / "c1_prior.png"));

    const auto wrong = run("restore", {{"input", (dir / "in").string()},
                                       {"atnet1_ckpt", (dir / "p.bin").string()},
                                       {"atnet_ckpt", (dir / "p.bin").string()},
                                       {"output", (dir / "o2").string()}});
    CHECK(wrong.code == kExitFailure);
}

TEST_CASE("errors and exit codes") {
    TempDir dir("cli");
    const auto missing = run("eval", {{"manifest", (dir / "m.jsonl").string()}});
    CHECK(missing.code == kExitFailure);
    CHECK(missing.err.find("m.jsonl") != std::string::npos);

    std::ofstream(dir / "m.jsonl") << "";
    const auto no_ckpt = run("eval", {{"manifest", (dir / "m.jsonl").string()},
                                      {"atnet1_ckpt", (dir / "prior.bin").string()},
                                      {"atnet_ckpt", (dir / "net.bin").string()},
                                      {"output", (dir / "e").string()}});
    CHECK(no_ckpt.code != 0);
    CHECK(no_ckpt.err.find("prior.bin") != std::string::npos);

    const auto unset = run("eval", {{"manifest", (dir / "m.jsonl").string()}});
    CHECK(unset.code == kExitUsage);
    CHECK(unset.err.find("atnet1_ckpt") != std::string::npos);

    std::ostringstream out, err;
    CHECK(run_command("fly", RunConfig{}, out, err) == kExitUsage);
    CHECK(run("train-prior", {{"batch", "0"}, {"output", (dir / "t").string()}}).code == kExitUsage);
}

TEST_CASE("binary exit codes") {
    TempDir dir("bin");
    CHECK(cli("--help") == 0);
    CHECK(cli("") == kExitUsage);
    CHECK(cli("fly") == kExitUsage);
    CHECK(cli("synth --bogus 1") == kExitUsage);
    CHECK(cli("synth --set foo=1") == kExitUsage);
    CHECK(cli("synth --seed abc") == kExitUsage);
    CHECK(cli("eval --manifest " + (dir / "none.jsonl").string()) == kExitFailure);
    write_clean(dir / "clean", 1);
    CHECK(cli("synth --input " + (dir / "clean").string() + " --output " + (dir / "out").string() +
              " --seed 3 --threads 1") == 0);
    const RunConfig echoed = resolve_config(dir / "out" / kResolvedConfigName, {});
    CHECK(echoed.get_u64("seed") == 3);
    CHECK(echoed.get_int("threads") == 1);
}

}  // TEST_SUITE
