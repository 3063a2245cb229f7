#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "cotsfa/cli.hpp"
#include "cotsfa/config.hpp"
#include "cotsfa/errors.hpp"

using namespace cotsfa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

const std::vector<std::string> kSmall = {
    "--dataset.n_series", "2",  "--dataset.length",      "120", "--model.window",      "8",
    "--model.horizon",    "2",  "--model.latent_length", "4",   "--model.latent_dim",  "3",
    "--model.hidden",     "6",  "--train.epochs",        "1",   "--train.batch_size",  "16",
    "--train.views",      "2",  "--eval.seeds",          "0",   "--dataset.eval_stride", "4"};

Outcome run(std::vector<std::string> args, bool small = false) {
    if (small) args.insert(args.end(), kSmall.begin(), kSmall.end());
    std::vector<const char*> argv{"cotsfa"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("cotsfa_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

bool same_tree(const fs::path& a, const fs::path& b) {
    std::vector<std::string> names_a, names_b;
    for (const auto& e : fs::directory_iterator(a)) names_a.push_back(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(b)) names_b.push_back(e.path().filename().string());
    std::sort(names_a.begin(), names_a.end());
    std::sort(names_b.begin(), names_b.end());
    if (names_a != names_b) return false;
    for (const auto& n : names_a)
        if (slurp(a / n) != slurp(b / n)) return false;
    return true;
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("unknown keys and wrong types are rejected") {
        CHECK_THROWS_AS(config::merge({{"model", {{"widht", 3}}}}), ValidationError);
        CHECK_THROWS_AS(config::merge({{"modle", {{"window", 3}}}}), ValidationError);
        CHECK_THROWS_AS(config::merge({{"model", {{"window", "three"}}}}), ValidationError);
        CHECK_NOTHROW(config::merge({{"model", {{"window", 24}}}}));
    }

    TEST_CASE("typed view carries values and cross-field checks") {
        auto doc = config::merge({{"model", {{"window", 24}, {"latent_length", 12}}}, {"dataset", {{"channels", 3}}}});
        const auto cfg = config::from_document(doc);
        CHECK(cfg.model.window == 24);
        CHECK(cfg.model.channels == 3);
        CHECK(cfg.dataset.split.window == 24);
        CHECK(cfg.variants().size() == 2);
        CHECK(cfg.variants()[0].train.lambda_align == 0.0);
        CHECK(cfg.scenarios().size() == 3);
        config::set_value(doc, "model.latent_length", "30");
        CHECK_THROWS_AS(config::from_document(doc), ValidationError);
        config::set_value(doc, "model.latent_length", "8");
        config::set_value(doc, "eval.lambdas", "0.5,2");
        CHECK(config::from_document(doc).eval.lambdas == std::vector<double>{0.5, 2.0});
        CHECK_THROWS_AS(config::set_value(doc, "train.nope", "1"), ValidationError);
        CHECK_THROWS_AS(config::set_value(doc, "train.epochs", "many"), ValidationError);
    }

    TEST_CASE("defaults cover every key") {
        const auto keys = config::keys();
        CHECK(keys.size() > 40);
        for (const auto& k : keys) {
            const auto dot = k.key.find('.');
            REQUIRE(dot != std::string::npos);
            CHECK(config::defaults().at(k.key.substr(0, dot)).contains(k.key.substr(dot + 1)));
        }
        CHECK_NOTHROW(config::from_document(config::defaults()));
    }
}

TEST_SUITE("cli") {
    TEST_CASE("help on every subcommand lists every key with its default") {
        for (const char* sub : {"gen", "contaminate", "train", "eval", "report", "grid", "sweep"}) {
            const auto r = run({sub, "--help"});
            CHECK(r.code == 0);
            for (const auto& k : config::keys()) {
                INFO(sub << " " << k.key);
                CHECK(r.out.find("--" + k.key) != std::string::npos);
            }
            CHECK(r.out.find("[default: 20]") != std::string::npos);
        }
    }

    TEST_CASE("validation failures exit 1 before touching the disk") {
        TempDir tmp;
        const std::string out = tmp / "never";
        const auto r = run({"gen", "-o", out, "--dataset.n_series", "0"});
        CHECK(r.code == 1);
        CHECK_FALSE(fs::exists(out));
        CHECK(run({"gen", "-o", out, "--bogus.key", "1"}).code == 1);
        CHECK(run({"frobnicate"}).code == 1);

        std::ofstream(tmp / "bad.json") << R"({"train": {"epoch": 3}})";
        CHECK(run({"train", "-c", tmp / "bad.json", "-o", tmp / "t"}).code == 1);
    }

    TEST_CASE("gen is reproducible and regenerates from its manifest") {
        TempDir tmp;
        REQUIRE(run({"gen", "-o", tmp / "a"}, true).code == 0);
        REQUIRE(run({"gen", "-o", tmp / "b"}, true).code == 0);
        CHECK(fs::exists(tmp / "a/manifest.json"));
        CHECK(fs::exists(tmp / "a/series_001.csv"));
        CHECK(same_tree(tmp / "a", tmp / "b"));
        REQUIRE(run({"gen", "-o", tmp / "c", "--manifest", tmp / "a/manifest.json"}).code == 0);
        CHECK(same_tree(tmp / "a", tmp / "c"));
    }

    TEST_CASE("contaminate: zero fraction copies, replay reproduces") {
        TempDir tmp;
        REQUIRE(run({"gen", "-o", tmp / "data"}, true).code == 0);
        REQUIRE(run({"contaminate", "-d", tmp / "data", "-o", tmp / "zero", "--augment.regime", "pointwise",
                     "--augment.fraction", "0"},
                    true)
                    .code == 0);
        for (const char* f : {"series_000.csv", "series_001.csv"})
            CHECK(slurp(fs::path(tmp / "data") / f) == slurp(fs::path(tmp / "zero") / f));

        REQUIRE(run({"contaminate", "-d", tmp / "data", "-o", tmp / "dirty", "--augment.regime", "pointwise",
                     "--augment.pointwise_kind", "missing", "--augment.pointwise_ratio", "0.3", "--augment.fraction",
                     "0.5"},
                    true)
                    .code == 0);
        const std::string manifest = slurp(fs::path(tmp / "dirty") / "contamination.json");
        CHECK(manifest.find("\"steps\"") != std::string::npos);
        CHECK(slurp(fs::path(tmp / "data") / "series_000.csv") != slurp(fs::path(tmp / "dirty") / "series_000.csv"));
        REQUIRE(run({"contaminate", "-d", tmp / "data", "-o", tmp / "again", "--replay", tmp / "dirty/contamination.json"},
                    true)
                    .code == 0);
        CHECK(same_tree(tmp / "dirty", tmp / "again"));
        CHECK(run({"contaminate", "-d", tmp / "data", "-o", tmp / "x", "--augment.regime", "weird"}, true).code == 1);
    }

    TEST_CASE("train twice gives identical bytes, eval writes reports") {
        TempDir tmp;
        REQUIRE(run({"train", "-o", tmp / "co1"}, true).code == 0);
        REQUIRE(run({"train", "-o", tmp / "co2"}, true).code == 0);
        CHECK(slurp(fs::path(tmp / "co1") / "checkpoint.bin") == slurp(fs::path(tmp / "co2") / "checkpoint.bin"));
        CHECK(slurp(fs::path(tmp / "co1") / "train_log.csv") == slurp(fs::path(tmp / "co2") / "train_log.csv"));
        REQUIRE(run({"train", "-o", tmp / "base", "--train.lambda_align", "0"}, true).code == 0);

        auto r = run({"eval", "--checkpoint", tmp / "co1/checkpoint.bin", "-o", tmp / "one", "--eval.conditions", "clean"},
                     true);
        REQUIRE(r.code == 0);
        const std::string csv = slurp(fs::path(tmp / "one") / "report.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);

        r = run({"eval", "--checkpoint", "base=" + (tmp / "base/checkpoint.bin"), "--checkpoint",
                 "co=" + (tmp / "co1/checkpoint.bin"), "-o", tmp / "pair"},
                true);
        REQUIRE(r.code == 0);
        const std::string md = slurp(fs::path(tmp / "pair") / "report.md");
        CHECK(md.find("Δ") != std::string::npos);
        CHECK(md.find("input_output") != std::string::npos);
        CHECK(fs::exists(fs::path(tmp / "pair") / "report.json"));

        REQUIRE(run({"report", "--csv", tmp / "pair/report.csv", "-o", tmp / "re"}).code == 0);
        CHECK(fs::exists(fs::path(tmp / "re") / "report.md"));
    }

    TEST_CASE("checkpoint errors name the problem") {
        TempDir tmp;
        const std::string missing = tmp / "nowhere/checkpoint.bin";
        auto r = run({"eval", "--checkpoint", missing, "-o", tmp / "e"}, true);
        CHECK(r.code == 2);
        CHECK(r.err.find(missing) != std::string::npos);

        std::ofstream(tmp / "junk.bin") << "garbage bytes";
        r = run({"eval", "--checkpoint", tmp / "junk.bin", "-o", tmp / "e"}, true);
        CHECK(r.code == 1);
        CHECK(r.err.find("magic") != std::string::npos);
    }
}
