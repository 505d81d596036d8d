#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "embsteer/io.hpp"
#include "fixture_builder.hpp"
#include "support.hpp"

using namespace embsteer;
namespace fs = std::filesystem;
using embsteer::testing::temp_dir;

namespace {

const char* cli_path() { return std::getenv("EMBSTEER_CLI"); }

// Runs the CLI and returns its exit code; stdout/stderr go to files so tests
// can inspect them.
int run_cli(const std::string& args, const fs::path& dir) {
    const std::string cmd = std::string(cli_path()) + " " + args + " >" +
                            (dir / "stdout.txt").string() + " 2>" +
                            (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::vector<unsigned char> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("cli behaviours" * doctest::skip(cli_path() == nullptr)) {
    REQUIRE(cli_path() != nullptr);
    const auto dir = temp_dir("cli");
    embsteer::testing::write_mini_fixture(dir / "mini");
    const std::string mini = (dir / "mini/mini.ebpd").string();

    SUBCASE("direction on the 2-pair fixture reproduces the hand mean") {
        const int rc = run_cli("direction --dataset " + mini + " --out " +
                                   (dir / "mini.bdir").string(),
                               dir);
        CHECK(rc == 0);
        const DirectionFile file = read_direction(dir / "mini.bdir");
        CHECK(file.direction == Matrix::from_rows({{2, 0}, {0, 2}}));
        CHECK(file.source_pairs == 2);
        // Stats land on stdout as JSON.
        const auto stats = nlohmann::json::parse(read_text(dir / "stdout.txt"));
        CHECK(stats["residual_norms"].size() == 2);
    }

    SUBCASE("inject --no-adapt --gain 0 copies the input bit-exactly") {
        SplitMix64 rng(7);
        EmbeddingBatch batch;
        batch.d = 2;
        batch.l = 2;
        batch.embeddings = {quantize_f32(embsteer::testing::random_matrix(2, 2, rng))};
        batch.meta = {{"created", "2000-01-01T00:00:00Z"}};
        write_batch(dir / "in.ebin", batch);
        write_direction(dir / "d.bdir", Matrix::from_rows({{1, 1}, {1, 1}}), 1, {});

        const int rc = run_cli("inject --no-adapt --gain 0 --in " + (dir / "in.ebin").string() +
                                   " --direction " + (dir / "d.bdir").string() + " --out " +
                                   (dir / "out.ebin").string(),
                               dir);
        CHECK(rc == 0);
        CHECK(slurp(dir / "in.ebin") == slurp(dir / "out.ebin"));
    }

    SUBCASE("train --epochs 0 is a usage error") {
        const int rc = run_cli("train --dataset " + mini + " --direction x.bdir --out m.abcm" +
                                   " --epochs 0",
                               dir);
        CHECK(rc == 2);
        const auto err = nlohmann::json::parse(read_text(dir / "stderr.txt"));
        CHECK(err["category"] == "usage");
    }

    SUBCASE("a corrupt file maps to the format exit code") {
        {
            std::ofstream bad(dir / "bad.ebpd", std::ios::binary);
            bad << "XXXXnotarealfile";
        }
        const int rc = run_cli("direction --dataset " + (dir / "bad.ebpd").string() +
                                   " --out " + (dir / "x.bdir").string(),
                               dir);
        CHECK(rc == 3);
        const auto err = nlohmann::json::parse(read_text(dir / "stderr.txt"));
        CHECK(err["category"] == "format");
        CHECK(err["code"] == "bad_magic");
    }

    SUBCASE("a dimension mismatch maps to its own exit code") {
        run_cli("direction --dataset " + mini + " --out " + (dir / "mini.bdir").string(), dir);
        // 3x3 batch against the 2x2 direction.
        EmbeddingBatch batch;
        batch.d = 3;
        batch.l = 3;
        batch.embeddings = {Matrix(3, 3)};
        write_batch(dir / "wide.ebin", batch);
        const int rc = run_cli("inject --no-adapt --in " + (dir / "wide.ebin").string() +
                                   " --direction " + (dir / "mini.bdir").string() + " --out " +
                                   (dir / "w.out.ebin").string(),
                               dir);
        CHECK(rc == 4);
    }

    SUBCASE("a missing manifest maps to the provider exit code") {
        embsteer::testing::write_lines(dir / "n.txt", std::vector<std::string>{"a"});
        embsteer::testing::write_lines(dir / "b.txt", std::vector<std::string>{"b"});
        const int rc = run_cli("ingest --neutral " + (dir / "n.txt").string() + " --biased " +
                                   (dir / "b.txt").string() + " --manifest " +
                                   (dir / "missing.json").string() + " --out " +
                                   (dir / "x.ebpd").string(),
                               dir);
        CHECK(rc == 5);
    }

    SUBCASE("instruct writes to stdout by default") {
        const int rc = run_cli("instruct --bias \"positive mood\" --count 12", dir);
        CHECK(rc == 0);
        const std::string text = read_text(dir / "stdout.txt");
        CHECK(text.find("12") != std::string::npos);
        CHECK(text.find("positive mood") != std::string::npos);
    }

    SUBCASE("eval --transfer emits a source/target report pair") {
        embsteer::testing::write_toy_fixture(dir / "toy");
        const std::string toy = (dir / "toy/toy.ebpd").string();
        run_cli("direction --dataset " + toy + " --out " + (dir / "toy.bdir").string(), dir);
        run_cli("train --dataset " + toy + " --direction " + (dir / "toy.bdir").string() +
                    " --r 2 --epochs 2 --out " + (dir / "toy.abcm").string(),
                dir);
        const int rc = run_cli("eval --module " + (dir / "toy.abcm").string() +
                                   " --direction " + (dir / "toy.bdir").string() +
                                   " --dataset " + toy + " --transfer " + mini + " --out " +
                                   (dir / "transfer.json").string(),
                               dir);
        // Toy is 8x6, mini is 2x2: dimension mismatch must surface as exit 4.
        CHECK(rc == 4);

        const int rc2 = run_cli("eval --module " + (dir / "toy.abcm").string() +
                                    " --direction " + (dir / "toy.bdir").string() +
                                    " --dataset " + toy + " --transfer " + toy + " --out " +
                                    (dir / "transfer.json").string(),
                                dir);
        CHECK(rc2 == 0);
        const auto report = nlohmann::json::parse(read_text(dir / "transfer.json"));
        REQUIRE(report.contains("source"));
        REQUIRE(report.contains("target"));
        CHECK(report["source"]["module_digest"] == report["target"]["module_digest"]);
    }

    SUBCASE("direction --subsample trims the dataset deterministically") {
        embsteer::testing::write_toy_fixture(dir / "toy");
        const std::string toy = (dir / "toy/toy.ebpd").string();
        const std::string args = "direction --dataset " + toy + " --subsample 2 --seed 3 --out ";
        CHECK(run_cli(args + (dir / "sub1.bdir").string(), dir) == 0);
        const auto stats = nlohmann::json::parse(read_text(dir / "stdout.txt"));
        CHECK(stats["residual_norms"].size() == 2);
        CHECK(run_cli(args + (dir / "sub2.bdir").string(), dir) == 0);
        CHECK(slurp(dir / "sub1.bdir") == slurp(dir / "sub2.bdir"));
    }

    SUBCASE("instruct is deterministic and honours --out") {
        const std::string args = "instruct --bias \"negative emotion\" --count 200 --out ";
        CHECK(run_cli(args + (dir / "i1.txt").string(), dir) == 0);
        CHECK(run_cli(args + (dir / "i2.txt").string(), dir) == 0);
        const std::string text = read_text(dir / "i1.txt");
        CHECK(text == read_text(dir / "i2.txt"));
        CHECK(text.find("200") != std::string::npos);
        CHECK(text.find("adjectives") != std::string::npos);
    }

    SUBCASE("inspect dumps the header of anything") {
        const int rc = run_cli("inspect --in " + mini, dir);
        CHECK(rc == 0);
        const auto info = nlohmann::json::parse(read_text(dir / "stdout.txt"));
        CHECK(info["magic"] == "EBPD");
        CHECK(info["n"] == 2);
        CHECK(info["d"] == 2);
        CHECK(info["l"] == 2);
        CHECK(info["meta"]["bias"] == "negative");
    }

    SUBCASE("config file supplies defaults and flags win") {
        run_cli("direction --dataset " + mini + " --out " + (dir / "mini.bdir").string(), dir);
        {
            std::ofstream cfg(dir / "cfg.json");
            cfg << nlohmann::json{
                       {"train",
                        {{"dataset", mini},
                         {"direction", (dir / "mini.bdir").string()},
                         {"epochs", 3},
                         {"r", 1},
                         {"out", (dir / "cfg_module.abcm").string()}}}}
                       .dump();
        }
        const int rc = run_cli("train --config " + (dir / "cfg.json").string(), dir);
        CHECK(rc == 0);
        const CheckpointFile from_config = read_checkpoint(dir / "cfg_module.abcm");
        CHECK(from_config.meta["config"]["epochs"] == 3);

        // The explicit flag overrides the config value.
        const int rc2 = run_cli("train --config " + (dir / "cfg.json").string() +
                                    " --epochs 5 --out " + (dir / "cfg_module2.abcm").string(),
                                dir);
        CHECK(rc2 == 0);
        const CheckpointFile from_flag = read_checkpoint(dir / "cfg_module2.abcm");
        CHECK(from_flag.meta["config"]["epochs"] == 5);
    }

    SUBCASE("a diverging run maps to the divergence exit code") {
        // Offsets the freshly initialized module reproduces almost exactly:
        // the first Adam step overshoots the microscopic initial loss.
        SplitMix64 rng(41);
        const std::size_t d = 4, l = 6;
        const AdaptiveModule init = init_module(d, l, AdaptMode::both, 2, 5);
        const Matrix direction = quantize_f32(embsteer::testing::random_matrix(d, l, rng));
        PairDataset ds;
        ds.d = d;
        ds.l = l;
        for (int i = 0; i < 3; ++i) {
            const Matrix neutral =
                quantize_f32(embsteer::testing::random_matrix(d, l, rng));
            ds.pairs.push_back(
                {neutral, quantize_f32(neutral + adapt_direction(init, neutral, direction))});
        }
        write_dataset(dir / "near_fit.ebpd", ds);
        write_direction(dir / "near_fit.bdir", direction, 3, {});

        const int rc = run_cli("train --dataset " + (dir / "near_fit.ebpd").string() +
                                   " --direction " + (dir / "near_fit.bdir").string() +
                                   " --mode both --r 2 --seed 5 --out " +
                                   (dir / "never.abcm").string(),
                               dir);
        CHECK(rc == 6);
        const auto err = nlohmann::json::parse(read_text(dir / "stderr.txt"));
        CHECK(err["category"] == "divergence");
    }

    SUBCASE("train is idempotent for a fixed seed") {
        run_cli("direction --dataset " + mini + " --out " + (dir / "mini.bdir").string(), dir);
        const std::string train_args = "train --dataset " + mini + " --direction " +
                                       (dir / "mini.bdir").string() +
                                       " --epochs 4 --r 1 --seed 13 --out ";
        CHECK(run_cli(train_args + (dir / "m1.abcm").string(), dir) == 0);
        CHECK(run_cli(train_args + (dir / "m2.abcm").string(), dir) == 0);
        CHECK(slurp(dir / "m1.abcm") == slurp(dir / "m2.abcm"));
    }
}
