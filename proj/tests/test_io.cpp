#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "embsteer/errors.hpp"
#include "embsteer/io.hpp"
#include "fixture_builder.hpp"
#include "support.hpp"

using namespace embsteer;
namespace fs = std::filesystem;
using embsteer::testing::random_matrix;
using embsteer::testing::temp_dir;

namespace {

std::vector<unsigned char> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

PairDataset small_dataset() {
    PairDataset ds;
    ds.d = 2;
    ds.l = 3;
    ds.pairs.push_back({Matrix::from_rows({{1, 2, 3}, {4, 5, 6}}),
                        Matrix::from_rows({{2, 3, 4}, {5, 6, 7}})});
    ds.meta = {{"bias", "test"}, {"encoder", "stub"}, {"created", "2000-01-01T00:00:00Z"}};
    return ds;
}

FormatCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const FormatError& e) {
        return e.code();
    }
    FAIL("expected a FormatError");
    return FormatCode::bad_magic;
}

}  // namespace

TEST_CASE("dataset write/read round trip is bit exact") {
    const auto dir = temp_dir("io_dataset");
    const PairDataset ds = small_dataset();
    write_dataset(dir / "a.ebpd", ds);
    const PairDataset loaded = read_dataset(dir / "a.ebpd");
    CHECK(loaded.d == ds.d);
    CHECK(loaded.l == ds.l);
    CHECK(loaded.pairs[0].neutral == ds.pairs[0].neutral);
    CHECK(loaded.pairs[0].biased == ds.pairs[0].biased);
    CHECK(loaded.meta["bias"] == "test");

    write_dataset(dir / "b.ebpd", loaded);
    CHECK(slurp(dir / "a.ebpd") == slurp(dir / "b.ebpd"));
}

TEST_CASE("each corruption gets its own error code") {
    const auto dir = temp_dir("io_errors");
    const fs::path path = dir / "x.ebpd";
    write_dataset(path, small_dataset());
    const auto original = slurp(path);

    SUBCASE("bad magic") {
        auto bytes = original;
        bytes[0] = 'X';
        bytes[1] = 'X';
        bytes[2] = 'X';
        bytes[3] = 'X';
        spit(path, bytes);
        CHECK(code_of([&] { read_dataset(path); }) == FormatCode::bad_magic);
    }
    SUBCASE("bad version") {
        auto bytes = original;
        bytes[4] = 9;
        spit(path, bytes);
        CHECK(code_of([&] { read_dataset(path); }) == FormatCode::bad_version);
    }
    SUBCASE("unsupported dtype") {
        auto bytes = original;
        bytes[18] = 1;
        spit(path, bytes);
        CHECK(code_of([&] { read_dataset(path); }) == FormatCode::unsupported_dtype);
    }
    SUBCASE("header claims more pairs than the payload holds") {
        auto bytes = original;
        bytes[6] = 2;  // n: 1 -> 2
        spit(path, bytes);
        CHECK(code_of([&] { read_dataset(path); }) == FormatCode::truncated);
    }
    SUBCASE("zero pairs") {
        auto bytes = original;
        bytes[6] = 0;
        spit(path, bytes);
        CHECK(code_of([&] { read_dataset(path); }) == FormatCode::dim_mismatch);
    }
    SUBCASE("flipped payload byte fails the digest") {
        auto bytes = original;
        bytes.back() ^= 0x01;
        spit(path, bytes);
        CHECK(code_of([&] { read_dataset(path); }) == FormatCode::digest_mismatch);
    }
    SUBCASE("truncated tail") {
        auto bytes = original;
        bytes.resize(bytes.size() - 5);
        spit(path, bytes);
        CHECK(code_of([&] { read_dataset(path); }) == FormatCode::truncated);
    }
    SUBCASE("oversized header dims are rejected before allocation") {
        auto bytes = original;
        for (int i = 6; i < 18; ++i) bytes[i] = 0xFF;  // n = d = l = 2^32 - 1
        spit(path, bytes);
        CHECK(code_of([&] { read_dataset(path); }) == FormatCode::bad_header);
    }
    SUBCASE("wrong container magic for the reader") {
        CHECK(code_of([&] { read_direction(path); }) == FormatCode::bad_magic);
    }
}

TEST_CASE("direction file round trip") {
    const auto dir = temp_dir("io_direction");
    SplitMix64 rng(5);
    const Matrix direction = quantize_f32(random_matrix(3, 4, rng));
    write_direction(dir / "d.bdir", direction, 7, {{"note", "test"}});
    const DirectionFile loaded = read_direction(dir / "d.bdir");
    CHECK(loaded.direction == direction);
    CHECK(loaded.source_pairs == 7);
    CHECK(loaded.meta["note"] == "test");

    write_direction(dir / "d2.bdir", loaded.direction, loaded.source_pairs, loaded.meta);
    CHECK(slurp(dir / "d.bdir") == slurp(dir / "d2.bdir"));
}

TEST_CASE("embedding batch round trip and validation") {
    const auto dir = temp_dir("io_batch");
    SplitMix64 rng(6);
    EmbeddingBatch batch;
    batch.d = 2;
    batch.l = 2;
    batch.embeddings = {quantize_f32(random_matrix(2, 2, rng)),
                        quantize_f32(random_matrix(2, 2, rng))};
    write_batch(dir / "b.ebin", batch);
    const EmbeddingBatch loaded = read_batch(dir / "b.ebin");
    CHECK(loaded.size() == 2);
    CHECK(loaded.embeddings[0] == batch.embeddings[0]);
    CHECK(loaded.embeddings[1] == batch.embeddings[1]);

    write_batch(dir / "b2.ebin", loaded);
    CHECK(slurp(dir / "b.ebin") == slurp(dir / "b2.ebin"));

    EmbeddingBatch ragged = batch;
    ragged.embeddings.push_back(Matrix(3, 2));
    CHECK_THROWS_AS(write_batch(dir / "r.ebin", ragged), DimensionError);
}

TEST_CASE("checkpoint round trip preserves the module bit for bit") {
    const auto dir = temp_dir("io_checkpoint");
    for (AdaptMode mode : {AdaptMode::token, AdaptMode::embedding, AdaptMode::both}) {
        CAPTURE(to_string(mode));
        AdaptiveModule module = init_module(5, 4, mode, 2, 99);
        // Give the excite layers some structure; f32-representable values.
        for_each_tensor(module, [&](std::span<double> t) {
            for (double& v : t) v = static_cast<double>(static_cast<float>(v));
        });
        const fs::path path = dir / (std::string("m_") + to_string(mode) + ".abcm");
        write_checkpoint(path, module, {{"note", "unit"}});
        const CheckpointFile loaded = read_checkpoint(path);
        CHECK(loaded.module.mode == module.mode);
        CHECK(loaded.module.d == module.d);
        CHECK(loaded.module.l == module.l);
        CHECK(loaded.module.r == module.r);
        CHECK(loaded.meta["parameter_count"] == module.parameter_count());

        std::vector<double> a, b;
        for_each_tensor(module, [&](std::span<const double> t) {
            a.insert(a.end(), t.begin(), t.end());
        });
        for_each_tensor(loaded.module, [&](std::span<const double> t) {
            b.insert(b.end(), t.begin(), t.end());
        });
        CHECK(a == b);

        const fs::path path2 = dir / (std::string("m2_") + to_string(mode) + ".abcm");
        write_checkpoint(path2, loaded.module, loaded.meta);
        CHECK(slurp(path) == slurp(path2));
    }
}

TEST_CASE("checkpoint header sanity is enforced") {
    const auto dir = temp_dir("io_ckpt_errors");
    const fs::path path = dir / "m.abcm";
    write_checkpoint(path, init_module(4, 4, AdaptMode::both, 2, 1), {});
    const auto original = slurp(path);

    SUBCASE("mode byte out of range") {
        auto bytes = original;
        bytes[19] = 9;
        spit(path, bytes);
        CHECK(code_of([&] { read_checkpoint(path); }) == FormatCode::bad_header);
    }
    SUBCASE("ratio out of range") {
        auto bytes = original;
        bytes[20] = 200;
        spit(path, bytes);
        CHECK(code_of([&] { read_checkpoint(path); }) == FormatCode::bad_header);
    }
}

TEST_CASE("inspect reports header fields without touching the payload") {
    const auto dir = temp_dir("io_inspect");
    write_dataset(dir / "x.ebpd", small_dataset());
    const FileInfo info = inspect_file(dir / "x.ebpd");
    CHECK(info.magic == "EBPD");
    CHECK(info.version == kFormatVersion);
    CHECK(info.n == 1);
    CHECK(info.d == 2);
    CHECK(info.l == 3);
    CHECK(info.dtype == 0);
    CHECK(info.payload_bytes == 2 * 2 * 3 * 4);
    CHECK(info.meta["bias"] == "test");

    AdaptiveModule module = init_module(4, 4, AdaptMode::token, 2, 3);
    write_checkpoint(dir / "m.abcm", module, {});
    const FileInfo ckpt = inspect_file(dir / "m.abcm");
    CHECK(ckpt.magic == "ABCM");
    CHECK(ckpt.mode.value() == 0);
    CHECK(ckpt.r.value() == 2);
    CHECK(ckpt.n == 4);
}

TEST_CASE("subsample is a seeded deterministic choice") {
    SplitMix64 rng(17);
    PairDataset ds = embsteer::testing::random_dataset(8, 2, 2, rng);
    ds.meta["neutral_prompts"] = {"p0", "p1", "p2", "p3", "p4", "p5", "p6", "p7"};
    ds.meta["biased_prompts"] = {"q0", "q1", "q2", "q3", "q4", "q5", "q6", "q7"};

    SUBCASE("k equal to N permutes the pairs") {
        const PairDataset all = subsample(ds, 8, 42);
        CHECK(all.size() == 8);
        // Same multiset of pairs.
        std::vector<double> before, after;
        for (const auto& p : ds.pairs) before.push_back(p.neutral(0, 0));
        for (const auto& p : all.pairs) after.push_back(p.neutral(0, 0));
        std::sort(before.begin(), before.end());
        std::sort(after.begin(), after.end());
        CHECK(before == after);
    }
    SUBCASE("deterministic per seed") {
        const PairDataset one = subsample(ds, 1, 5);
        const PairDataset two = subsample(ds, 1, 5);
        CHECK(one.pairs[0].neutral == two.pairs[0].neutral);
        const PairDataset other = subsample(ds, 1, 6);
        // Different seed picks a different pair for this fixture.
        CHECK(one.pairs[0].neutral != other.pairs[0].neutral);
    }
    SUBCASE("records provenance and keeps prompts aligned") {
        const PairDataset half = subsample(ds, 4, 9);
        CHECK(half.size() == 4);
        CHECK(half.meta["subsample"]["k"] == 4);
        CHECK(half.meta["subsample"]["parent_digest"] == digest_hex(payload_digest(ds)));
        for (std::size_t i = 0; i < 4; ++i) {
            const std::string prompt = half.meta["neutral_prompts"][i];
            const std::size_t original_index = std::stoul(prompt.substr(1));
            CHECK(half.pairs[i].neutral == ds.pairs[original_index].neutral);
        }
    }
    SUBCASE("k out of range") {
        CHECK_THROWS_AS(subsample(ds, 0, 1), UsageError);
        CHECK_THROWS_AS(subsample(ds, 9, 1), UsageError);
    }
}

TEST_CASE("committed fixtures match their generator") {
    const char* fixtures_env = std::getenv("EMBSTEER_FIXTURES");
    if (!fixtures_env) {
        MESSAGE("EMBSTEER_FIXTURES not set; skipping fixture drift check");
        return;
    }
    const fs::path committed = fixtures_env;
    const auto regenerated = temp_dir("fixtures_regen");
    embsteer::testing::write_toy_fixture(regenerated / "toy");
    embsteer::testing::write_mini_fixture(regenerated / "mini");

    for (const char* rel : {"toy/toy.ebpd", "toy/manifest.json", "toy/neutral.txt",
                            "toy/biased.txt", "toy/emb/n0.ebin", "toy/emb/b3.ebin",
                            "mini/mini.ebpd"}) {
        CAPTURE(rel);
        REQUIRE(fs::exists(committed / rel));
        CHECK(slurp(committed / rel) == slurp(regenerated / rel));
    }
}
