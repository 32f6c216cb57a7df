#include <filesystem>
#include <vector>

#include "doctest.h"
#include "protoseg/binio.hpp"
#include "protoseg/rng.hpp"
#include "protoseg/support.hpp"

using namespace protoseg;

namespace {

// Deterministic stand-in generator: image and attention derive from the seed.
struct StubGenerator : GeneratorAdapter {
    int calls = 0;
    std::string name() const override { return "stub"; }
    std::string config_fingerprint() const override { return "stub-v1"; }
    GeneratedSample generate(const std::string& prompt, std::uint64_t seed) override {
        ++calls;
        GeneratedSample s;
        s.image = Image(8, 8);
        SplitMix64 rng(hash_combine(seed, fnv1a64(prompt)));
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                std::uint8_t v = static_cast<std::uint8_t>(rng.next_below(256));
                s.image.set(x, y, {v, v, v});
            }
        FloatGrid full(8, 8, 0.0f);
        full.at(seed % 8, 0) = 1.0f;
        FloatGrid half(4, 4, 0.5f);
        s.attention = {full, half};
        return s;
    }
};

Category stub_category() { return {"red-disk", "red disk", Tag::Thing, 41}; }

}  // namespace

TEST_CASE("aggregate_attribution fuses multi-resolution maps to [0,1]") {
    FloatGrid a(2, 2);
    a.at(0, 0) = 1.0f;  // peak at top-left
    FloatGrid b(4, 4, 0.25f);
    FloatGrid fused = aggregate_attribution({a, b}, 4, 4);
    CHECK_EQ(fused.width, 4);
    CHECK_EQ(fused.height, 4);
    CHECK_EQ(fused.at(0, 0), doctest::Approx(1.0));  // max location normalizes to 1
    float mn = 1e9f;
    float mx = -1e9f;
    for (float v : fused.values) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    CHECK_EQ(mn, doctest::Approx(0.0));
    CHECK_EQ(mx, doctest::Approx(1.0));
}

TEST_CASE("constant attribution sums normalize to all zeros") {
    FloatGrid flat(3, 3, 0.7f);
    FloatGrid fused = aggregate_attribution({flat}, 3, 3);
    for (float v : fused.values) CHECK_EQ(v, 0.0f);
    CHECK_THROWS(aggregate_attribution({}, 3, 3));
}

TEST_CASE("sample seeds are deterministic and distinct") {
    CHECK_EQ(support_sample_seed(41, 0), support_sample_seed(41, 0));
    CHECK_NE(support_sample_seed(41, 0), support_sample_seed(41, 1));
    CHECK_NE(support_sample_seed(41, 0), support_sample_seed(42, 0));
}

TEST_CASE("sample_support_set draws n deterministic samples") {
    StubGenerator gen;
    SupportSet set = sample_support_set(gen, stub_category(), 3);
    CHECK_EQ(set.category_id, "red-disk");
    CHECK_EQ(set.prompt, "A good photo of a red disk");
    CHECK_EQ(set.seed, 41u);
    CHECK_EQ(set.adapter_fingerprint, "stub-v1");
    REQUIRE_EQ(set.samples.size(), 3u);
    for (const SupportSample& s : set.samples) {
        CHECK_EQ(s.image.width, 8);
        CHECK_EQ(s.attribution.width, 8);   // fused at image resolution
        CHECK_EQ(s.attribution.height, 8);
    }
    StubGenerator gen2;
    SupportSet again = sample_support_set(gen2, stub_category(), 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(again.samples[i].image.pixels == set.samples[i].image.pixels);
        CHECK(again.samples[i].attribution.values == set.samples[i].attribution.values);
        CHECK_EQ(again.samples[i].seed, set.samples[i].seed);
    }
}

TEST_CASE("cache key encodes identity, basename is zero-padded") {
    std::string key = support_cache_key("red-disk", 41, 3, "stub-v1");
    CHECK_EQ(key, support_cache_key("red-disk", 41, 3, "stub-v1"));
    CHECK_NE(key, support_cache_key("red-disk", 41, 4, "stub-v1"));
    CHECK_NE(key, support_cache_key("red-disk", 42, 3, "stub-v1"));
    CHECK_NE(key, support_cache_key("red-disk", 41, 3, "stub-v2"));
    CHECK_EQ(key.rfind("red-disk-", 0), 0u);
    CHECK_EQ(support_sample_basename(7), "sample_0007");
    CHECK_EQ(support_sample_basename(0), "sample_0000");
}

TEST_CASE("support cache round-trips and detects corruption") {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "protoseg-support-test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    StubGenerator gen;
    SupportSet set = sample_support_set(gen, stub_category(), 2);
    save_support_set(set, dir);

    auto loaded = load_support_set(dir, "red-disk", 41, 2, "stub-v1");
    REQUIRE(loaded.has_value());
    CHECK_EQ(loaded->prompt, set.prompt);
    REQUIRE_EQ(loaded->samples.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(loaded->samples[i].image.pixels == set.samples[i].image.pixels);
        CHECK(loaded->samples[i].attribution.values == set.samples[i].attribution.values);
        CHECK_EQ(loaded->samples[i].seed, set.samples[i].seed);
    }

    // Different identity -> miss.
    CHECK_FALSE(load_support_set(dir, "red-disk", 41, 3, "stub-v1").has_value());
    CHECK_FALSE(load_support_set(dir, "red-disk", 41, 2, "other").has_value());

    // Corrupt one byte of the attribution payload -> checksum rejects.
    const auto key_dir = dir / support_cache_key("red-disk", 41, 2, "stub-v1");
    const auto attr_path = key_dir / "sample_0001.attr.grid";
    REQUIRE(std::filesystem::exists(attr_path));
    auto bytes = read_file_bytes(attr_path);
    bytes[bytes.size() - 2] ^= 0xFF;
    write_file_bytes(attr_path, bytes);
    CHECK_FALSE(load_support_set(dir, "red-disk", 41, 2, "stub-v1").has_value());
    std::filesystem::remove_all(dir);
}

TEST_CASE("cached sampling generates once, then serves from disk") {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "protoseg-support-cache-test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    StubGenerator gen;
    SupportSet first = sample_support_set_cached(gen, stub_category(), 2, dir);
    CHECK_EQ(gen.calls, 2);
    SupportSet second = sample_support_set_cached(gen, stub_category(), 2, dir);
    CHECK_EQ(gen.calls, 2);  // untouched: served from cache
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(second.samples[i].image.pixels == first.samples[i].image.pixels);
    std::filesystem::remove_all(dir);
}

TEST_CASE("region masks persist next to the support set") {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "protoseg-support-mask-test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    StubGenerator gen;
    SupportSet set = sample_support_set(gen, stub_category(), 2);
    save_support_set(set, dir);

    std::vector<FgBgMasks> masks;
    for (int i = 0; i < 2; ++i) {
        FgBgMasks m;
        m.fg = BinaryMask(8, 8);
        m.bg = BinaryMask(8, 8);
        m.fg.at(i, 0) = true;
        m.bg.at(7 - i, 7) = true;
        m.fg_index = 0;
        m.bg_index = 1;
        m.provenance = "scripted";
        masks.push_back(std::move(m));
    }
    save_support_masks(dir, set, masks);

    for (int i = 0; i < 2; ++i) {
        auto m = load_support_mask(dir, "red-disk", 41, 2, "stub-v1", i);
        REQUIRE(m.has_value());
        CHECK(m->fg.at(i, 0));
        CHECK_EQ(m->fg.count_on(), 1);
        CHECK(m->bg.at(7 - i, 7));
        CHECK_EQ(m->provenance, "scripted");
    }
    CHECK_FALSE(load_support_mask(dir, "red-disk", 41, 2, "stub-v1", 2).has_value());
    CHECK_FALSE(load_support_mask(dir, "red-disk", 99, 2, "stub-v1", 0).has_value());
    std::filesystem::remove_all(dir);
}
