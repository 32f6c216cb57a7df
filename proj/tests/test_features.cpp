#include <cmath>
#include <filesystem>
#include <map>
#include <vector>

#include "doctest.h"
#include "protoseg/binio.hpp"
#include "protoseg/common.hpp"
#include "protoseg/features.hpp"

using namespace protoseg;

namespace {

FeatureMap tiny_map() {
    FeatureMap m(2, 2, 2);  // 2x2 cells, dim 2
    float values[2][2][2] = {{{1, 0}, {0, 1}}, {{2, 2}, {4, 0}}};
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            for (int d = 0; d < 2; ++d) m.at(x, y)[d] = values[y][x][d];
    m.space_id = "test-space";
    return m;
}

}  // namespace

TEST_CASE("masked_mean averages exactly the masked cells") {
    FeatureMap m = tiny_map();
    BinaryMask mask(2, 2);  // mask already at feature resolution
    mask.at(0, 0) = true;
    mask.at(1, 1) = true;
    auto mm = masked_mean(m, mask);
    REQUIRE(mm.has_value());
    CHECK_EQ(mm->pixel_count, 2);
    CHECK_EQ(mm->mean[0], doctest::Approx(2.5));  // (1 + 4) / 2
    CHECK_EQ(mm->mean[1], doctest::Approx(0.0));  // (0 + 0) / 2
}

TEST_CASE("masked_mean with an all-on mask is the global mean") {
    FeatureMap m = tiny_map();
    BinaryMask mask(2, 2, true);
    auto mm = masked_mean(m, mask);
    REQUIRE(mm.has_value());
    CHECK_EQ(mm->pixel_count, 4);
    CHECK_EQ(mm->mean[0], doctest::Approx((1 + 0 + 2 + 4) / 4.0));
    CHECK_EQ(mm->mean[1], doctest::Approx((0 + 1 + 2 + 0) / 4.0));
}

TEST_CASE("masked_mean of a single cell returns that cell") {
    FeatureMap m = tiny_map();
    BinaryMask mask(2, 2);
    mask.at(1, 0) = true;
    auto mm = masked_mean(m, mask);
    REQUIRE(mm.has_value());
    CHECK_EQ(mm->pixel_count, 1);
    CHECK_EQ(mm->mean[0], doctest::Approx(0.0));
    CHECK_EQ(mm->mean[1], doctest::Approx(1.0));
}

TEST_CASE("masked_mean resizes image-resolution masks to the grid") {
    FeatureMap m = tiny_map();
    BinaryMask mask(4, 4);  // 2x upsampled geometry; left half on
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 2; ++x) mask.at(x, y) = true;
    auto mm = masked_mean(m, mask);
    REQUIRE(mm.has_value());
    CHECK_EQ(mm->pixel_count, 2);                   // cells (0,0) and (0,1)
    CHECK_EQ(mm->mean[0], doctest::Approx(1.5));    // (1 + 2) / 2
    CHECK_EQ(mm->mean[1], doctest::Approx(1.0));    // (0 + 2) / 2
}

TEST_CASE("masked_mean of an empty mask is nullopt") {
    FeatureMap m = tiny_map();
    BinaryMask mask(2, 2);
    CHECK_FALSE(masked_mean(m, mask).has_value());
}

TEST_CASE("cosine_sim basics") {
    std::vector<float> a = {1, 0}, b = {0, 1}, c = {2, 0}, z = {0, 0};
    CHECK_EQ(cosine_sim(a, b), doctest::Approx(0.0));
    CHECK_EQ(cosine_sim(a, c), doctest::Approx(1.0));
    CHECK_EQ(cosine_sim(a, a), doctest::Approx(1.0));
    CHECK_EQ(cosine_sim(z, a), 0.0);  // zero vector convention
    std::vector<float> d = {1, 1};
    CHECK_EQ(cosine_sim(a, d), doctest::Approx(1.0 / std::sqrt(2.0)));
    std::vector<float> neg = {-1, 0};
    CHECK_EQ(cosine_sim(a, neg), doctest::Approx(-1.0));
}

TEST_CASE("ensemble normalize and scoring") {
    EnsembleSpace e = EnsembleSpace::uniform({"s1", "s2"});
    e.normalize();
    CHECK_EQ(e.members[0].weight, doctest::Approx(0.5));
    CHECK(e.has("s1"));
    CHECK_FALSE(e.has("s3"));

    std::map<std::string, std::vector<float>> px = {{"s1", {1, 0}}, {"s2", {1, 0}}};
    std::map<std::string, std::vector<float>> proto = {{"s1", {1, 0}}, {"s2", {0, 1}}};
    // 0.5 * 1 + 0.5 * 0
    CHECK_EQ(ensemble_score(px, proto, e), doctest::Approx(0.5));

    EnsembleSpace single = EnsembleSpace::uniform({"s1"});
    single.normalize();
    CHECK_EQ(ensemble_score(px, proto, single), doctest::Approx(1.0));

    std::map<std::string, std::vector<float>> missing = {{"s1", {1, 0}}};
    CHECK_THROWS_AS(ensemble_score(missing, proto, e), Error);
}

TEST_CASE("extractor config parsing and stable space ids") {
    ExtractorConfig plain = ExtractorConfig::parse("color-hash");
    CHECK_EQ(plain.kind, "color-hash");
    CHECK(plain.params.empty());

    ExtractorConfig with_params = ExtractorConfig::parse("color-hash:{\"patch\":4}");
    CHECK_EQ(with_params.kind, "color-hash");
    CHECK_EQ(with_params.params.at("patch"), 4);

    // Id is a pure function of the configuration.
    CHECK_EQ(plain.space_id(), ExtractorConfig::parse("color-hash").space_id());
    CHECK_NE(plain.space_id(), with_params.space_id());
    CHECK_MESSAGE(plain.space_id().rfind("color-hash-", 0) == 0, plain.space_id());

    // Round-trip through json keeps the id.
    CHECK_EQ(ExtractorConfig::from_json(with_params.to_json()).space_id(),
             with_params.space_id());

    CHECK_THROWS_AS(ExtractorConfig::parse("color-hash:not json"), Error);
    CHECK_THROWS_AS(ExtractorConfig::parse(""), Error);
}

TEST_CASE("registry reports external backends as unavailable") {
    auto& registry = ExtractorRegistry::instance();
    for (const ExtractorConfig& config : reference_extractor_configs()) {
        CHECK(registry.known(config.kind));
        CHECK_NE(registry.doc(config.kind), nullptr);
        CHECK_THROWS_AS(registry.create(config), Error);  // backend not bundled
    }
}

TEST_CASE("feature map file round-trip and corruption detection") {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "protoseg-fmap-test";
    std::filesystem::create_directories(dir);
    const auto p = dir / "cell.fmap";

    FeatureMap m = tiny_map();
    m.source_height = 16;
    m.source_width = 16;
    write_feature_map(p, m);
    FeatureMap back = read_feature_map(p);
    CHECK_EQ(back.height, m.height);
    CHECK_EQ(back.width, m.width);
    CHECK_EQ(back.dim, m.dim);
    CHECK(back.data == m.data);
    CHECK_EQ(back.space_id, "test-space");
    CHECK_EQ(back.source_height, 16);
    CHECK_EQ(back.source_width, 16);

    // Flip one payload byte: checksum must catch it.
    std::vector<std::uint8_t> bytes = read_file_bytes(p);
    bytes[bytes.size() - 1] ^= 0x01;
    write_file_bytes(p, bytes);
    CHECK_THROWS_AS(read_feature_map(p), Error);
    std::filesystem::remove_all(dir);
}
