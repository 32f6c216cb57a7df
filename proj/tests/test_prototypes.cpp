#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "protoseg/binio.hpp"
#include "protoseg/common.hpp"
#include "protoseg/prototypes.hpp"
#include "protoseg/rng.hpp"

using namespace protoseg;

namespace {

// Extractor whose "features" are the rgb values scaled to [0,1], one cell per
// 2x2 pixel block. Hand-predictable.
struct RgbExtractor : ExtractorAdapter {
    FeatureMap extract(const Image& image) override {
        int gw = (image.width + 1) / 2, gh = (image.height + 1) / 2;
        FeatureMap m(gh, gw, 3);
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx) {
                double sum[3] = {0, 0, 0};
                int n = 0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        int x = gx * 2 + dx, y = gy * 2 + dy;
                        if (x >= image.width || y >= image.height) continue;
                        Rgb p = image.at(x, y);
                        sum[0] += p.r;
                        sum[1] += p.g;
                        sum[2] += p.b;
                        ++n;
                    }
                for (int d = 0; d < 3; ++d)
                    m.at(gx, gy)[d] = static_cast<float>(sum[d] / (255.0 * n));
            }
        m.space_id = space_id();
        m.source_height = image.height;
        m.source_width = image.width;
        return m;
    }
    std::string space_id() const override { return "rgb-mean"; }
    int dim() const override { return 3; }
};

// Support set with two 4x4 samples: left half one color, right half another.
SupportSet two_sample_set(Rgb fg0, Rgb fg1, Rgb bg) {
    SupportSet set;
    set.category_id = "cat";
    set.prompt = "a cat";
    set.seed = 9;
    set.adapter_fingerprint = "stub";
    for (Rgb fg : {fg0, fg1}) {
        SupportSample s;
        s.image = Image(4, 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) s.image.set(x, y, x < 2 ? fg : bg);
        s.attribution = FloatGrid(4, 4, 0.0f);
        s.seed = set.samples.size();
        set.samples.push_back(std::move(s));
    }
    return set;
}

std::vector<FgBgMasks> left_right_masks(int n, int w = 4, int h = 4) {
    std::vector<FgBgMasks> masks;
    for (int i = 0; i < n; ++i) {
        FgBgMasks m;
        m.fg = BinaryMask(w, h);
        m.bg = BinaryMask(w, h);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) (x < w / 2 ? m.fg : m.bg).at(x, y) = true;
        m.provenance = "scripted";
        masks.push_back(std::move(m));
    }
    return masks;
}

int count_kind(const std::vector<Prototype>& ps, Polarity pol, ProtoKind kind) {
    int n = 0;
    for (const auto& p : ps) n += (p.polarity == pol && p.kind == kind);
    return n;
}

const Prototype* find_kind(const std::vector<Prototype>& ps, Polarity pol, ProtoKind kind) {
    for (const auto& p : ps)
        if (p.polarity == pol && p.kind == kind) return &p;
    return nullptr;
}

Prototype make_proto(std::vector<float> v, Polarity pol, ProtoKind kind) {
    Prototype p;
    p.values = std::move(v);
    p.polarity = pol;
    p.kind = kind;
    p.pixel_count = 1;
    return p;
}

}  // namespace

TEST_CASE("category prototypes: order, counts, and hand-checked means") {
    SupportSet set = two_sample_set({255, 0, 0}, {0, 0, 255}, {0, 255, 0});
    auto masks = left_right_masks(2);
    RgbExtractor extractor;
    BankBuildOptions options;
    options.k_parts = 2;
    std::vector<Prototype> ps = build_category_space(set, masks, extractor, options);

    // fg class, 2 fg instances, <=2 fg parts, bg class, 2 bg instances, <=2 bg parts
    CHECK_EQ(count_kind(ps, Polarity::Fg, ProtoKind::Class), 1);
    CHECK_EQ(count_kind(ps, Polarity::Fg, ProtoKind::Instance), 2);
    CHECK_GE(count_kind(ps, Polarity::Fg, ProtoKind::Part), 1);
    CHECK_EQ(count_kind(ps, Polarity::Bg, ProtoKind::Class), 1);
    CHECK_EQ(count_kind(ps, Polarity::Bg, ProtoKind::Instance), 2);

    // Declared order: fg class first, bg block after all fg prototypes.
    CHECK_EQ(ps.front().polarity, Polarity::Fg);
    CHECK_EQ(ps.front().kind, ProtoKind::Class);
    bool seen_bg = false;
    for (const auto& p : ps) {
        if (p.polarity == Polarity::Bg) seen_bg = true;
        if (seen_bg) CHECK_EQ(p.polarity, Polarity::Bg);
    }

    // Instance 0: left half pure red at 2x2 grid -> mean (1,0,0), 2 cells.
    const Prototype* inst0 = [&]() -> const Prototype* {
        for (const auto& p : ps)
            if (p.polarity == Polarity::Fg && p.kind == ProtoKind::Instance &&
                p.sample_index == 0)
                return &p;
        return nullptr;
    }();
    REQUIRE_NE(inst0, nullptr);
    CHECK_EQ(inst0->pixel_count, 2);
    CHECK_EQ(inst0->values[0], doctest::Approx(1.0));
    CHECK_EQ(inst0->values[1], doctest::Approx(0.0));

    // Class = pixel-count-weighted mean of instances: (1,0,0) and (0,0,1)
    // with equal weight -> (0.5, 0, 0.5).
    const Prototype* cls = find_kind(ps, Polarity::Fg, ProtoKind::Class);
    REQUIRE_NE(cls, nullptr);
    CHECK_EQ(cls->values[0], doctest::Approx(0.5));
    CHECK_EQ(cls->values[1], doctest::Approx(0.0));
    CHECK_EQ(cls->values[2], doctest::Approx(0.5));
    CHECK_EQ(cls->pixel_count, 4);

    // Bg class: both samples green -> (0, 1, 0).
    const Prototype* bg_cls = find_kind(ps, Polarity::Bg, ProtoKind::Class);
    REQUIRE_NE(bg_cls, nullptr);
    CHECK_EQ(bg_cls->values[1], doctest::Approx(1.0));

    // Part prototypes carry cluster indices and positive pixel counts.
    for (const auto& p : ps)
        if (p.kind == ProtoKind::Part) {
            CHECK_GE(p.cluster_index, 0);
            CHECK_GT(p.pixel_count, 0);
        }
}

TEST_CASE("single support image: class equals its only instance") {
    SupportSet set = two_sample_set({255, 0, 0}, {0, 0, 255}, {0, 255, 0});
    set.samples.resize(1);
    auto masks = left_right_masks(1);
    RgbExtractor extractor;
    std::vector<Prototype> ps = build_category_space(set, masks, extractor);
    const Prototype* cls = find_kind(ps, Polarity::Fg, ProtoKind::Class);
    const Prototype* inst = find_kind(ps, Polarity::Fg, ProtoKind::Instance);
    REQUIRE((cls != nullptr && inst != nullptr));
    for (int d = 0; d < 3; ++d) CHECK_EQ(cls->values[d], doctest::Approx(inst->values[d]));
}

TEST_CASE("no foreground evidence is an error; empty bg just yields no bg") {
    SupportSet set = two_sample_set({255, 0, 0}, {0, 0, 255}, {0, 255, 0});
    RgbExtractor extractor;

    auto empty_fg = left_right_masks(2);
    for (auto& m : empty_fg) m.fg = BinaryMask(4, 4);  // nothing on
    CHECK_THROWS_AS(build_category_space(set, empty_fg, extractor), Error);

    auto empty_bg = left_right_masks(2);
    for (auto& m : empty_bg) m.bg = BinaryMask(4, 4);
    std::vector<Prototype> ps = build_category_space(set, empty_bg, extractor);
    for (const auto& p : ps) CHECK_EQ(p.polarity, Polarity::Fg);
}

TEST_CASE("build_category rejects duplicate spaces and keys by space id") {
    SupportSet set = two_sample_set({255, 0, 0}, {0, 0, 255}, {0, 255, 0});
    auto masks = left_right_masks(2);
    RgbExtractor a, b;
    std::vector<ExtractorAdapter*> dup = {&a, &b};
    CHECK_THROWS_AS(build_category(set, masks, dup, {}), Error);

    std::vector<ExtractorAdapter*> one = {&a};
    auto by_space = build_category(set, masks, one, {});
    REQUIRE_EQ(by_space.size(), 1u);
    CHECK(by_space.contains("rgb-mean"));
}

TEST_CASE("stuff filter drops exactly the redundant bg prototypes") {
    // Constructed vectors: thing bg "sky-like" is nearly parallel to the stuff
    // fg anchor (cos 1 > 0.85); "floor-like" is orthogonal (cos 0).
    PrototypeBank bank;
    bank.add("sky", "s", {make_proto({0, 1}, Polarity::Fg, ProtoKind::Class),
                          make_proto({1, 0}, Polarity::Bg, ProtoKind::Class)});
    bank.add("cat", "s",
             {make_proto({1, 0}, Polarity::Fg, ProtoKind::Class),
              make_proto({0, 2}, Polarity::Bg, ProtoKind::Class),      // parallel to sky fg
              make_proto({1, 0}, Polarity::Bg, ProtoKind::Instance)});  // orthogonal

    Vocabulary vocab;
    vocab.categories.push_back({"sky", "sky", Tag::Stuff, 0});
    vocab.categories.push_back({"cat", "cat", Tag::Thing, 0});

    StuffFilterStats stats;
    PrototypeBank filtered = stuff_filter(bank, vocab, 0.85, &stats);
    CHECK(stats.applied);
    CHECK_EQ(stats.dropped_stuff_bg, 1);  // sky's own bg prototype
    CHECK_EQ(stats.dropped_thing_bg, 1);  // cat's sky-like bg prototype

    const auto* sky = filtered.find("sky", "s");
    REQUIRE_NE(sky, nullptr);
    CHECK_EQ(sky->size(), 1u);  // fg only
    CHECK_EQ((*sky)[0].polarity, Polarity::Fg);

    const auto* cat = filtered.find("cat", "s");
    REQUIRE_NE(cat, nullptr);
    CHECK_EQ(cat->size(), 2u);  // fg + the orthogonal bg survive
    CHECK_EQ((*cat)[0].polarity, Polarity::Fg);
    CHECK_EQ((*cat)[1].polarity, Polarity::Bg);
    CHECK_EQ((*cat)[1].kind, ProtoKind::Instance);
}

TEST_CASE("stuff filter threshold is strict (cosine equal to it survives)") {
    // cos({1,0}, {3,4}) = 3/5, exactly the double 0.6; the comparison is
    // cos > threshold, so equality must keep the prototype.
    PrototypeBank bank;
    bank.add("sky", "s", {make_proto({1, 0}, Polarity::Fg, ProtoKind::Class)});
    bank.add("cat", "s", {make_proto({0, 1}, Polarity::Fg, ProtoKind::Class),
                          make_proto({3, 4}, Polarity::Bg, ProtoKind::Class)});
    Vocabulary vocab;
    vocab.categories.push_back({"sky", "sky", Tag::Stuff, 0});
    vocab.categories.push_back({"cat", "cat", Tag::Thing, 0});

    StuffFilterStats at;
    PrototypeBank kept = stuff_filter(bank, vocab, 0.6, &at);
    CHECK_EQ(at.dropped_thing_bg, 0);
    CHECK_EQ(kept.find("cat", "s")->size(), 2u);

    StuffFilterStats below;
    PrototypeBank dropped = stuff_filter(bank, vocab, 0.59, &below);
    CHECK_EQ(below.dropped_thing_bg, 1);
    CHECK_EQ(dropped.find("cat", "s")->size(), 1u);
}

TEST_CASE("a bank without stuff categories passes through unchanged") {
    PrototypeBank bank;
    bank.add("cat", "s", {make_proto({1, 0}, Polarity::Fg, ProtoKind::Class),
                          make_proto({0, 1}, Polarity::Bg, ProtoKind::Class)});
    Vocabulary vocab;
    vocab.categories.push_back({"cat", "cat", Tag::Thing, 0});
    StuffFilterStats stats;
    PrototypeBank filtered = stuff_filter(bank, vocab, 0.85, &stats);
    CHECK_FALSE(stats.applied);
    CHECK_EQ(bank_digest(filtered), bank_digest(bank));
}

TEST_CASE("pvec encoding round-trips and rejects corruption") {
    std::vector<Prototype> ps = {make_proto({1, 2, 3}, Polarity::Fg, ProtoKind::Class),
                                 make_proto({4, 5, 6}, Polarity::Bg, ProtoKind::Part)};
    std::vector<std::uint8_t> bytes = encode_pvec(ps);
    CHECK_EQ(get_u32(bytes, 0), kPvecMagic);
    PvecPayload payload = decode_pvec(bytes);
    CHECK_EQ(payload.count, 2);
    CHECK_EQ(payload.dim, 3);
    CHECK_EQ(payload.values, std::vector<float>{1, 2, 3, 4, 5, 6});
    CHECK_EQ(payload.polarity_mask,
             static_cast<std::uint32_t>(Polarity::Fg) | static_cast<std::uint32_t>(Polarity::Bg));
    CHECK_EQ(payload.kind_mask, static_cast<std::uint32_t>(ProtoKind::Class) |
                                    static_cast<std::uint32_t>(ProtoKind::Part));

    auto corrupt = bytes;
    corrupt[corrupt.size() - 3] ^= 0x10;
    CHECK_THROWS_AS(decode_pvec(corrupt), Error);
    auto truncated = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 10);
    CHECK_THROWS_AS(decode_pvec(truncated), Error);
}

TEST_CASE("bank save/load round-trip preserves everything") {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "protoseg-bank-test";
    std::filesystem::remove_all(dir);

    PrototypeBank bank;
    SplitMix64 rng(1);
    for (const char* cat : {"red-disk", "green-square"}) {
        std::vector<Prototype> ps;
        Prototype cls = make_proto({}, Polarity::Fg, ProtoKind::Class);
        for (int d = 0; d < 4; ++d)
            cls.values.push_back(static_cast<float>(rng.next_double()));
        cls.pixel_count = 17;
        ps.push_back(cls);
        Prototype part = make_proto({}, Polarity::Bg, ProtoKind::Part);
        for (int d = 0; d < 4; ++d)
            part.values.push_back(static_cast<float>(rng.next_double()));
        part.cluster_index = 3;
        part.pixel_count = 5;
        ps.push_back(part);
        bank.add(cat, "space-a", ps);
    }
    save_bank(bank, dir);
    PrototypeBank back = load_bank(dir);
    CHECK_EQ(bank_digest(back), bank_digest(bank));
    const auto* ps = back.find("red-disk", "space-a");
    REQUIRE_NE(ps, nullptr);
    REQUIRE_EQ(ps->size(), 2u);
    CHECK_EQ((*ps)[0].pixel_count, 17);
    CHECK_EQ((*ps)[1].cluster_index, 3);
    CHECK_EQ((*ps)[1].kind, ProtoKind::Part);
    CHECK((*ps)[0].values == bank.find("red-disk", "space-a")->at(0).values);
    std::filesystem::remove_all(dir);
}

TEST_CASE("bank loading detects a corrupted prototype file") {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "protoseg-bank-corrupt-test";
    std::filesystem::remove_all(dir);
    PrototypeBank bank;
    bank.add("cat", "s", {make_proto({1, 0, 0}, Polarity::Fg, ProtoKind::Class)});
    save_bank(bank, dir);

    // Find the .pvec file and flip a payload byte.
    std::filesystem::path pvec;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".pvec") pvec = e.path();
    REQUIRE_FALSE(pvec.empty());
    auto bytes = read_file_bytes(pvec);
    bytes.back() ^= 0x01;
    write_file_bytes(pvec, bytes);
    CHECK_THROWS_AS(load_bank(dir), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("bank loading detects a tampered manifest") {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "protoseg-bank-manifest-test";
    std::filesystem::remove_all(dir);
    PrototypeBank bank;
    bank.add("cat", "s", {make_proto({1, 0, 0}, Polarity::Fg, ProtoKind::Class)});
    save_bank(bank, dir);
    const std::string pristine = read_file_text(dir / "manifest.json");

    std::string manifest = pristine;
    auto pos = manifest.find("\"cat\"");
    REQUIRE_NE(pos, std::string::npos);
    manifest.replace(pos, 5, "\"dog\"");
    write_file_text(dir / "manifest.json", manifest);
    CHECK_THROWS_AS(load_bank(dir), Error);

    // A flipped whitespace byte parses to the same document, so the checksum
    // must cover the raw text.
    manifest = pristine;
    pos = manifest.find("\n  ");
    REQUIRE_NE(pos, std::string::npos);
    manifest[pos + 1] = '\t';
    write_file_text(dir / "manifest.json", manifest);
    CHECK_THROWS_AS(load_bank(dir), Error);

    // Tampering with the checksum sidecar itself is also an error.
    write_file_text(dir / "manifest.json", pristine);
    CHECK_NOTHROW(load_bank(dir));
    std::string crc = read_file_text(dir / "manifest.crc");
    crc[0] = crc[0] == '0' ? '1' : '0';
    write_file_text(dir / "manifest.crc", crc);
    CHECK_THROWS_AS(load_bank(dir), Error);
    write_file_text(dir / "manifest.crc", "not a checksum");
    CHECK_THROWS_AS(load_bank(dir), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("merge_banks unions categories and refuses duplicates") {
    PrototypeBank a, b;
    a.add("cat", "s", {make_proto({1, 0}, Polarity::Fg, ProtoKind::Class)});
    b.add("dog", "s", {make_proto({0, 1}, Polarity::Fg, ProtoKind::Class)});
    PrototypeBank merged = merge_banks(a, b);
    CHECK(merged.has("cat"));
    CHECK(merged.has("dog"));

    PrototypeBank clash;
    clash.add("cat", "s", {make_proto({0, 1}, Polarity::Fg, ProtoKind::Class)});
    CHECK_THROWS_AS(merge_banks(a, clash), Error);
}

TEST_CASE("bank digest tracks content") {
    PrototypeBank a;
    a.add("cat", "s", {make_proto({1, 0}, Polarity::Fg, ProtoKind::Class)});
    PrototypeBank same;
    same.add("cat", "s", {make_proto({1, 0}, Polarity::Fg, ProtoKind::Class)});
    CHECK_EQ(bank_digest(a), bank_digest(same));

    PrototypeBank different;
    different.add("cat", "s", {make_proto({1, 0.0001f}, Polarity::Fg, ProtoKind::Class)});
    CHECK_NE(bank_digest(a), bank_digest(different));
}
