#include <map>
#include <optional>

#include "doctest.h"
#include "protoseg/binio.hpp"
#include "protoseg/explanation.hpp"

using namespace protoseg;

namespace {

// In-memory support store with one 4x4 image per category.
struct MapStore : SupportStore {
    std::map<std::string, std::vector<Image>> images;
    std::map<std::string, std::vector<BinaryMask>> fg, bg;

    void add(const std::string& cat, Rgb color) {
        Image img(4, 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) img.set(x, y, color);
        BinaryMask f(4, 4), b(4, 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) (x < 2 ? f : b).at(x, y) = true;
        images[cat].push_back(img);
        fg[cat].push_back(f);
        bg[cat].push_back(b);
    }
    int sample_count(const std::string& cat) override {
        auto it = images.find(cat);
        return it == images.end() ? 0 : static_cast<int>(it->second.size());
    }
    std::optional<Image> support_image(const std::string& cat, int index) override {
        if (index < 0 || index >= sample_count(cat)) return std::nullopt;
        return images[cat][static_cast<std::size_t>(index)];
    }
    std::optional<BinaryMask> support_region(const std::string& cat, int index,
                                             Polarity polarity) override {
        if (index < 0 || index >= sample_count(cat)) return std::nullopt;
        return (polarity == Polarity::Fg ? fg : bg)[cat][static_cast<std::size_t>(index)];
    }
};

// Minimal hand-built segmentation result: 2x1, pixel 0 red (class proto),
// pixel 1 background (bg instance proto of red).
SegmentationResult tiny_result() {
    SegmentationResult r;
    r.width = 2;
    r.height = 1;
    r.labels = IndexGrid(2, 1, 0);
    r.labels.at(0, 0) = 1;
    r.class_list = {"background", "red"};
    r.scores.push_back(FloatGrid(2, 1, 0.2f));  // background row
    r.scores.push_back(FloatGrid(2, 1, 0.0f));  // red row
    r.scores[1].at(0, 0) = 0.9f;
    r.scores[0].at(1, 0) = 0.8f;
    r.pool_refs.push_back({"red", Polarity::Fg, ProtoKind::Class, -1, -1});
    r.pool_refs.push_back({"red", Polarity::Bg, ProtoKind::Instance, 1, -1});
    r.winner = IndexGrid(2, 1, 0);
    r.winner.at(0, 0) = 0;
    r.winner.at(1, 0) = 1;
    return r;
}

Vocabulary expanded_red() {
    Vocabulary v;
    v.categories.push_back({"red", "red", Tag::Thing, 0});
    return expand_with_background(v);
}

}  // namespace

TEST_CASE("explain_pixel ties the label to its prototype and evidence") {
    SegmentationResult r = tiny_result();
    Vocabulary vocab = expanded_red();
    MapStore store;
    store.add("red", {200, 0, 0});
    store.add("red", {180, 0, 0});

    Explanation e = explain_pixel(r, vocab, 0, 0, store);
    CHECK_EQ(e.x, 0);
    CHECK_EQ(e.label, 1);
    CHECK_EQ(e.category_id, "red");
    CHECK_EQ(e.score, doctest::Approx(0.9));
    REQUIRE(e.has_prototype);
    CHECK_EQ(e.prototype.category_id, "red");
    CHECK_EQ(e.prototype.kind, ProtoKind::Class);
    // Class prototypes pool all samples: both support images show up.
    CHECK_EQ(e.evidence.size(), 2u);
    CHECK_EQ(e.evidence[0].sample_index, 0);
    CHECK_EQ(e.evidence[1].sample_index, 1);
    // Foreground regions back a fg prototype.
    CHECK(e.evidence[0].region.at(0, 0));
    CHECK_FALSE(e.evidence[0].region.at(3, 0));
}

TEST_CASE("explaining a background pixel uses the bg prototype's sample") {
    SegmentationResult r = tiny_result();
    Vocabulary vocab = expanded_red();
    MapStore store;
    store.add("red", {200, 0, 0});
    store.add("red", {180, 0, 0});

    Explanation e = explain_pixel(r, vocab, 1, 0, store);
    CHECK_EQ(e.label, 0);
    CHECK_EQ(e.category_id, "background");
    CHECK_EQ(e.score, doctest::Approx(0.8));
    REQUIRE(e.has_prototype);
    CHECK_EQ(e.prototype.kind, ProtoKind::Instance);
    // Instance prototypes come from one specific sample.
    REQUIRE_EQ(e.evidence.size(), 1u);
    CHECK_EQ(e.evidence[0].sample_index, 1);
    // Background region this time.
    CHECK(e.evidence[0].region.at(3, 0));
    CHECK_FALSE(e.evidence[0].region.at(0, 0));
}

TEST_CASE("explain_pixel respects max_evidence and missing winners") {
    SegmentationResult r = tiny_result();
    Vocabulary vocab = expanded_red();
    MapStore store;
    for (int i = 0; i < 6; ++i) store.add("red", {200, 0, 0});

    Explanation capped = explain_pixel(r, vocab, 0, 0, store, 3);
    CHECK_EQ(capped.evidence.size(), 3u);

    // Thresholded background: no prototype, no evidence.
    r.winner.at(1, 0) = kNoWinner;
    Explanation none = explain_pixel(r, vocab, 1, 0, store);
    CHECK_FALSE(none.has_prototype);
    CHECK(none.evidence.empty());

    CHECK_THROWS(explain_pixel(r, vocab, 5, 0, store));  // out of bounds
}

namespace {

// Per-pixel normalized RGB as the feature, so cluster membership is exactly
// color membership.
struct PixelColorExtractor : ExtractorAdapter {
    FeatureMap extract(const Image& image) override {
        FeatureMap map(image.height, image.width, 3);
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) {
                const Rgb p = image.at(x, y);
                auto cell = map.at(x, y);
                cell[0] = static_cast<float>(p.r) / 255.f;
                cell[1] = static_cast<float>(p.g) / 255.f;
                cell[2] = static_cast<float>(p.b) / 255.f;
            }
        }
        return map;
    }
    std::string space_id() const override { return "pixel-color"; }
    int dim() const override { return 3; }
};

Prototype part_proto(Rgb color, int cluster) {
    Prototype p;
    p.values = {static_cast<float>(color.r) / 255.f, static_cast<float>(color.g) / 255.f,
                static_cast<float>(color.b) / 255.f};
    p.polarity = Polarity::Fg;
    p.kind = ProtoKind::Part;
    p.cluster_index = cluster;
    p.pixel_count = 4;
    return p;
}

}  // namespace

TEST_CASE("part evidence narrows to the winning cluster's cells") {
    const Rgb red{200, 0, 0}, blue{0, 0, 200}, gray{120, 120, 120};

    // Support sample 0: fg column 0 red, fg column 1 blue. Sample 1: all-red fg.
    MapStore store;
    {
        Image img(4, 4);
        for (int y = 0; y < 4; ++y) {
            img.set(0, y, red);
            img.set(1, y, blue);
            img.set(2, y, gray);
            img.set(3, y, gray);
        }
        BinaryMask f(4, 4), b(4, 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) (x < 2 ? f : b).at(x, y) = true;
        store.images["red"].push_back(img);
        store.fg["red"].push_back(f);
        store.bg["red"].push_back(b);
    }
    store.add("red", red);  // sample 1: fg columns 0-1, both red

    PrototypeBank bank;
    bank.add("red", "pixel-color", {part_proto(red, 0), part_proto(blue, 1)});
    PixelColorExtractor extractor;

    SegmentationResult r = tiny_result();
    r.pool_refs[0] = {"red", Polarity::Fg, ProtoKind::Part, -1, 0};  // red cluster
    Vocabulary vocab = expanded_red();

    Explanation via_red = explain_pixel(r, vocab, 0, 0, store, 4, &bank, &extractor);
    REQUIRE_EQ(via_red.evidence.size(), 2u);
    // Sample 0: only the red column of the fg region.
    CHECK_EQ(via_red.evidence[0].region.count_on(), 4);
    for (int y = 0; y < 4; ++y) {
        CHECK(via_red.evidence[0].region.at(0, y));
        CHECK_FALSE(via_red.evidence[0].region.at(1, y));
    }
    // Sample 1 is all red: the whole fg region belongs to cluster 0.
    CHECK_EQ(via_red.evidence[1].region.count_on(), 8);

    r.pool_refs[0].cluster_index = 1;  // blue cluster
    Explanation via_blue = explain_pixel(r, vocab, 0, 0, store, 4, &bank, &extractor);
    // Sample 1 has no blue cells, so only sample 0 contributes.
    REQUIRE_EQ(via_blue.evidence.size(), 1u);
    CHECK_EQ(via_blue.evidence[0].sample_index, 0);
    CHECK_EQ(via_blue.evidence[0].region.count_on(), 4);
    for (int y = 0; y < 4; ++y) {
        CHECK(via_blue.evidence[0].region.at(1, y));
        CHECK_FALSE(via_blue.evidence[0].region.at(0, y));
    }

    // The two clusters partition sample 0's fg region: disjoint, union = fg.
    const BinaryMask& a = via_red.evidence[0].region;
    const BinaryMask& b = via_blue.evidence[0].region;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const bool overlap = a.at(x, y) && b.at(x, y);
            CHECK_FALSE(overlap);
        }
    CHECK_EQ(a.count_on() + b.count_on(), store.fg["red"][0].count_on());

    // Without bank/extractor the evidence degrades to the full fg region.
    Explanation degraded = explain_pixel(r, vocab, 0, 0, store);
    REQUIRE_EQ(degraded.evidence.size(), 2u);
    CHECK_EQ(degraded.evidence[0].region.count_on(), 8);
}

TEST_CASE("explanation serializes to json") {
    SegmentationResult r = tiny_result();
    Vocabulary vocab = expanded_red();
    MapStore store;
    store.add("red", {200, 0, 0});

    nlohmann::json doc = explanation_to_json(explain_pixel(r, vocab, 0, 0, store));
    CHECK_EQ(doc.at("category_id"), "red");
    CHECK_EQ(doc.at("label"), 1);
    CHECK_EQ(doc.at("prototype").at("kind"), "class");
    CHECK_EQ(doc.at("prototype").at("polarity"), "fg");
    CHECK_EQ(doc.at("evidence_samples").size(), 1u);

    r.winner.at(1, 0) = kNoWinner;
    nlohmann::json bare = explanation_to_json(explain_pixel(r, vocab, 1, 0, store));
    CHECK(bare.at("prototype").is_null());
}

TEST_CASE("montage rendering is deterministic and panel-sized") {
    SegmentationResult r = tiny_result();
    Vocabulary vocab = expanded_red();
    MapStore store;
    store.add("red", {200, 0, 0});
    store.add("red", {180, 0, 0});
    Explanation e = explain_pixel(r, vocab, 0, 0, store);

    Image query(2, 1);
    query.set(0, 0, {250, 10, 10});
    query.set(1, 0, {100, 100, 100});

    Image m1 = render_explanation(e, r, query, 64);
    Image m2 = render_explanation(e, r, query, 64);
    CHECK(m1.pixels == m2.pixels);
    // 4 panels (query, labels, 2 evidence) at 64px cells in up to 3 columns.
    CHECK_EQ(m1.width, 3 * 64);
    CHECK_EQ(m1.height, 2 * 64);

    Image wrong_size(3, 1);
    CHECK_THROWS(render_explanation(e, r, wrong_size, 64));
    CHECK_THROWS(render_explanation(e, r, query, 16));  // cell below minimum
}
