#include <filesystem>

#include "doctest.h"
#include "protoseg/binio.hpp"
#include "protoseg/common.hpp"
#include "protoseg/dataset.hpp"
#include "protoseg/eval.hpp"
#include "protoseg/png_io.hpp"

using namespace protoseg;

TEST_CASE("miou accumulates tp/fp/fn per class over the split") {
    MIoUAccumulator acc({"background", "red", "blue"});
    IndexGrid gt(4, 1, 0);
    gt.at(0, 0) = 1;
    gt.at(1, 0) = 1;
    gt.at(2, 0) = 2;  // blue
    IndexGrid pred(4, 1, 0);
    pred.at(0, 0) = 1;  // red hit
    pred.at(1, 0) = 2;  // red missed, blue fp
    pred.at(2, 0) = 2;  // blue hit
    acc.add(pred, gt);

    // red: tp 1, fn 1, fp 0 -> 1/2; blue: tp 1, fp 1, fn 0 -> 1/2;
    // background: tp 1, fp 0, fn 0 -> 1.
    const auto& cs = acc.classes();
    REQUIRE_EQ(cs.size(), 3u);
    CHECK_EQ(cs[0].tp, 1);
    CHECK_EQ(cs[1].tp, 1);
    CHECK_EQ(cs[1].fn, 1);
    CHECK_EQ(cs[2].tp, 1);
    CHECK_EQ(cs[2].fp, 1);
    REQUIRE(acc.miou().has_value());
    CHECK_EQ(*acc.miou(), doctest::Approx((1.0 + 0.5 + 0.5) / 3.0));
    CHECK_EQ(acc.valid_pixels(), 4);

    // A second image accumulates into the same counters (split-level miou).
    acc.add(pred, gt);
    CHECK_EQ(acc.classes()[1].tp, 2);
    CHECK_EQ(*acc.miou(), doctest::Approx((1.0 + 0.5 + 0.5) / 3.0));
}

TEST_CASE("perfect prediction scores miou 1") {
    MIoUAccumulator acc({"background", "red"});
    IndexGrid gt(3, 1, 0);
    gt.at(1, 0) = 1;
    acc.add(gt, gt);
    CHECK_EQ(*acc.miou(), doctest::Approx(1.0));
}

TEST_CASE("ignore label skips pixels; unseen classes are excluded") {
    MIoUAccumulator acc({"background", "red", "never"});
    IndexGrid gt(3, 1, 0);
    gt.at(0, 0) = kIgnoreLabel;
    gt.at(1, 0) = 1;
    IndexGrid pred(3, 1, 0);
    pred.at(0, 0) = 1;  // ignored: contributes nothing
    pred.at(1, 0) = 1;
    acc.add(pred, gt);
    CHECK_EQ(acc.valid_pixels(), 2);
    CHECK_FALSE(acc.classes()[2].scored());  // "never" appears nowhere
    CHECK_EQ(*acc.miou(), doctest::Approx(1.0));  // mean over scored classes only
}

TEST_CASE("miou is empty when every pixel is ignored") {
    MIoUAccumulator acc({"background", "red"});
    IndexGrid gt(2, 1, kIgnoreLabel);
    IndexGrid pred(2, 1, 0);
    acc.add(pred, gt);
    CHECK_FALSE(acc.miou().has_value());

    IndexGrid small(1, 1, 0);
    CHECK_THROWS(acc.add(small, gt));  // size mismatch
    IndexGrid scored_gt(2, 1, 1);
    IndexGrid big_label(2, 1, 9);
    CHECK_THROWS(acc.add(big_label, scored_gt));  // prediction out of class range
    CHECK_THROWS(acc.add(scored_gt, big_label));  // ground truth out of class range
}

TEST_CASE("report json is canonical and excludes wall-clock time") {
    MIoUAccumulator acc({"background", "red"});
    IndexGrid gt(2, 1, 0);
    gt.at(1, 0) = 1;
    acc.add(gt, gt);
    EvalReport report;
    report.classes = acc.classes();
    report.miou = *acc.miou();
    report.images = 1;
    report.valid_pixels = acc.valid_pixels();
    report.wall_clock_seconds = 123.456;

    nlohmann::json doc = report_to_json(report);
    CHECK_EQ(doc.at("miou"), 1.0);
    CHECK_EQ(doc.at("images"), 1);
    CHECK_EQ(doc.at("valid_pixels"), 2);
    CHECK_EQ(doc.at("classes").size(), 2u);
    CHECK_EQ(doc.at("classes")[1].at("id"), "red");
    CHECK_EQ(doc.at("classes")[1].at("iou"), 1.0);
    CHECK_EQ(doc.dump().find("wall"), std::string::npos);

    // Unscored classes serialize a null iou.
    EvalReport sparse;
    sparse.classes.push_back({"background", 0, 0, 0});
    nlohmann::json sdoc = report_to_json(sparse);
    CHECK(sdoc.at("classes")[0].at("iou").is_null());
}

TEST_CASE("synthetic scene dataset is deterministic with stable ids") {
    SyntheticWorld world = SyntheticWorld::standard();
    Vocabulary expanded = expand_with_background(SyntheticWorld::standard_vocabulary(0));
    SyntheticSceneDataset ds(world, expanded, 3, 99, 64, 64);
    CHECK_EQ(ds.size(), 3);
    DatasetItem a = ds.item(0);
    CHECK_EQ(a.id, "scene_0");
    CHECK_EQ(a.image.width, 64);
    CHECK_EQ(a.labels.width, 64);
    SyntheticSceneDataset ds2(world, expanded, 3, 99, 64, 64);
    DatasetItem b = ds2.item(0);
    CHECK(a.image.pixels == b.image.pixels);
    CHECK(a.labels.values == b.labels.values);
    // Different dataset seed, different scenes.
    SyntheticSceneDataset ds3(world, expanded, 3, 100, 64, 64);
    CHECK(ds3.item(0).image.pixels != a.image.pixels);
}

TEST_CASE("folder dataset pairs images with label files by id") {
    const std::filesystem::path root =
        std::filesystem::temp_directory_path() / "protoseg-folder-test";
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root / "images");
    std::filesystem::create_directories(root / "labels");

    Image img(5, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) img.set(x, y, {std::uint8_t(40 * x), 0, 0});
    IndexGrid labels(5, 4, 0);
    labels.at(2, 2) = 1;
    png_write_rgb(root / "images" / "b.png", img);
    png_write_indexed(root / "labels" / "b.png", labels, voc_palette(256));
    png_write_rgb(root / "images" / "a.png", img);
    png_write_indexed(root / "labels" / "a.png", labels, voc_palette(256));

    FolderDataset ds(root);
    REQUIRE_EQ(ds.size(), 2);
    CHECK_EQ(ds.item(0).id, "a");  // sorted by id
    CHECK_EQ(ds.item(1).id, "b");
    DatasetItem item = ds.item(0);
    CHECK(item.image.pixels == img.pixels);
    CHECK_EQ(item.labels.at(2, 2), 1);

    // A labels file of the wrong size fails at item access.
    IndexGrid bad(3, 3, 0);
    png_write_indexed(root / "labels" / "a.png", bad, voc_palette(256));
    FolderDataset broken(root);
    CHECK_THROWS(broken.item(0));
    std::filesystem::remove_all(root);
}

TEST_CASE("run_benchmark wires segmentation into the accumulator") {
    SyntheticWorld world = SyntheticWorld::standard();
    Vocabulary expanded = expand_with_background(SyntheticWorld::standard_vocabulary(0));
    SyntheticSceneDataset ds(world, expanded, 2, 5, 32, 32);

    // Cheating segmenter: returns the ground truth at half resolution, which
    // run_benchmark must resize back before scoring.
    SegmentFn perfect = [&](const Image&) {
        static int call = 0;
        DatasetItem item = ds.item(call++);
        SegmentationResult r;
        r.width = 16;
        r.height = 16;
        r.labels = resize_nearest(item.labels, 16, 16);
        return r;
    };
    const std::filesystem::path out =
        std::filesystem::temp_directory_path() / "protoseg-bench-test";
    std::filesystem::remove_all(out);
    EvalReport report = run_benchmark(ds, expanded, perfect, out);
    CHECK_EQ(report.images, 2);
    CHECK_GT(report.miou, 0.8);  // near-perfect up to resize quantization
    CHECK_GT(report.wall_clock_seconds, 0.0);
    CHECK(std::filesystem::exists(out / "report.json"));
    CHECK(std::filesystem::exists(out / "predictions" / "scene_0.png"));
    CHECK(std::filesystem::exists(out / "predictions" / "scene_1.png"));

    // The written report matches the returned one.
    nlohmann::json disk = nlohmann::json::parse(read_file_text(out / "report.json"));
    CHECK_EQ(disk.at("miou"), doctest::Approx(report.miou));
    std::filesystem::remove_all(out);
}

TEST_CASE("run_benchmark raises EMPTY_EVAL on an all-ignore dataset") {
    // One scene whose labels are entirely the ignore value.
    struct IgnoreDataset : DatasetAdapter {
        std::string name() const override { return "ignore"; }
        int size() const override { return 1; }
        DatasetItem item(int) override {
            DatasetItem d;
            d.id = "only";
            d.image = Image(8, 8);
            d.labels = IndexGrid(8, 8, kIgnoreLabel);
            return d;
        }
    } ds;
    Vocabulary expanded = expand_with_background(SyntheticWorld::standard_vocabulary(0));
    SegmentFn constant = [](const Image& img) {
        SegmentationResult r;
        r.width = img.width;
        r.height = img.height;
        r.labels = IndexGrid(img.width, img.height, 0);
        return r;
    };
    try {
        run_benchmark(ds, expanded, constant);
        FAIL("expected EMPTY_EVAL");
    } catch (const Error& e) {
        CHECK_NE(std::string(e.what()).find("EMPTY_EVAL"), std::string::npos);
    }
}
