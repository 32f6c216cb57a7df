#include "protoseg/eval.hpp"

#include <chrono>

#include "protoseg/binio.hpp"
#include "protoseg/common.hpp"
#include "protoseg/png_io.hpp"

namespace protoseg {

using nlohmann::json;

MIoUAccumulator::MIoUAccumulator(std::vector<std::string> class_ids) {
    require(!class_ids.empty(), "miou: no classes");
    classes_.reserve(class_ids.size());
    for (std::string& id : class_ids) {
        ClassEval c;
        c.class_id = std::move(id);
        classes_.push_back(std::move(c));
    }
}

void MIoUAccumulator::add(const IndexGrid& prediction, const IndexGrid& ground_truth) {
    require(prediction.width == ground_truth.width && prediction.height == ground_truth.height,
            "miou: prediction and ground truth sizes differ");
    const std::uint16_t n = static_cast<std::uint16_t>(classes_.size());
    for (std::size_t i = 0; i < ground_truth.values.size(); ++i) {
        const std::uint16_t gt = ground_truth.values[i];
        if (gt == kIgnoreLabel) continue;
        require(gt < n, "miou: ground-truth label " + std::to_string(gt) +
                            " is outside the class list");
        const std::uint16_t pred = prediction.values[i];
        require(pred < n, "miou: predicted label " + std::to_string(pred) +
                              " is outside the class list");
        ++valid_pixels_;
        if (pred == gt) {
            ++classes_[gt].tp;
        } else {
            ++classes_[pred].fp;
            ++classes_[gt].fn;
        }
    }
}

std::optional<double> MIoUAccumulator::miou() const {
    double total = 0.0;
    int scored = 0;
    for (const ClassEval& c : classes_) {
        if (!c.scored()) continue;
        total += c.iou();
        ++scored;
    }
    if (scored == 0) return std::nullopt;
    return total / scored;
}

json report_to_json(const EvalReport& report) {
    json classes = json::array();
    for (const ClassEval& c : report.classes) {
        json e;
        e["id"] = c.class_id;
        e["tp"] = c.tp;
        e["fp"] = c.fp;
        e["fn"] = c.fn;
        if (c.scored()) {
            e["iou"] = c.iou();
        } else {
            e["iou"] = nullptr;
        }
        classes.push_back(std::move(e));
    }
    json doc;
    doc["classes"] = std::move(classes);
    doc["miou"] = report.miou;
    doc["images"] = report.images;
    doc["valid_pixels"] = report.valid_pixels;
    return doc;
}

EvalReport run_benchmark(DatasetAdapter& dataset, const Vocabulary& vocabulary,
                         const SegmentFn& segment_fn, const std::filesystem::path& out_dir) {
    require(vocabulary.is_expanded(), "run_benchmark: vocabulary must be expanded");
    require(segment_fn != nullptr, "run_benchmark: no segmentation function");

    std::vector<std::string> class_ids;
    class_ids.reserve(vocabulary.categories.size());
    for (const Category& c : vocabulary.categories) class_ids.push_back(c.id);
    MIoUAccumulator accumulator(std::move(class_ids));

    const auto palette = voc_palette(256);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < dataset.size(); ++i) {
        DatasetItem item = dataset.item(i);
        const SegmentationResult result = segment_fn(item.image);
        const IndexGrid prediction =
            resize_nearest(result.labels, item.labels.width, item.labels.height);
        accumulator.add(prediction, item.labels);
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir / "predictions");
            png_write_indexed(out_dir / "predictions" / (item.id + ".png"), prediction, palette);
        }
    }
    const auto stop = std::chrono::steady_clock::now();

    const std::optional<double> miou = accumulator.miou();
    require(miou.has_value(),
            "EMPTY_EVAL: the dataset contributed no evaluated pixels (empty split or all-ignore "
            "labels)");

    EvalReport report;
    report.classes = accumulator.classes();
    report.miou = *miou;
    report.images = dataset.size();
    report.valid_pixels = accumulator.valid_pixels();
    report.wall_clock_seconds = std::chrono::duration<double>(stop - start).count();
    if (!out_dir.empty()) {
        write_file_text(out_dir / "report.json", report_to_json(report).dump(2) + "\n");
    }
    return report;
}

}  // namespace protoseg
