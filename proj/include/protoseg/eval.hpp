#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoseg/dataset.hpp"
#include "protoseg/inference.hpp"

namespace protoseg {

struct ClassEval {
    std::string class_id;
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;

    // A class participates in the mean only once it appears in ground truth or
    // predictions.
    bool scored() const { return tp + fp + fn > 0; }
    double iou() const {
        return static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    }
};

// Intersection-over-union accumulated over a whole split (not per-image).
class MIoUAccumulator {
public:
    explicit MIoUAccumulator(std::vector<std::string> class_ids);

    void add(const IndexGrid& prediction, const IndexGrid& ground_truth);
    // Mean IoU over scored classes; nullopt when no pixel was ever evaluated.
    std::optional<double> miou() const;
    const std::vector<ClassEval>& classes() const { return classes_; }
    std::int64_t valid_pixels() const { return valid_pixels_; }

private:
    std::vector<ClassEval> classes_;
    std::int64_t valid_pixels_ = 0;
};

struct EvalReport {
    std::vector<ClassEval> classes;
    double miou = 0.0;
    int images = 0;
    std::int64_t valid_pixels = 0;
    // Informational only; deliberately excluded from report_to_json so report
    // files are byte-stable across runs.
    double wall_clock_seconds = 0.0;
};

nlohmann::json report_to_json(const EvalReport& report);

using SegmentFn = std::function<SegmentationResult(const Image&)>;

// Runs `segment_fn` over the dataset, resizes each prediction back to the
// ground-truth geometry (nearest), and accumulates mIoU over the expanded
// vocabulary. When `out_dir` is non-empty, writes predictions/<id>.png
// (palette-indexed) and report.json there. A dataset that yields no evaluated
// pixel fails with an EMPTY_EVAL error.
EvalReport run_benchmark(DatasetAdapter& dataset, const Vocabulary& vocabulary,
                         const SegmentFn& segment_fn,
                         const std::filesystem::path& out_dir = {});

}  // namespace protoseg
