#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoseg/image.hpp"
#include "protoseg/inference.hpp"
#include "protoseg/prototypes.hpp"

namespace protoseg {

// Read access to the support evidence behind a bank, for explanations.
class SupportStore {
public:
    virtual ~SupportStore() = default;
    virtual int sample_count(const std::string& category_id) = 0;
    virtual std::optional<Image> support_image(const std::string& category_id, int index) = 0;
    // The fg or bg region of that sample that fed prototype construction.
    virtual std::optional<BinaryMask> support_region(const std::string& category_id, int index,
                                                     Polarity polarity) = 0;
};

// SupportStore over the on-disk support cache written at sampling/bank-build
// time. Needs the same identifying tuple the cache was keyed with.
class FileSupportStore : public SupportStore {
public:
    FileSupportStore(std::filesystem::path cache_dir, Vocabulary vocabulary, int n,
                     std::string adapter_fingerprint);

    int sample_count(const std::string& category_id) override;
    std::optional<Image> support_image(const std::string& category_id, int index) override;
    std::optional<BinaryMask> support_region(const std::string& category_id, int index,
                                             Polarity polarity) override;

private:
    std::filesystem::path cache_dir_;
    Vocabulary vocabulary_;
    int n_;
    std::string fingerprint_;
};

struct EvidenceItem {
    int sample_index = -1;
    Image image;        // the support image
    BinaryMask region;  // the region of it that fed the prototype
};

struct Explanation {
    int x = 0;
    int y = 0;
    std::uint16_t label = 0;   // expanded-vocabulary index at the pixel
    std::string category_id;   // the winning class (background id when label 0)
    double score = 0.0;        // winning class score at the pixel
    bool has_prototype = false;
    PrototypeRef prototype;    // which prototype carried the decision
    std::vector<EvidenceItem> evidence;
};

// Why did this pixel get its label: the winning class, its score, the
// prototype that scored it, and the support regions that prototype was built
// from (the instance's own sample; up to `max_evidence` samples for class and
// part prototypes, which pool all samples).
//
// When `bank` and `extractor` are given and the winner is a part prototype,
// each evidence region is narrowed to the cluster's share of the support
// region: the region's feature cells (in the extractor's space) whose nearest
// part centroid of the same category and polarity is the winning cluster.
// Membership is recomputed from the stored centroids, so regions for
// different clusters of one support sample never overlap. Samples where the
// winning cluster owns no cells are skipped. Without bank/extractor, part
// evidence degrades to the full support region.
Explanation explain_pixel(const SegmentationResult& result, const Vocabulary& vocabulary, int x,
                          int y, SupportStore& store, int max_evidence = 4,
                          const PrototypeBank* bank = nullptr,
                          ExtractorAdapter* extractor = nullptr);

nlohmann::json explanation_to_json(const Explanation& explanation);

// Diagnostic montage: the queried image with a crosshair, the predicted label
// map, then the evidence panels with the prototype's region highlighted.
// Deterministic: the same inputs render byte-identical images.
Image render_explanation(const Explanation& explanation, const SegmentationResult& result,
                         const Image& image, int cell_size = 224);

}  // namespace protoseg
