#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "protoseg/features.hpp"
#include "protoseg/image.hpp"
#include "protoseg/prototypes.hpp"
#include "protoseg/vocabulary.hpp"

namespace protoseg {

// --- Category pre-filtering ---------------------------------------------------

// Image-to-text affinity backend (e.g. a contrastive dual encoder). Returns one
// raw score per prompt; higher means the prompt describes the image better.
class PrefilterScorer {
public:
    virtual ~PrefilterScorer() = default;
    virtual std::string name() const = 0;
    virtual std::vector<double> score(const Image& image,
                                      const std::vector<std::string>& prompts) = 0;
};

struct PrefilterOptions {
    bool enabled = true;
    int eta = 10;  // cap on categories entering the combination stage
    std::string prompt_template = std::string(kDefaultPromptTemplate);
};

struct PrefilterResult {
    bool applied = false;               // scorer ran (false -> kept = all)
    std::vector<std::string> kept;      // category ids, in vocabulary order
    std::vector<double> probabilities;  // stage-1 softmax, one per input category
    std::vector<std::string> stage1;    // ids past the 1/|C| cut and eta cap
    std::vector<std::string> combination_prompts;  // composite prompts scored in stage 2
    std::string best_prompt;
};

// Two-stage vocabulary reduction. Stage 1 scores one prompt per category and
// keeps categories whose softmax probability exceeds 1/|C| (uniform scores keep
// only the top category), capped to the `eta` most probable. Stage 2 scores
// every non-empty subset of the survivors as one composite prompt (members
// joined with " and ") on raw affinity; the best subset is kept.
PrefilterResult prefilter(PrefilterScorer& scorer, const Image& image,
                          const std::vector<Category>& categories,
                          const PrefilterOptions& options = {});

// --- Segmentation --------------------------------------------------------------

// Points at one prototype identity shared across ensemble spaces.
struct PrototypeRef {
    std::string category_id;
    Polarity polarity = Polarity::Fg;
    ProtoKind kind = ProtoKind::Class;
    int sample_index = -1;
    int cluster_index = -1;
};

inline constexpr std::uint16_t kNoWinner = 0xFFFF;

struct SegmentationResult {
    int width = 0;
    int height = 0;
    // Per-pixel label as an index into the expanded vocabulary (0 = background).
    IndexGrid labels;
    // Scored classes: class_list[0] is the background id, the rest are the kept
    // categories in vocabulary order. scores[i] is the per-pixel mean score of
    // class_list[i] across windows.
    std::vector<std::string> class_list;
    std::vector<FloatGrid> scores;
    // winner.values[p] indexes pool_refs: the prototype that produced the
    // winning class's score at p (kNoWinner when that class has no prototypes,
    // e.g. background in foreground-threshold mode).
    IndexGrid winner;
    std::vector<PrototypeRef> pool_refs;
    PrefilterResult prefilter;
};

// Optional in-place refinement of the mean score grids (one per class_list
// entry) before the argmax, e.g. an edge-aware smoother.
using RefineHook = std::function<void(const Image& image, std::vector<FloatGrid>& scores)>;

struct SegmentOptions {
    // Background as the union of the categories' background prototypes. When
    // false, background instead wins wherever no foreground score exceeds
    // fg_threshold (the background score row is that constant).
    bool use_bg_prototypes = true;
    float fg_threshold = 0.75f;
    // Pool background prototypes from every bank category instead of only the
    // kept ones.
    bool bg_pool_all_categories = false;
    std::vector<int> window_sizes = {448, 336};
    int window_stride = 224;
    int shortest_side = 448;
    RefineHook refine;
};

// Core scoring step over precomputed features (one map per ensemble space; the
// maps may have different grid sizes). Each class score at a pixel is the best
// prototype score of that class, where a prototype's score is the
// weight-averaged cosine between the pixel's feature and that prototype across
// spaces (prototypes are matched across spaces by identity; ones missing from
// any space are skipped). Score grids are emitted at out_width x out_height via
// nearest-neighbor upsampling from each space's feature grid. `vocabulary`
// must be expanded (background first); `kept_categories` lists the vocabulary
// categories to score.
SegmentationResult segment_features(const std::map<std::string, FeatureMap>& features,
                                    int out_width, int out_height, const PrototypeBank& bank,
                                    const Vocabulary& vocabulary,
                                    const std::vector<std::string>& kept_categories,
                                    const EnsembleSpace& ensemble,
                                    const SegmentOptions& options = {});

// Start positions for tiling one axis: 0, stride, ... while p + window <= dim,
// plus a final dim - window when the last tile would not reach the end. A
// window larger than the axis clamps to a single full-axis tile.
std::vector<int> window_positions(int dim, int window, int stride);

// Full-image segmentation: resizes the shortest side to options.shortest_side,
// slides every window size across the image, extracts features per window with
// each ensemble extractor, scores via segment_features, and averages
// overlapping window scores per pixel. Winning prototypes are tracked across
// windows by best score. The result is at the resized geometry, not the
// original image size.
SegmentationResult segment(const Image& image,
                           const std::map<std::string, ExtractorAdapter*>& extractors,
                           const EnsembleSpace& ensemble, const PrototypeBank& bank,
                           const Vocabulary& vocabulary, PrefilterScorer* prefilter_scorer,
                           const PrefilterOptions& prefilter_options = {},
                           const SegmentOptions& options = {});

}  // namespace protoseg
