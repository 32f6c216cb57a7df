#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoseg/features.hpp"
#include "protoseg/image.hpp"
#include "protoseg/inference.hpp"
#include "protoseg/region.hpp"
#include "protoseg/support.hpp"
#include "protoseg/vocabulary.hpp"

namespace protoseg {

// Self-contained flat-color test world. It stands in for the generative and
// contrastive backends so the full pipeline can run hermetically: categories
// are colored shapes on a noisy gray background scattered with small accent
// dots, and features are smooth color embeddings. Accent colors are close
// enough to the shape colors that they fool a foreground-threshold decision,
// while background prototypes built from the same support images classify
// them correctly.

struct SyntheticCategoryStyle {
    std::string category_id;
    std::string shape;  // "disk" | "square" | "triangle"
    Rgb color;          // shape fill
    Rgb accent;         // background dot color associated with this category
};

struct SyntheticWorld {
    Rgb background_base{120, 120, 120};
    int noise_amplitude = 6;          // per-channel, uniform in [-amp, amp]
    int accent_count = 7;             // accent dots per image
    double accent_radius_frac = 0.05; // dot radius relative to min(w, h)
    std::vector<SyntheticCategoryStyle> styles;

    const SyntheticCategoryStyle* find(const std::string& category_id) const;
    const SyntheticCategoryStyle* find_by_query(const std::string& query_text) const;

    // Three categories: red disk, green square, blue triangle.
    static SyntheticWorld standard();
    // Vocabulary matching standard(), with query text "<color> <shape>" and
    // per-category seeds derived from `global_seed`.
    static Vocabulary standard_vocabulary(std::uint64_t global_seed);
};

// Signed distance to a shape boundary (negative inside). `size` is the
// radius / half-side / circumradius; the triangle is equilateral, point up.
double shape_sdf(const std::string& shape, double x, double y, double cx, double cy, double size);

// --- Scenes -------------------------------------------------------------------

struct SceneShape {
    std::string category_id;
    double cx = 0.5, cy = 0.5;  // center, relative to width/height
    double size = 0.3;          // relative to min(width, height)
};

struct SceneSpec {
    int width = 448;
    int height = 448;
    std::uint64_t seed = 0;  // drives noise and accent placement
    std::vector<SceneShape> shapes;

    static SceneSpec from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

struct RenderedScene {
    Image image;
    IndexGrid labels;  // expanded-vocabulary indices
};

// Deterministic rasterization: shapes over background (later shapes on top),
// accents and noise from the scene seed. Labels use the expanded vocabulary.
RenderedScene render_scene(const SceneSpec& spec, const SyntheticWorld& world,
                           const Vocabulary& vocabulary);

// Random 1-2 shape scene for dataset index `index`.
SceneSpec make_scene(const SyntheticWorld& world, std::uint64_t dataset_seed, int index,
                     int width = 448, int height = 448);

// --- Pipeline adapters ---------------------------------------------------------

// Text-to-image stand-in: renders the prompted category's shape with jittered
// pose plus the standard background, and emits boundary-aware attribution maps
// (1 inside the shape, exponential falloff outside) at two resolutions.
class SyntheticGenerator : public GeneratorAdapter {
public:
    SyntheticGenerator(SyntheticWorld world, Vocabulary vocabulary, GeneratorConfig config,
                       std::string prompt_template = std::string(kDefaultPromptTemplate));

    std::string name() const override { return "synthetic-shapes"; }
    std::string config_fingerprint() const override;
    GeneratedSample generate(const std::string& prompt, std::uint64_t seed) override;

private:
    SyntheticWorld world_;
    GeneratorConfig config_;
    // prompt string -> style index, precomputed from the vocabulary
    std::vector<std::pair<std::string, std::size_t>> prompt_index_;
};

// Mask proposer that matches the world palette: one proposal per category
// color plus the complement of all of them.
class PaletteProposer : public ProposerAdapter {
public:
    explicit PaletteProposer(SyntheticWorld world, int color_tolerance = 40);
    std::string name() const override { return "palette-matcher"; }
    std::vector<BinaryMask> propose(const Image& image) override;

private:
    SyntheticWorld world_;
    int tolerance_;
};

// Image-text affinity stand-in: every mentioned category contributes a score
// that saturates once its color is visibly present (so small shapes count as
// much as large ones), minus a small per-mention cost that penalizes naming
// absent categories. The best combination prompt therefore names exactly the
// categories present.
class PaletteAffinityScorer : public PrefilterScorer {
public:
    PaletteAffinityScorer(SyntheticWorld world, Vocabulary vocabulary, int color_tolerance = 40,
                          double mention_cost = 0.005);
    std::string name() const override { return "palette-affinity"; }
    std::vector<double> score(const Image& image, const std::vector<std::string>& prompts) override;

private:
    SyntheticWorld world_;
    std::vector<std::string> queries_;  // category query text per style, in style order
    int tolerance_;
    double mention_cost_;
};

// Dense color embedding: per patch, the mean RGB is encoded against a 4x4x4
// lattice of Gaussian anchors (dim 64). Smooth in color space, so nearby hues
// score high cosine against each other — bandwidth controls how sharply the
// space separates the world's colors.
class ColorHashExtractor : public ExtractorAdapter {
public:
    explicit ColorHashExtractor(const ExtractorConfig& config);

    FeatureMap extract(const Image& image) override;
    std::string space_id() const override { return space_id_; }
    int dim() const override { return 64; }

    static ExtractorConfig default_config(int patch = 8, double sigma = 60.0);

private:
    std::string space_id_;
    int patch_ = 8;
    double sigma_ = 60.0;
};

// Registers the "color-hash" extractor kind with the global registry.
// Safe to call more than once.
void register_synthetic_components();

}  // namespace protoseg
