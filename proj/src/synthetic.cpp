#include "protoseg/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "protoseg/common.hpp"
#include "protoseg/rng.hpp"

namespace protoseg {

using nlohmann::json;

namespace {

int channel_diff(std::uint8_t a, std::uint8_t b) {
    return std::abs(static_cast<int>(a) - static_cast<int>(b));
}

// Chebyshev distance in RGB; robust against the world's per-channel noise.
int color_distance(Rgb a, Rgb b) {
    return std::max({channel_diff(a.r, b.r), channel_diff(a.g, b.g), channel_diff(a.b, b.b)});
}

json rgb_to_json(Rgb c) { return json::array({c.r, c.g, c.b}); }

json world_to_json(const SyntheticWorld& w) {
    json j;
    j["background_base"] = rgb_to_json(w.background_base);
    j["noise_amplitude"] = w.noise_amplitude;
    j["accent_count"] = w.accent_count;
    j["accent_radius_frac"] = w.accent_radius_frac;
    json styles = json::array();
    for (const auto& s : w.styles) {
        json e;
        e["category_id"] = s.category_id;
        e["shape"] = s.shape;
        e["color"] = rgb_to_json(s.color);
        e["accent"] = rgb_to_json(s.accent);
        styles.push_back(std::move(e));
    }
    j["styles"] = std::move(styles);
    return j;
}

}  // namespace

const SyntheticCategoryStyle* SyntheticWorld::find(const std::string& category_id) const {
    for (const auto& s : styles) {
        if (s.category_id == category_id) return &s;
    }
    return nullptr;
}

const SyntheticCategoryStyle* SyntheticWorld::find_by_query(const std::string& query_text) const {
    // Query text convention: "<color> <shape>" where the id is the slug.
    for (const auto& s : styles) {
        if (slugify(query_text) == s.category_id) return &s;
    }
    return nullptr;
}

SyntheticWorld SyntheticWorld::standard() {
    SyntheticWorld w;
    w.styles = {
        {"red-disk", "disk", Rgb{200, 40, 40}, Rgb{250, 60, 50}},
        {"green-square", "square", Rgb{40, 170, 60}, Rgb{90, 190, 50}},
        {"blue-triangle", "triangle", Rgb{40, 80, 220}, Rgb{90, 100, 210}},
    };
    return w;
}

Vocabulary SyntheticWorld::standard_vocabulary(std::uint64_t global_seed) {
    Vocabulary v;
    v.categories = {
        {"red-disk", "red disk", Tag::Thing, 0},
        {"green-square", "green square", Tag::Thing, 0},
        {"blue-triangle", "blue triangle", Tag::Thing, 0},
    };
    assign_default_seeds(v, global_seed);
    return v;
}

double shape_sdf(const std::string& shape, double x, double y, double cx, double cy,
                 double size) {
    const double dx = x - cx, dy = y - cy;
    if (shape == "disk") {
        return std::sqrt(dx * dx + dy * dy) - size;
    }
    if (shape == "square") {
        return std::max(std::abs(dx), std::abs(dy)) - size;
    }
    if (shape == "triangle") {
        // Equilateral, point up (screen y grows downward), circumradius `size`.
        const double s3 = std::sqrt(3.0) / 2.0;
        const double vx[3] = {cx, cx + size * s3, cx - size * s3};
        const double vy[3] = {cy - size, cy + size / 2.0, cy + size / 2.0};
        double d = -1e30;
        for (int i = 0; i < 3; ++i) {
            const int j = (i + 1) % 3;
            double ex = vx[j] - vx[i], ey = vy[j] - vy[i];
            const double len = std::sqrt(ex * ex + ey * ey);
            // Outward normal: perpendicular pointing away from the centroid.
            double nx = ey / len, ny = -ex / len;
            if (nx * (cx - vx[i]) + ny * (cy - vy[i]) > 0.0) {
                nx = -nx;
                ny = -ny;
            }
            d = std::max(d, nx * (x - vx[i]) + ny * (y - vy[i]));
        }
        return d;
    }
    throw Error("unknown shape '" + shape + "'");
}

SceneSpec SceneSpec::from_json(const json& doc) {
    SceneSpec spec;
    spec.width = doc.at("width").get<int>();
    spec.height = doc.at("height").get<int>();
    spec.seed = doc.at("seed").get<std::uint64_t>();
    for (const json& s : doc.at("shapes")) {
        SceneShape shape;
        shape.category_id = s.at("category_id").get<std::string>();
        shape.cx = s.at("cx").get<double>();
        shape.cy = s.at("cy").get<double>();
        shape.size = s.at("size").get<double>();
        spec.shapes.push_back(std::move(shape));
    }
    require(spec.width > 0 && spec.height > 0, "scene spec has a bad size");
    return spec;
}

json SceneSpec::to_json() const {
    json doc;
    doc["width"] = width;
    doc["height"] = height;
    doc["seed"] = seed;
    json shapes_json = json::array();
    for (const SceneShape& s : shapes) {
        json e;
        e["category_id"] = s.category_id;
        e["cx"] = s.cx;
        e["cy"] = s.cy;
        e["size"] = s.size;
        shapes_json.push_back(std::move(e));
    }
    doc["shapes"] = std::move(shapes_json);
    return doc;
}

namespace {

void paint_base_and_accents(Image& image, const SyntheticWorld& world, std::uint64_t seed) {
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) image.set(x, y, world.background_base);
    }
    if (world.styles.empty()) return;
    SplitMix64 rng(hash_combine(seed, fnv1a64("accents")));
    const double base_radius = world.accent_radius_frac * std::min(image.width, image.height);
    for (int i = 0; i < world.accent_count; ++i) {
        const SyntheticCategoryStyle& style = world.styles[i % world.styles.size()];
        const double cx = rng.next_double() * image.width;
        const double cy = rng.next_double() * image.height;
        const double radius = base_radius * (0.7 + 0.6 * rng.next_double());
        const int x0 = std::max(0, static_cast<int>(cx - radius) - 1);
        const int x1 = std::min(image.width - 1, static_cast<int>(cx + radius) + 1);
        const int y0 = std::max(0, static_cast<int>(cy - radius) - 1);
        const int y1 = std::min(image.height - 1, static_cast<int>(cy + radius) + 1);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                if (shape_sdf("disk", x + 0.5, y + 0.5, cx, cy, radius) <= 0.0) {
                    image.set(x, y, style.accent);
                }
            }
        }
    }
}

void paint_shape(Image& image, IndexGrid* labels, const SyntheticCategoryStyle& style, double cx,
                 double cy, double size, std::uint16_t label) {
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            if (shape_sdf(style.shape, x + 0.5, y + 0.5, cx, cy, size) <= 0.0) {
                image.set(x, y, style.color);
                if (labels != nullptr) labels->at(x, y) = label;
            }
        }
    }
}

void apply_noise(Image& image, int amplitude, std::uint64_t seed) {
    if (amplitude <= 0) return;
    const std::uint64_t base = hash_combine(seed, fnv1a64("noise"));
    const std::uint32_t span = static_cast<std::uint32_t>(2 * amplitude + 1);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            SplitMix64 rng(
                hash_combine(base, static_cast<std::uint64_t>(y) * image.width + x));
            std::uint8_t* p = &image.pixels[(static_cast<std::size_t>(y) * image.width + x) * 3];
            for (int c = 0; c < 3; ++c) {
                const int offset = static_cast<int>(rng.next_below(span)) - amplitude;
                p[c] = static_cast<std::uint8_t>(std::clamp(static_cast<int>(p[c]) + offset, 0, 255));
            }
        }
    }
}

}  // namespace

RenderedScene render_scene(const SceneSpec& spec, const SyntheticWorld& world,
                           const Vocabulary& vocabulary) {
    require(vocabulary.is_expanded(), "render_scene: vocabulary must be expanded");
    RenderedScene out;
    out.image = Image(spec.width, spec.height);
    out.labels = IndexGrid(spec.width, spec.height, 0);
    paint_base_and_accents(out.image, world, spec.seed);
    for (const SceneShape& shape : spec.shapes) {
        const SyntheticCategoryStyle* style = world.find(shape.category_id);
        require(style != nullptr,
                "render_scene: no style for category '" + shape.category_id + "'");
        int label = -1;
        for (std::size_t i = 0; i < vocabulary.categories.size(); ++i) {
            if (vocabulary.categories[i].id == shape.category_id) {
                label = static_cast<int>(i);
                break;
            }
        }
        require(label > 0, "render_scene: category '" + shape.category_id +
                               "' is not in the vocabulary");
        paint_shape(out.image, &out.labels, *style, shape.cx * spec.width, shape.cy * spec.height,
                    shape.size * std::min(spec.width, spec.height),
                    static_cast<std::uint16_t>(label));
    }
    apply_noise(out.image, world.noise_amplitude, spec.seed);
    return out;
}

SceneSpec make_scene(const SyntheticWorld& world, std::uint64_t dataset_seed, int index,
                     int width, int height) {
    require(!world.styles.empty(), "make_scene: world has no styles");
    SplitMix64 rng(hash_combine(dataset_seed, static_cast<std::uint64_t>(index)));
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.seed = rng.next();

    const int n_shapes = 1 + static_cast<int>(rng.next_below(2));
    const std::size_t first = rng.next_below(world.styles.size());
    std::size_t second = first;
    if (world.styles.size() > 1) {
        second = (first + 1 + rng.next_below(world.styles.size() - 1)) % world.styles.size();
    }
    // Left / right halves so two shapes never overlap.
    for (int i = 0; i < n_shapes; ++i) {
        SceneShape shape;
        shape.category_id = world.styles[i == 0 ? first : second].category_id;
        const double lo = (n_shapes == 1) ? 0.38 : (i == 0 ? 0.24 : 0.66);
        shape.cx = lo + 0.10 * rng.next_double();
        shape.cy = 0.34 + 0.32 * rng.next_double();
        shape.size = 0.14 + 0.06 * rng.next_double();
        spec.shapes.push_back(shape);
    }
    return spec;
}

// --- SyntheticGenerator --------------------------------------------------------

SyntheticGenerator::SyntheticGenerator(SyntheticWorld world, Vocabulary vocabulary,
                                       GeneratorConfig config, std::string prompt_template)
    : world_(std::move(world)), config_(std::move(config)) {
    require(!world_.styles.empty(), "synthetic generator needs at least one style");
    for (std::size_t i = 0; i < world_.styles.size(); ++i) {
        const Category* c = vocabulary.find(world_.styles[i].category_id);
        if (c == nullptr) continue;  // style without a vocabulary entry is unreachable
        prompt_index_.emplace_back(make_prompt(prompt_template, c->query_text), i);
    }
    require(!prompt_index_.empty(),
            "synthetic generator: vocabulary shares no category with the world");
}

std::string SyntheticGenerator::config_fingerprint() const {
    json j;
    j["adapter"] = name();
    j["generator"] = json::parse(config_.canonical_json());
    j["world"] = world_to_json(world_);
    return j.dump();
}

GeneratedSample SyntheticGenerator::generate(const std::string& prompt, std::uint64_t seed) {
    const SyntheticCategoryStyle* style = nullptr;
    for (const auto& [known_prompt, index] : prompt_index_) {
        if (known_prompt == prompt) {
            style = &world_.styles[index];
            break;
        }
    }
    require(style != nullptr, "synthetic generator cannot draw for prompt '" + prompt + "'");

    const int side = config_.image_size;
    require(side > 0, "synthetic generator: bad image size");
    SplitMix64 rng(seed);
    const double cx = (0.5 + 0.24 * (rng.next_double() - 0.5)) * side;
    const double cy = (0.5 + 0.24 * (rng.next_double() - 0.5)) * side;
    const double size = (0.26 + 0.12 * rng.next_double()) * side;

    GeneratedSample sample;
    sample.image = Image(side, side);
    paint_base_and_accents(sample.image, world_, seed);
    paint_shape(sample.image, nullptr, *style, cx, cy, size, 0);
    apply_noise(sample.image, world_.noise_amplitude, seed);

    // Attribution: saturated inside the shape, exponential falloff outside,
    // emitted at full and half resolution.
    const double tau = 0.15 * size;
    FloatGrid full(side, side);
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const double d = shape_sdf(style->shape, x + 0.5, y + 0.5, cx, cy, size);
            full.at(x, y) = d <= 0.0 ? 1.0f : static_cast<float>(std::exp(-d / tau));
        }
    }
    const int half_side = std::max(1, side / 2);
    FloatGrid half(half_side, half_side);
    for (int y = 0; y < half_side; ++y) {
        for (int x = 0; x < half_side; ++x) {
            const double fx = (x + 0.5) * side / half_side - 0.5;
            const double fy = (y + 0.5) * side / half_side - 0.5;
            const double d = shape_sdf(style->shape, fx + 0.5, fy + 0.5, cx, cy, size);
            half.at(x, y) = d <= 0.0 ? 1.0f : static_cast<float>(std::exp(-d / tau));
        }
    }
    sample.attention.push_back(std::move(full));
    sample.attention.push_back(std::move(half));
    return sample;
}

// --- PaletteProposer -----------------------------------------------------------

PaletteProposer::PaletteProposer(SyntheticWorld world, int color_tolerance)
    : world_(std::move(world)), tolerance_(color_tolerance) {
    require(tolerance_ >= 0, "palette proposer: negative tolerance");
}

std::vector<BinaryMask> PaletteProposer::propose(const Image& image) {
    std::vector<BinaryMask> proposals;
    BinaryMask rest(image.width, image.height, 1);
    for (const SyntheticCategoryStyle& style : world_.styles) {
        BinaryMask mask(image.width, image.height);
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) {
                if (color_distance(image.at(x, y), style.color) <= tolerance_) {
                    mask.at(x, y) = 1;
                    rest.at(x, y) = 0;
                }
            }
        }
        proposals.push_back(std::move(mask));
    }
    proposals.push_back(std::move(rest));
    return proposals;
}

// --- PaletteAffinityScorer -------------------------------------------------------

PaletteAffinityScorer::PaletteAffinityScorer(SyntheticWorld world, Vocabulary vocabulary,
                                             int color_tolerance, double mention_cost)
    : world_(std::move(world)), tolerance_(color_tolerance), mention_cost_(mention_cost) {
    queries_.resize(world_.styles.size());
    for (std::size_t i = 0; i < world_.styles.size(); ++i) {
        const Category* c = vocabulary.find(world_.styles[i].category_id);
        queries_[i] = c != nullptr ? c->query_text : world_.styles[i].category_id;
    }
}

std::vector<double> PaletteAffinityScorer::score(const Image& image,
                                                 const std::vector<std::string>& prompts) {
    // Pixel fraction per style color, computed once per image.
    std::vector<double> fraction(world_.styles.size(), 0.0);
    const double total = static_cast<double>(image.width) * image.height;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const Rgb pixel = image.at(x, y);
            for (std::size_t s = 0; s < world_.styles.size(); ++s) {
                if (color_distance(pixel, world_.styles[s].color) <= tolerance_) {
                    fraction[s] += 1.0;
                    break;
                }
            }
        }
    }
    for (double& f : fraction) f /= total;

    // Affinity saturates once a color is visibly present: a small-but-present
    // shape should score like a large one, the way a real image-text model
    // answers "is there a <c> in this image" rather than "how big is it".
    constexpr double kPresenceFloor = 0.01;  // fraction at which presence saturates
    constexpr double kPresenceGain = 4.0;    // saturated affinity per present mention
    std::vector<double> scores;
    scores.reserve(prompts.size());
    for (const std::string& prompt : prompts) {
        double score = 0.0;
        for (std::size_t s = 0; s < queries_.size(); ++s) {
            if (prompt.find(queries_[s]) != std::string::npos) {
                score += kPresenceGain * std::min(1.0, fraction[s] / kPresenceFloor) -
                         mention_cost_;
            }
        }
        scores.push_back(score);
    }
    return scores;
}

// --- ColorHashExtractor ----------------------------------------------------------

ColorHashExtractor::ColorHashExtractor(const ExtractorConfig& config) {
    require(config.kind == "color-hash",
            "color-hash extractor constructed from kind '" + config.kind + "'");
    patch_ = config.params.value("patch", 8);
    sigma_ = config.params.value("sigma", 60.0);
    require(patch_ >= 1, "color-hash: patch must be at least 1");
    require(sigma_ > 0.0, "color-hash: sigma must be positive");
    space_id_ = config.space_id();
}

ExtractorConfig ColorHashExtractor::default_config(int patch, double sigma) {
    ExtractorConfig config;
    config.kind = "color-hash";
    config.params["patch"] = patch;
    config.params["sigma"] = sigma;
    return config;
}

FeatureMap ColorHashExtractor::extract(const Image& image) {
    require(!image.empty(), "color-hash: empty image");
    const int grid_w = (image.width + patch_ - 1) / patch_;
    const int grid_h = (image.height + patch_ - 1) / patch_;
    FeatureMap fm(grid_h, grid_w, 64);
    fm.space_id = space_id_;
    fm.source_width = image.width;
    fm.source_height = image.height;

    // Anchor lattice: 4 positions per channel at 32, 96, 160, 224.
    static constexpr double kAnchors[4] = {32.0, 96.0, 160.0, 224.0};
    const double inv_two_sigma_sq = 1.0 / (2.0 * sigma_ * sigma_);

    for (int gy = 0; gy < grid_h; ++gy) {
        for (int gx = 0; gx < grid_w; ++gx) {
            const int x0 = gx * patch_, y0 = gy * patch_;
            const int x1 = std::min(image.width, x0 + patch_);
            const int y1 = std::min(image.height, y0 + patch_);
            double r = 0.0, g = 0.0, b = 0.0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    const Rgb p = image.at(x, y);
                    r += p.r;
                    g += p.g;
                    b += p.b;
                }
            }
            const double n = static_cast<double>((x1 - x0) * (y1 - y0));
            r /= n;
            g /= n;
            b /= n;

            auto cell = fm.at(gx, gy);
            int k = 0;
            for (int ri = 0; ri < 4; ++ri) {
                const double dr = r - kAnchors[ri];
                for (int gi = 0; gi < 4; ++gi) {
                    const double dg = g - kAnchors[gi];
                    for (int bi = 0; bi < 4; ++bi) {
                        const double db = b - kAnchors[bi];
                        const double dist_sq = dr * dr + dg * dg + db * db;
                        cell[k++] = static_cast<float>(std::exp(-dist_sq * inv_two_sigma_sq));
                    }
                }
            }
        }
    }
    return fm;
}

void register_synthetic_components() {
    ExtractorRegistry& registry = ExtractorRegistry::instance();
    if (registry.known("color-hash")) return;
    registry.register_kind(
        "color-hash",
        [](const ExtractorConfig& config) {
            return std::make_unique<ColorHashExtractor>(config);
        },
        "Patchwise RGB embedding against a 4x4x4 Gaussian anchor lattice (dim 64); "
        "params: patch (pixels per cell, default 8), sigma (color bandwidth, default 60).");
}

}  // namespace protoseg
