#include "protoseg/explanation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "protoseg/common.hpp"
#include "protoseg/support.hpp"

namespace protoseg {

using nlohmann::json;

FileSupportStore::FileSupportStore(std::filesystem::path cache_dir, Vocabulary vocabulary, int n,
                                   std::string adapter_fingerprint)
    : cache_dir_(std::move(cache_dir)), vocabulary_(std::move(vocabulary)), n_(n),
      fingerprint_(std::move(adapter_fingerprint)) {}

int FileSupportStore::sample_count(const std::string& category_id) {
    return vocabulary_.find(category_id) != nullptr ? n_ : 0;
}

std::optional<Image> FileSupportStore::support_image(const std::string& category_id, int index) {
    const Category* c = vocabulary_.find(category_id);
    if (c == nullptr || index < 0 || index >= n_) return std::nullopt;
    auto set = load_support_set(cache_dir_, category_id, c->seed, n_, fingerprint_);
    if (!set) return std::nullopt;
    return set->samples[static_cast<std::size_t>(index)].image;
}

std::optional<BinaryMask> FileSupportStore::support_region(const std::string& category_id,
                                                           int index, Polarity polarity) {
    const Category* c = vocabulary_.find(category_id);
    if (c == nullptr) return std::nullopt;
    auto masks = load_support_mask(cache_dir_, category_id, c->seed, n_, fingerprint_, index);
    if (!masks) return std::nullopt;
    return polarity == Polarity::Fg ? masks->fg : masks->bg;
}

namespace {

// The winning cluster's share of one support region: the region's feature
// cells whose nearest part centroid (same category, polarity and space;
// squared euclidean, lowest cluster on ties, as in clustering) is
// `target_cluster`, upsampled back to region resolution. nullopt when the
// cluster owns no cell of this sample.
std::optional<BinaryMask> part_membership(const Image& image, const BinaryMask& region,
                                          const std::vector<const Prototype*>& parts,
                                          int target_cluster, ExtractorAdapter& extractor) {
    const FeatureMap fmap = extract(image, extractor);
    const BinaryMask cells = resize_nearest(region, fmap.width, fmap.height);
    BinaryMask member(fmap.width, fmap.height);
    bool any = false;
    for (int cy = 0; cy < fmap.height; ++cy) {
        for (int cx = 0; cx < fmap.width; ++cx) {
            if (!cells.at(cx, cy)) continue;
            const auto v = fmap.at(cx, cy);
            double best = std::numeric_limits<double>::infinity();
            int best_cluster = -1;
            for (const Prototype* p : parts) {
                double d = 0.0;
                for (int i = 0; i < fmap.dim; ++i) {
                    const double diff = static_cast<double>(v[static_cast<std::size_t>(i)]) -
                                        p->values[static_cast<std::size_t>(i)];
                    d += diff * diff;
                }
                if (d < best) {
                    best = d;
                    best_cluster = p->cluster_index;
                }
            }
            if (best_cluster != target_cluster) continue;
            member.at(cx, cy) = 1;
            any = true;
        }
    }
    if (!any) return std::nullopt;
    return resize_nearest(member, region.width, region.height);
}

// The category's part prototypes of one polarity in one space, in ascending
// cluster order (their build order).
std::vector<const Prototype*> part_centroids(const PrototypeBank& bank,
                                             const std::string& category_id,
                                             const std::string& space_id, Polarity polarity) {
    std::vector<const Prototype*> parts;
    const std::vector<Prototype>* protos = bank.find(category_id, space_id);
    if (protos == nullptr) return parts;
    for (const Prototype& p : *protos) {
        if (p.kind == ProtoKind::Part && p.polarity == polarity) parts.push_back(&p);
    }
    return parts;
}

}  // namespace

Explanation explain_pixel(const SegmentationResult& result, const Vocabulary& vocabulary, int x,
                          int y, SupportStore& store, int max_evidence, const PrototypeBank* bank,
                          ExtractorAdapter* extractor) {
    require(vocabulary.is_expanded(), "explain_pixel: vocabulary must be expanded");
    require(x >= 0 && x < result.width && y >= 0 && y < result.height,
            "explain_pixel: pixel is outside the result");
    require(max_evidence >= 1, "explain_pixel: max_evidence must be at least 1");

    Explanation out;
    out.x = x;
    out.y = y;
    out.label = result.labels.at(x, y);
    require(out.label < vocabulary.categories.size(),
            "explain_pixel: label is outside the vocabulary");
    out.category_id = vocabulary.categories[out.label].id;

    // The class row this label corresponds to (background is row 0).
    int class_index = 0;
    if (out.label != 0) {
        for (std::size_t i = 1; i < result.class_list.size(); ++i) {
            if (result.class_list[i] == out.category_id) {
                class_index = static_cast<int>(i);
                break;
            }
        }
        require(class_index != 0, "explain_pixel: labeled class is not in the class list");
    }
    out.score = result.scores[static_cast<std::size_t>(class_index)].at(x, y);

    const std::uint16_t winner = result.winner.at(x, y);
    if (winner == kNoWinner) return out;  // e.g. background in fg-threshold mode
    require(winner < result.pool_refs.size(), "explain_pixel: winner index out of range");
    out.has_prototype = true;
    out.prototype = result.pool_refs[winner];

    // Evidence: the support regions the winning prototype was built from.
    std::vector<int> sample_indices;
    if (out.prototype.kind == ProtoKind::Instance) {
        sample_indices.push_back(out.prototype.sample_index);
    } else {
        const int count = store.sample_count(out.prototype.category_id);
        for (int i = 0; i < count && static_cast<int>(sample_indices.size()) < max_evidence; ++i) {
            sample_indices.push_back(i);
        }
    }
    std::vector<const Prototype*> parts;
    if (out.prototype.kind == ProtoKind::Part && bank != nullptr && extractor != nullptr) {
        parts = part_centroids(*bank, out.prototype.category_id, extractor->space_id(),
                               out.prototype.polarity);
    }
    for (int index : sample_indices) {
        auto image = store.support_image(out.prototype.category_id, index);
        auto region = store.support_region(out.prototype.category_id, index,
                                           out.prototype.polarity);
        if (!image || !region) continue;
        if (!parts.empty()) {
            auto member = part_membership(*image, *region, parts, out.prototype.cluster_index,
                                          *extractor);
            if (!member) continue;  // this cluster owns no cell of this sample
            region = std::move(member);
        }
        EvidenceItem item;
        item.sample_index = index;
        item.image = std::move(*image);
        item.region = std::move(*region);
        out.evidence.push_back(std::move(item));
    }
    return out;
}

json explanation_to_json(const Explanation& e) {
    json doc;
    doc["x"] = e.x;
    doc["y"] = e.y;
    doc["label"] = e.label;
    doc["category_id"] = e.category_id;
    doc["score"] = e.score;
    if (e.has_prototype) {
        json p;
        p["category_id"] = e.prototype.category_id;
        p["polarity"] = std::string(polarity_name(e.prototype.polarity));
        p["kind"] = std::string(proto_kind_name(e.prototype.kind));
        p["sample_index"] = e.prototype.sample_index;
        p["cluster_index"] = e.prototype.cluster_index;
        doc["prototype"] = std::move(p);
    } else {
        doc["prototype"] = nullptr;
    }
    json evidence = json::array();
    for (const EvidenceItem& item : e.evidence) evidence.push_back(item.sample_index);
    doc["evidence_samples"] = std::move(evidence);
    return doc;
}

namespace {

void draw_crosshair(Image& canvas, int cx, int cy) {
    auto plot = [&](int x, int y, Rgb color) {
        if (x < 0 || x >= canvas.width || y < 0 || y >= canvas.height) return;
        canvas.set(x, y, color);
    };
    const Rgb white{255, 255, 255}, black{0, 0, 0};
    for (int d = -9; d <= 9; ++d) {
        // Black outline one pixel around the white cross arms.
        for (int off = -1; off <= 1; ++off) {
            plot(cx + d, cy + off, black);
            plot(cx + off, cy + d, black);
        }
    }
    for (int d = -8; d <= 8; ++d) {
        if (std::abs(d) < 3) continue;  // keep the queried pixel visible
        plot(cx + d, cy, white);
        plot(cx, cy + d, white);
    }
}

void blit(Image& canvas, const Image& tile, int x0, int y0) {
    for (int y = 0; y < tile.height; ++y) {
        for (int x = 0; x < tile.width; ++x) {
            canvas.set(x0 + x, y0 + y, tile.at(x, y));
        }
    }
}

Image label_panel(const SegmentationResult& result) {
    Image panel(result.width, result.height);
    for (int y = 0; y < result.height; ++y) {
        for (int x = 0; x < result.width; ++x) {
            const auto color = voc_palette_color(result.labels.at(x, y));
            panel.set(x, y, Rgb{color[0], color[1], color[2]});
        }
    }
    return panel;
}

// The support image with everything outside the region dimmed.
Image evidence_panel(const EvidenceItem& item) {
    Image panel = item.image;
    const BinaryMask region = resize_nearest(item.region, panel.width, panel.height);
    for (int y = 0; y < panel.height; ++y) {
        for (int x = 0; x < panel.width; ++x) {
            if (region.at(x, y)) continue;
            const Rgb p = panel.at(x, y);
            panel.set(x, y, Rgb{static_cast<std::uint8_t>(p.r / 3),
                                static_cast<std::uint8_t>(p.g / 3),
                                static_cast<std::uint8_t>(p.b / 3)});
        }
    }
    return panel;
}

}  // namespace

Image render_explanation(const Explanation& explanation, const SegmentationResult& result,
                         const Image& image, int cell_size) {
    require(cell_size >= 32, "render_explanation: cell size too small");
    require(image.width == result.width && image.height == result.height,
            "render_explanation: image and result sizes differ");

    std::vector<Image> panels;
    panels.push_back(resize_bilinear(image, cell_size, cell_size));
    panels.push_back(resize_bilinear(label_panel(result), cell_size, cell_size));
    const int marker_x = static_cast<int>((explanation.x + 0.5) * cell_size / result.width);
    const int marker_y = static_cast<int>((explanation.y + 0.5) * cell_size / result.height);
    draw_crosshair(panels[0], marker_x, marker_y);
    draw_crosshair(panels[1], marker_x, marker_y);
    for (const EvidenceItem& item : explanation.evidence) {
        panels.push_back(resize_bilinear(evidence_panel(item), cell_size, cell_size));
    }

    const int n = static_cast<int>(panels.size());
    const int cols = n > 3 ? 3 : n;
    const int rows = (n + cols - 1) / cols;
    Image canvas(cols * cell_size, rows * cell_size);
    for (int i = 0; i < n; ++i) {
        blit(canvas, panels[static_cast<std::size_t>(i)], (i % cols) * cell_size,
             (i / cols) * cell_size);
    }
    return canvas;
}

}  // namespace protoseg
