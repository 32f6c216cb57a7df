#include "protoseg/region.hpp"

#include "protoseg/common.hpp"

namespace protoseg {

std::optional<double> mask_attribution_score(const BinaryMask& mask,
                                             const FloatGrid& attribution) {
    require(mask.width == attribution.width && mask.height == attribution.height,
            "mask_attribution_score: mask and attribution sizes differ");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < mask.values.size(); ++i) {
        if (mask.values[i]) {
            sum += attribution.values[i];
            ++count;
        }
    }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
}

std::optional<FgBgMasks> select_fg_bg(const std::vector<BinaryMask>& proposals,
                                      const FloatGrid& attribution) {
    int best_fg = -1, best_bg = -1;
    double best_fg_score = 0.0, best_bg_score = 0.0;
    for (int i = 0; i < static_cast<int>(proposals.size()); ++i) {
        auto score = mask_attribution_score(proposals[i], attribution);
        if (!score) continue;
        if (best_fg < 0 || *score > best_fg_score) {
            best_fg = i;
            best_fg_score = *score;
        }
        if (best_bg < 0 || *score < best_bg_score) {
            best_bg = i;
            best_bg_score = *score;
        }
    }
    if (best_fg < 0) return std::nullopt;

    FgBgMasks out;
    out.fg = proposals[best_fg];
    out.bg = proposals[best_bg];
    out.fg_index = best_fg;
    out.bg_index = best_bg;
    out.degenerate = best_fg == best_bg;
    return out;
}

FgBgMasks fallback_masks(const FloatGrid& attribution, FallbackThresholds thresholds) {
    FgBgMasks out;
    out.fg = BinaryMask(attribution.width, attribution.height);
    out.bg = BinaryMask(attribution.width, attribution.height);
    for (std::size_t i = 0; i < attribution.values.size(); ++i) {
        const float a = attribution.values[i];
        out.fg.values[i] = a > thresholds.fg ? 1 : 0;
        out.bg.values[i] = a < thresholds.bg ? 1 : 0;
    }
    out.provenance = "fallback";
    return out;
}

FgBgMasks propose_fg_bg(ProposerAdapter& proposer, const Image& image,
                        const FloatGrid& attribution, FallbackThresholds thresholds) {
    require(image.width == attribution.width && image.height == attribution.height,
            "propose_fg_bg: image and attribution sizes differ");
    std::vector<BinaryMask> proposals = proposer.propose(image);
    for (const BinaryMask& m : proposals) {
        require(m.width == image.width && m.height == image.height,
                "propose_fg_bg: proposal size differs from image size");
    }
    auto selected = select_fg_bg(proposals, attribution);
    if (!selected || selected->degenerate) {
        return fallback_masks(attribution, thresholds);
    }
    selected->provenance = proposer.name();
    return std::move(*selected);
}

}  // namespace protoseg
