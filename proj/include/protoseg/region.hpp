#pragma once

#include <optional>
#include <string>
#include <vector>

#include "protoseg/image.hpp"

namespace protoseg {

// Foreground/background split of one support image.
struct FgBgMasks {
    BinaryMask fg;
    BinaryMask bg;
    int fg_index = -1;  // index into the proposal list; -1 when thresholded
    int bg_index = -1;
    bool degenerate = false;  // fg and bg resolved to the same proposal
    std::string provenance;   // proposer name, or "fallback"
};

// Produces class-agnostic candidate masks for an image (all masks at image
// resolution). Implementations range from trivial thresholders to external
// mask generators.
class ProposerAdapter {
public:
    virtual ~ProposerAdapter() = default;
    virtual std::string name() const = 0;
    virtual std::vector<BinaryMask> propose(const Image& image) = 0;
};

// Mean attribution inside the mask (sum over masked pixels / masked pixel
// count). nullopt for an empty mask.
std::optional<double> mask_attribution_score(const BinaryMask& mask, const FloatGrid& attribution);

// Scores every non-empty proposal and picks foreground = highest score,
// background = lowest. Ties keep the earliest proposal. nullopt when nothing
// is scorable; `degenerate` is set when both picks land on the same proposal.
std::optional<FgBgMasks> select_fg_bg(const std::vector<BinaryMask>& proposals,
                                      const FloatGrid& attribution);

struct FallbackThresholds {
    float fg = 0.5f;  // attribution strictly above -> foreground
    float bg = 0.2f;  // attribution strictly below -> background
};

// Thresholds the attribution map directly, for when no proposer is available
// or its proposals are unusable.
FgBgMasks fallback_masks(const FloatGrid& attribution, FallbackThresholds thresholds = {});

// Full policy: run the proposer, select by attribution, and fall back to
// thresholding when the proposer yields nothing usable or a degenerate split.
FgBgMasks propose_fg_bg(ProposerAdapter& proposer, const Image& image,
                        const FloatGrid& attribution, FallbackThresholds thresholds = {});

}  // namespace protoseg
