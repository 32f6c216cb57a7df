#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "protoseg/image.hpp"
#include "protoseg/region.hpp"
#include "protoseg/vocabulary.hpp"

namespace protoseg {

// Settings forwarded to the image generator backing a support set.
struct GeneratorConfig {
    double guidance_scale = 8.0;
    int steps = 30;
    std::string sampler = "dpm-solver";
    int batch_size = 16;
    int image_size = 512;

    std::string canonical_json() const;
};

// One raw draw from the generator: the image plus the attention maps that
// attribute image regions to the category tokens of the prompt. Maps may come
// at several resolutions; aggregate_attribution() fuses them.
struct GeneratedSample {
    Image image;
    std::vector<FloatGrid> attention;
};

class GeneratorAdapter {
public:
    virtual ~GeneratorAdapter() = default;
    virtual std::string name() const = 0;
    // Canonical description of everything that affects outputs; hashed into
    // cache keys so stale caches are never reused.
    virtual std::string config_fingerprint() const = 0;
    virtual GeneratedSample generate(const std::string& prompt, std::uint64_t seed) = 0;
};

// One support image with its fused token-attribution map (same resolution as
// the image, values in [0, 1]).
struct SupportSample {
    Image image;
    FloatGrid attribution;
    std::uint64_t seed = 0;
};

struct SupportSet {
    std::string category_id;
    std::string prompt;
    std::uint64_t seed = 0;  // category-level seed the per-sample seeds derive from
    std::string adapter_fingerprint;
    std::vector<SupportSample> samples;
};

// Resizes every attention map to `width` x `height` (bilinear), sums them, and
// min-max normalizes the sum to [0, 1]. A constant sum maps to all zeros.
FloatGrid aggregate_attribution(const std::vector<FloatGrid>& maps, int width, int height);

// Seed for sample `index` of a category whose own seed is `category_seed`.
std::uint64_t support_sample_seed(std::uint64_t category_seed, int index);

// Draws `n` samples for the category through the adapter. Prompt comes from
// `prompt_template` ("<c>" replaced by the category query text).
SupportSet sample_support_set(GeneratorAdapter& adapter, const Category& category, int n,
                              const std::string& prompt_template = std::string(kDefaultPromptTemplate));

// --- Disk cache -------------------------------------------------------------
//
// Layout: <cache_dir>/<key>/manifest.json
//                        /sample_0000.png        (support image)
//                        /sample_0000.attr.grid  (fused attribution)
// where <key> identifies (category_id, seed, n, adapter fingerprint). The
// manifest records a CRC-32 per file; any mismatch invalidates the entry.

std::string support_cache_key(const std::string& category_id, std::uint64_t seed, int n,
                              const std::string& adapter_fingerprint);
std::string support_sample_basename(int index);  // "sample_0007"

void save_support_set(const SupportSet& set, const std::filesystem::path& cache_dir);

// Returns the cached set if present and every checksum matches; nullopt (with
// a warning for corrupt entries) otherwise.
std::optional<SupportSet> load_support_set(const std::filesystem::path& cache_dir,
                                           const std::string& category_id, std::uint64_t seed,
                                           int n, const std::string& adapter_fingerprint);

// load_support_set, falling back to sampling + saving on miss.
SupportSet sample_support_set_cached(GeneratorAdapter& adapter, const Category& category, int n,
                                     const std::filesystem::path& cache_dir,
                                     const std::string& prompt_template = std::string(kDefaultPromptTemplate));

// Persists the per-sample fg/bg masks next to the cached support set
// (sample_NNNN.fg.mask / .bg.mask plus a checksummed masks.json), so that
// explanations can show which support regions fed a prototype.
void save_support_masks(const std::filesystem::path& cache_dir, const SupportSet& set,
                        const std::vector<FgBgMasks>& masks);

std::optional<FgBgMasks> load_support_mask(const std::filesystem::path& cache_dir,
                                           const std::string& category_id, std::uint64_t seed,
                                           int n, const std::string& adapter_fingerprint,
                                           int index);

}  // namespace protoseg
