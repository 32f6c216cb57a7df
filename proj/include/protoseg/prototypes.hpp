#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "protoseg/features.hpp"
#include "protoseg/region.hpp"
#include "protoseg/support.hpp"
#include "protoseg/vocabulary.hpp"

namespace protoseg {

enum class Polarity : std::uint8_t { Fg = 1, Bg = 2 };
enum class ProtoKind : std::uint8_t { Class = 1, Instance = 2, Part = 4 };

std::string_view polarity_name(Polarity p);
std::string_view proto_kind_name(ProtoKind k);

// One reference vector in one feature space. Category and space ids are the
// bank keys; provenance below ties the vector back to the support evidence.
struct Prototype {
    std::vector<float> values;
    Polarity polarity = Polarity::Fg;
    ProtoKind kind = ProtoKind::Class;
    int sample_index = -1;          // instance: which support sample
    int cluster_index = -1;         // part: which cluster
    std::int64_t pixel_count = 0;   // feature-grid pixels backing this vector
};

struct PrototypeBank {
    // category id -> space id -> prototypes, in build order.
    std::map<std::string, std::map<std::string, std::vector<Prototype>>> entries;

    bool empty() const { return entries.empty(); }
    bool has(const std::string& category_id) const;
    const std::vector<Prototype>* find(const std::string& category_id,
                                       const std::string& space_id) const;
    std::vector<std::string> category_ids() const;
    std::vector<std::string> space_ids() const;  // union over categories, sorted
    // Registers prototypes for a (category, space) pair; refuses overwrites.
    void add(const std::string& category_id, const std::string& space_id,
             std::vector<Prototype> prototypes);
};

struct BankBuildOptions {
    int k_parts = 32;  // clusters per polarity when building part prototypes
};

// Builds every prototype for one category in one feature space from its
// support set and per-sample fg/bg masks:
//   - instance: masked mean feature per support sample (weight = pixel count)
//   - class: pixel-count-weighted mean of the instances
//   - part: k-means centroids over the pooled masked feature vectors
// computed for the foreground masks and again for the background masks.
// Output order: fg class, fg instances, fg parts, bg class, bg instances,
// bg parts. A category with no usable foreground evidence is an error; empty
// background evidence just yields no bg prototypes.
std::vector<Prototype> build_category_space(const SupportSet& set,
                                            const std::vector<FgBgMasks>& masks,
                                            ExtractorAdapter& extractor,
                                            const BankBuildOptions& options = {});

// build_category_space over several extractors, keyed by space id.
std::map<std::string, std::vector<Prototype>> build_category(
    const SupportSet& set, const std::vector<FgBgMasks>& masks,
    const std::vector<ExtractorAdapter*>& extractors, const BankBuildOptions& options = {});

// --- Stuff filtering ---------------------------------------------------------

struct StuffFilterStats {
    bool applied = false;  // false when the bank has no stuff-tagged category
    int dropped_stuff_bg = 0;
    int dropped_thing_bg = 0;
};

// Removes background prototypes that a stuff category makes redundant or
// misleading: every bg prototype of a stuff category is dropped, and a bg
// prototype of a thing category is dropped when its cosine similarity to any
// stuff fg prototype in the same space exceeds `threshold`. Foreground
// prototypes are never touched. A bank whose categories contain no stuff
// passes through unchanged. Category tags come from `vocabulary`; a bank
// category missing there is treated as a thing (with a warning).
PrototypeBank stuff_filter(const PrototypeBank& bank, const Vocabulary& vocabulary,
                           double threshold = 0.85, StuffFilterStats* stats = nullptr);

// --- Persistence -------------------------------------------------------------
//
// A bank directory holds one .pvec file per (category, space) plus
// manifest.json. The .pvec layout (little-endian):
//   u32 magic "PVEC" | u32 count | u32 dim | u32 polarity mask | u32 kind mask
//   | u32 payload crc32 | count*dim f32
// Per-prototype provenance (polarity, kind, sample/cluster index, pixel count)
// lives in the manifest, which also records a crc32 per file and a crc of its
// own canonical serialization.

inline constexpr std::uint32_t kPvecMagic = 0x43455650u;  // "PVEC" on disk

std::vector<std::uint8_t> encode_pvec(const std::vector<Prototype>& prototypes);

struct PvecPayload {
    int count = 0;
    int dim = 0;
    std::uint32_t polarity_mask = 0;
    std::uint32_t kind_mask = 0;
    std::vector<float> values;  // count * dim
};
PvecPayload decode_pvec(const std::vector<std::uint8_t>& bytes);

void save_bank(const PrototypeBank& bank, const std::filesystem::path& dir);
PrototypeBank load_bank(const std::filesystem::path& dir);

// Union of two banks; a (category, space) pair present in both is an error.
PrototypeBank merge_banks(const PrototypeBank& a, const PrototypeBank& b);

// Order-independent fingerprint of the full bank content.
std::uint64_t bank_digest(const PrototypeBank& bank);

}  // namespace protoseg
