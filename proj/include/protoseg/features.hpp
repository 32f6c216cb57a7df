#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoseg/image.hpp"

namespace protoseg {

// Dense per-pixel features in one named feature space. Grid is height x
// width cells of `dim` floats, row-major.
struct FeatureMap {
    int height = 0;
    int width = 0;
    int dim = 0;
    std::vector<float> data;
    std::string space_id;
    int source_height = 0;  // input image size the grid was extracted from
    int source_width = 0;

    FeatureMap() = default;
    FeatureMap(int h, int w, int d)
        : height(h), width(w), dim(d),
          data(static_cast<std::size_t>(h) * w * d, 0.f) {}

    bool empty() const { return height <= 0 || width <= 0 || dim <= 0; }
    std::span<const float> at(int x, int y) const {
        return {&data[(static_cast<std::size_t>(y) * width + x) * dim],
                static_cast<std::size_t>(dim)};
    }
    std::span<float> at(int x, int y) {
        return {&data[(static_cast<std::size_t>(y) * width + x) * dim],
                static_cast<std::size_t>(dim)};
    }
    bool all_finite() const;
};

class ExtractorAdapter {
  public:
    virtual ~ExtractorAdapter() = default;
    // Must emit a finite FeatureMap with this adapter's space_id and dim.
    virtual FeatureMap extract(const Image& image) = 0;
    virtual std::string space_id() const = 0;
    virtual int dim() const = 0;
    virtual bool deterministic() const { return true; }
};

// Checked wrapper around ExtractorAdapter::extract: validates dimension,
// finiteness and space id against the adapter's declared contract.
FeatureMap extract(const Image& image, ExtractorAdapter& adapter);

struct MaskedMean {
    std::vector<float> mean;
    std::int64_t pixel_count = 0;
};

// Mean feature under the mask, after nearest-neighbor resize of the mask to
// the feature grid. Empty-after-resize masks yield nullopt (EMPTY_MASK).
std::optional<MaskedMean> masked_mean(const FeatureMap& features, const BinaryMask& mask);

// Cosine similarity; zero vectors compare as 0.
double cosine_sim(std::span<const float> x, std::span<const float> y);

struct EnsembleSpace {
    struct Member {
        std::string space_id;
        double weight = 1.0;
    };
    std::vector<Member> members;

    static EnsembleSpace uniform(std::vector<std::string> space_ids);
    // Scales weights to sum to 1; weights must be positive.
    void normalize();
    bool has(std::string_view space_id) const;
};

// Weighted mean over ensemble members of per-space cosine similarity.
// Throws if either side is missing a member space.
double ensemble_score(const std::map<std::string, std::vector<float>>& pixel_features,
                      const std::map<std::string, std::vector<float>>& prototype_features,
                      const EnsembleSpace& ensemble);

// Declarative extractor description; space_id is a stable hash of it so
// banks record exactly which configuration produced them.
struct ExtractorConfig {
    std::string kind;
    nlohmann::json params = nlohmann::json::object();

    std::string space_id() const;
    static ExtractorConfig from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
    // Parses "kind" or "kind:{json params}".
    static ExtractorConfig parse(std::string_view text);
};

class ExtractorRegistry {
  public:
    using Factory = std::function<std::unique_ptr<ExtractorAdapter>(const ExtractorConfig&)>;

    static ExtractorRegistry& instance();

    void register_kind(const std::string& kind, Factory factory, std::string doc);
    // Registers a documented configuration whose backend is not part of this
    // artifact; create() reports the missing dependency.
    void register_external(const std::string& kind, std::string doc);

    std::unique_ptr<ExtractorAdapter> create(const ExtractorConfig& config) const;
    bool known(const std::string& kind) const;
    std::vector<std::string> kinds() const;
    const std::string* doc(const std::string& kind) const;

  private:
    struct Entry {
        Factory factory;  // null for external-backend configurations
        std::string doc;
    };
    std::map<std::string, Entry> entries_;
};

// Reference configurations for the external extractor backends this
// pipeline is designed to plug into. Shipped as schema + documentation; the
// backends themselves live behind the adapter boundary.
std::vector<ExtractorConfig> reference_extractor_configs();

// Feature map cache file: 16-byte header (H': u32, W': u32, D: u32,
// checksum: u32) + row-major little-endian f32 payload. A ".json" sidecar
// carries the space id and source size.
void write_feature_map(const std::filesystem::path& path, const FeatureMap& map);
FeatureMap read_feature_map(const std::filesystem::path& path);

}  // namespace protoseg
