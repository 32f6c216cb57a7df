#include "protoseg/features.hpp"

#include <cmath>
#include <numeric>

#include "protoseg/binio.hpp"
#include "protoseg/common.hpp"
#include "protoseg/rng.hpp"

namespace protoseg {

using nlohmann::json;

bool FeatureMap::all_finite() const {
    for (float v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

FeatureMap extract(const Image& image, ExtractorAdapter& adapter) {
    require(!image.empty(), "extract: empty image");
    FeatureMap map = adapter.extract(image);
    require(map.dim == adapter.dim(),
            "extractor '" + adapter.space_id() + "' emitted dim " + std::to_string(map.dim) +
                ", declared " + std::to_string(adapter.dim()));
    require(!map.empty(), "extractor '" + adapter.space_id() + "' emitted empty feature map");
    require(map.all_finite(),
            "extractor '" + adapter.space_id() + "' emitted non-finite values");
    map.space_id = adapter.space_id();
    map.source_height = image.height;
    map.source_width = image.width;
    return map;
}

std::optional<MaskedMean> masked_mean(const FeatureMap& features, const BinaryMask& mask) {
    require(!features.empty() && !mask.empty(), "masked_mean: empty input");
    BinaryMask resized = resize_nearest(mask, features.width, features.height);
    std::vector<double> acc(static_cast<std::size_t>(features.dim), 0.0);
    std::int64_t count = 0;
    for (int y = 0; y < features.height; ++y) {
        for (int x = 0; x < features.width; ++x) {
            if (!resized.at(x, y)) continue;
            auto f = features.at(x, y);
            for (int d = 0; d < features.dim; ++d) acc[static_cast<std::size_t>(d)] += f[d];
            ++count;
        }
    }
    if (count == 0) return std::nullopt;
    MaskedMean out;
    out.pixel_count = count;
    out.mean.resize(static_cast<std::size_t>(features.dim));
    for (int d = 0; d < features.dim; ++d)
        out.mean[static_cast<std::size_t>(d)] =
            static_cast<float>(acc[static_cast<std::size_t>(d)] / static_cast<double>(count));
    return out;
}

double cosine_sim(std::span<const float> x, std::span<const float> y) {
    require(x.size() == y.size(), "cosine_sim: dimension mismatch");
    double dot = 0, nx = 0, ny = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        dot += static_cast<double>(x[i]) * y[i];
        nx += static_cast<double>(x[i]) * x[i];
        ny += static_cast<double>(y[i]) * y[i];
    }
    if (nx == 0.0 || ny == 0.0) return 0.0;
    return dot / (std::sqrt(nx) * std::sqrt(ny));
}

EnsembleSpace EnsembleSpace::uniform(std::vector<std::string> space_ids) {
    EnsembleSpace e;
    for (auto& id : space_ids) e.members.push_back({std::move(id), 1.0});
    e.normalize();
    return e;
}

void EnsembleSpace::normalize() {
    require(!members.empty(), "ensemble: no member spaces");
    double total = 0;
    for (const auto& m : members) {
        require(m.weight > 0, "ensemble: weights must be positive");
        total += m.weight;
    }
    for (auto& m : members) m.weight /= total;
}

bool EnsembleSpace::has(std::string_view space_id) const {
    for (const auto& m : members)
        if (m.space_id == space_id) return true;
    return false;
}

double ensemble_score(const std::map<std::string, std::vector<float>>& pixel_features,
                      const std::map<std::string, std::vector<float>>& prototype_features,
                      const EnsembleSpace& ensemble) {
    double score = 0;
    for (const auto& member : ensemble.members) {
        auto pit = pixel_features.find(member.space_id);
        auto qit = prototype_features.find(member.space_id);
        require(pit != pixel_features.end(),
                "ensemble_score: pixel features missing space '" + member.space_id + "'");
        require(qit != prototype_features.end(),
                "ensemble_score: prototype missing space '" + member.space_id + "'");
        score += member.weight * cosine_sim(pit->second, qit->second);
    }
    return score;
}

std::string ExtractorConfig::space_id() const {
    // Canonical dump (sorted object keys) keeps the id stable across runs.
    std::string canonical = params.dump();
    return kind + "-" + hex64(fnv1a64(canonical, fnv1a64(kind))).substr(0, 12);
}

ExtractorConfig ExtractorConfig::from_json(const json& doc) {
    ExtractorConfig config;
    config.kind = doc.at("kind");
    if (doc.contains("params")) config.params = doc.at("params");
    return config;
}

json ExtractorConfig::to_json() const { return {{"kind", kind}, {"params", params}}; }

ExtractorConfig ExtractorConfig::parse(std::string_view text) {
    ExtractorConfig config;
    std::size_t colon = text.find(':');
    if (colon == std::string_view::npos) {
        config.kind = std::string(text);
    } else {
        config.kind = std::string(text.substr(0, colon));
        try {
            config.params = json::parse(text.substr(colon + 1));
        } catch (const json::exception& e) {
            throw Error("extractor config '" + std::string(text) +
                        "': parameters after ':' must be JSON: " + e.what());
        }
    }
    require(!config.kind.empty(), "extractor config: empty kind");
    return config;
}

ExtractorRegistry& ExtractorRegistry::instance() {
    static ExtractorRegistry registry = [] {
        // Reference feature spaces ship as documented placeholders: the kinds
        // are known (so configs parse and error messages can explain what is
        // missing) but creating one requires an external model backend.
        ExtractorRegistry r;
        r.register_external("dino-vit",
                            "self-supervised ViT key features; needs an external ViT runtime");
        r.register_external("mae-vit",
                            "masked-autoencoder ViT encoder features; needs an external ViT "
                            "runtime");
        r.register_external("clip-vit",
                            "contrastive image-text ViT features; needs an external CLIP runtime");
        r.register_external("sd-unet",
                            "denoising U-Net cross-attention query features; needs an external "
                            "diffusion runtime");
        return r;
    }();
    return registry;
}

void ExtractorRegistry::register_kind(const std::string& kind, Factory factory, std::string doc) {
    entries_[kind] = Entry{std::move(factory), std::move(doc)};
}

void ExtractorRegistry::register_external(const std::string& kind, std::string doc) {
    entries_[kind] = Entry{nullptr, std::move(doc)};
}

std::unique_ptr<ExtractorAdapter> ExtractorRegistry::create(const ExtractorConfig& config) const {
    auto it = entries_.find(config.kind);
    require(it != entries_.end(), "unknown extractor kind '" + config.kind + "'");
    require(it->second.factory != nullptr,
            "extractor '" + config.kind +
                "' requires an external backend that is not part of this build: " +
                it->second.doc);
    return it->second.factory(config);
}

bool ExtractorRegistry::known(const std::string& kind) const {
    return entries_.find(kind) != entries_.end();
}

std::vector<std::string> ExtractorRegistry::kinds() const {
    std::vector<std::string> out;
    for (const auto& [kind, entry] : entries_) out.push_back(kind);
    return out;
}

const std::string* ExtractorRegistry::doc(const std::string& kind) const {
    auto it = entries_.find(kind);
    return it == entries_.end() ? nullptr : &it->second.doc;
}

std::vector<ExtractorConfig> reference_extractor_configs() {
    std::vector<ExtractorConfig> configs;
    {
        ExtractorConfig c;
        c.kind = "dino-vit";
        c.params = {{"model", "vit-b/8"},
                    {"weights", "imagenet-selfsup"},
                    {"source", "keys"},
                    {"layer", "last"},
                    {"concat_heads", true}};
        configs.push_back(std::move(c));
    }
    {
        ExtractorConfig c;
        c.kind = "mae-vit";
        c.params = {{"model", "vit-l/16"},
                    {"weights", "imagenet-448"},
                    {"source", "keys"},
                    {"layer", "encoder-last"},
                    {"masking", false},
                    {"concat_heads", true}};
        configs.push_back(std::move(c));
    }
    {
        ExtractorConfig c;
        c.kind = "clip-vit";
        c.params = {{"model", "vit-b/16"},
                    {"source", "keys"},
                    {"layer", "second-to-last"},
                    {"concat_heads", true}};
        configs.push_back(std::move(c));
    }
    {
        ExtractorConfig c;
        c.kind = "sd-unet";
        c.params = {{"source", "cross-attention-queries"},
                    {"blocks", json::array({"up-1", "up-2", "down-first", "up-last"})},
                    {"upsample_to", 64},
                    {"noise_timestep", 200},
                    {"prompt", ""},
                    {"concat", true}};
        configs.push_back(std::move(c));
    }
    return configs;
}

void write_feature_map(const std::filesystem::path& path, const FeatureMap& map) {
    require(!map.empty(), "write_feature_map: empty map");
    std::vector<std::uint8_t> payload;
    payload.reserve(map.data.size() * 4);
    for (float v : map.data) put_f32(payload, v);
    std::vector<std::uint8_t> out;
    out.reserve(16 + payload.size());
    put_u32(out, static_cast<std::uint32_t>(map.height));
    put_u32(out, static_cast<std::uint32_t>(map.width));
    put_u32(out, static_cast<std::uint32_t>(map.dim));
    put_u32(out, crc32_bytes(payload));
    out.insert(out.end(), payload.begin(), payload.end());
    write_file_bytes(path, out);

    json sidecar;
    sidecar["space_id"] = map.space_id;
    sidecar["source_height"] = map.source_height;
    sidecar["source_width"] = map.source_width;
    write_file_text(path.string() + ".json", sidecar.dump(2) + "\n");
}

FeatureMap read_feature_map(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    require(bytes.size() >= 16, "feature map file too short: " + path.string());
    std::uint32_t h = get_u32(bytes, 0);
    std::uint32_t w = get_u32(bytes, 4);
    std::uint32_t d = get_u32(bytes, 8);
    std::uint32_t crc = get_u32(bytes, 12);
    std::size_t expected = 16 + static_cast<std::size_t>(h) * w * d * 4;
    require(h > 0 && w > 0 && d > 0 && bytes.size() == expected,
            "feature map header invalid: " + path.string());
    std::span<const std::uint8_t> payload(bytes.data() + 16, bytes.size() - 16);
    require(crc32_bytes(payload) == crc, "feature map checksum mismatch: " + path.string());
    FeatureMap map(static_cast<int>(h), static_cast<int>(w), static_cast<int>(d));
    for (std::size_t i = 0; i < map.data.size(); ++i) map.data[i] = get_f32(bytes, 16 + i * 4);

    json sidecar = json::parse(read_file_text(path.string() + ".json"));
    map.space_id = sidecar.at("space_id");
    map.source_height = sidecar.value("source_height", 0);
    map.source_width = sidecar.value("source_width", 0);
    return map;
}

}  // namespace protoseg
