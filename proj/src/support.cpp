#include "protoseg/support.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"
#include "protoseg/binio.hpp"
#include "protoseg/common.hpp"
#include "protoseg/png_io.hpp"
#include "protoseg/rng.hpp"

namespace protoseg {

using nlohmann::json;

std::string GeneratorConfig::canonical_json() const {
    json j;
    j["guidance_scale"] = guidance_scale;
    j["steps"] = steps;
    j["sampler"] = sampler;
    j["batch_size"] = batch_size;
    j["image_size"] = image_size;
    return j.dump();  // nlohmann objects are key-sorted, so this is canonical
}

FloatGrid aggregate_attribution(const std::vector<FloatGrid>& maps, int width, int height) {
    require(!maps.empty(), "aggregate_attribution: no attention maps");
    require(width > 0 && height > 0, "aggregate_attribution: bad target size");

    FloatGrid sum(width, height, 0.0f);
    for (const FloatGrid& m : maps) {
        FloatGrid r = resize_bilinear(m, width, height);
        for (std::size_t i = 0; i < sum.values.size(); ++i) sum.values[i] += r.values[i];
    }

    auto [lo_it, hi_it] = std::minmax_element(sum.values.begin(), sum.values.end());
    const float lo = *lo_it, hi = *hi_it;
    if (hi <= lo) {
        std::fill(sum.values.begin(), sum.values.end(), 0.0f);
        return sum;
    }
    const float scale = 1.0f / (hi - lo);
    for (float& v : sum.values) v = (v - lo) * scale;
    return sum;
}

std::uint64_t support_sample_seed(std::uint64_t category_seed, int index) {
    return hash_combine(category_seed, static_cast<std::uint64_t>(index));
}

SupportSet sample_support_set(GeneratorAdapter& adapter, const Category& category, int n,
                              const std::string& prompt_template) {
    require(n > 0, "sample_support_set: n must be positive");
    SupportSet set;
    set.category_id = category.id;
    set.prompt = make_prompt(prompt_template, category.query_text);
    set.seed = category.seed;
    set.adapter_fingerprint = adapter.config_fingerprint();
    set.samples.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::uint64_t seed = support_sample_seed(category.seed, i);
        GeneratedSample raw = adapter.generate(set.prompt, seed);
        require(raw.image.width > 0 && raw.image.height > 0,
                "sample_support_set: adapter returned an empty image");
        SupportSample sample;
        sample.attribution = aggregate_attribution(raw.attention, raw.image.width, raw.image.height);
        sample.image = std::move(raw.image);
        sample.seed = seed;
        set.samples.push_back(std::move(sample));
    }
    return set;
}

std::string support_cache_key(const std::string& category_id, std::uint64_t seed, int n,
                              const std::string& adapter_fingerprint) {
    std::uint64_t h = fnv1a64(category_id);
    h = hash_combine(h, seed);
    h = hash_combine(h, static_cast<std::uint64_t>(n));
    h = hash_combine(h, fnv1a64(adapter_fingerprint));

    // Human-readable prefix from the category id, hash for uniqueness.
    std::string prefix = slugify(category_id);
    if (prefix.empty()) prefix = "category";
    return prefix + "-" + hex64(h);
}

std::string support_sample_basename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%04d", index);
    return buf;
}

void save_support_set(const SupportSet& set, const std::filesystem::path& cache_dir) {
    const std::string key = support_cache_key(set.category_id, set.seed,
                                              static_cast<int>(set.samples.size()),
                                              set.adapter_fingerprint);
    const std::filesystem::path dir = cache_dir / key;
    std::filesystem::create_directories(dir);

    json manifest;
    manifest["category_id"] = set.category_id;
    manifest["prompt"] = set.prompt;
    manifest["seed"] = set.seed;
    manifest["n"] = static_cast<int>(set.samples.size());
    manifest["adapter_fingerprint"] = set.adapter_fingerprint;
    json samples = json::array();
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        const SupportSample& s = set.samples[i];
        const std::string base = support_sample_basename(static_cast<int>(i));
        const std::string image_name = base + ".png";
        const std::string attr_name = base + ".attr.grid";

        png_write_rgb(dir / image_name, s.image);
        const std::vector<std::uint8_t> attr_bytes = encode_float_grid(s.attribution);
        write_file_bytes(dir / attr_name, attr_bytes);

        json entry;
        entry["image"] = image_name;
        entry["image_crc32"] = crc32_bytes(read_file_bytes(dir / image_name));
        entry["attribution"] = attr_name;
        entry["attribution_crc32"] = crc32_bytes(attr_bytes);
        entry["seed"] = s.seed;
        samples.push_back(std::move(entry));
    }
    manifest["samples"] = std::move(samples);
    write_file_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::optional<SupportSet> load_support_set(const std::filesystem::path& cache_dir,
                                           const std::string& category_id, std::uint64_t seed,
                                           int n, const std::string& adapter_fingerprint) {
    const std::string key = support_cache_key(category_id, seed, n, adapter_fingerprint);
    const std::filesystem::path dir = cache_dir / key;
    const std::filesystem::path manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) return std::nullopt;

    try {
        const json manifest = json::parse(read_file_text(manifest_path));
        if (manifest.at("category_id").get<std::string>() != category_id ||
            manifest.at("seed").get<std::uint64_t>() != seed ||
            manifest.at("n").get<int>() != n ||
            manifest.at("adapter_fingerprint").get<std::string>() != adapter_fingerprint) {
            log_warn("support cache entry " + dir.string() + " does not match its key; ignoring");
            return std::nullopt;
        }
        SupportSet set;
        set.category_id = category_id;
        set.prompt = manifest.at("prompt").get<std::string>();
        set.seed = seed;
        set.adapter_fingerprint = adapter_fingerprint;
        for (const json& entry : manifest.at("samples")) {
            const std::vector<std::uint8_t> image_bytes =
                read_file_bytes(dir / entry.at("image").get<std::string>());
            const std::vector<std::uint8_t> attr_bytes =
                read_file_bytes(dir / entry.at("attribution").get<std::string>());
            if (crc32_bytes(image_bytes) != entry.at("image_crc32").get<std::uint32_t>() ||
                crc32_bytes(attr_bytes) != entry.at("attribution_crc32").get<std::uint32_t>()) {
                log_warn("support cache entry " + dir.string() + " failed its checksum; ignoring");
                return std::nullopt;
            }
            SupportSample sample;
            sample.image = png_read_rgb(dir / entry.at("image").get<std::string>());
            sample.attribution = decode_float_grid(attr_bytes, "support attribution");
            sample.seed = entry.at("seed").get<std::uint64_t>();
            set.samples.push_back(std::move(sample));
        }
        if (static_cast<int>(set.samples.size()) != n) {
            log_warn("support cache entry " + dir.string() + " has wrong sample count; ignoring");
            return std::nullopt;
        }
        return set;
    } catch (const std::exception& e) {
        log_warn("support cache entry " + dir.string() + " is unreadable (" + e.what() +
                 "); ignoring");
        return std::nullopt;
    }
}

SupportSet sample_support_set_cached(GeneratorAdapter& adapter, const Category& category, int n,
                                     const std::filesystem::path& cache_dir,
                                     const std::string& prompt_template) {
    if (auto cached = load_support_set(cache_dir, category.id, category.seed, n,
                                       adapter.config_fingerprint())) {
        return std::move(*cached);
    }
    SupportSet set = sample_support_set(adapter, category, n, prompt_template);
    save_support_set(set, cache_dir);
    return set;
}

void save_support_masks(const std::filesystem::path& cache_dir, const SupportSet& set,
                        const std::vector<FgBgMasks>& masks) {
    require(set.samples.size() == masks.size(),
            "save_support_masks: need one mask pair per support sample");
    const std::string key = support_cache_key(set.category_id, set.seed,
                                              static_cast<int>(set.samples.size()),
                                              set.adapter_fingerprint);
    const std::filesystem::path dir = cache_dir / key;
    std::filesystem::create_directories(dir);

    json doc;
    json samples = json::array();
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const std::string base = support_sample_basename(static_cast<int>(i));
        const std::string fg_name = base + ".fg.mask";
        const std::string bg_name = base + ".bg.mask";
        const std::vector<std::uint8_t> fg_bytes = encode_bitmask(masks[i].fg);
        const std::vector<std::uint8_t> bg_bytes = encode_bitmask(masks[i].bg);
        write_file_bytes(dir / fg_name, fg_bytes);
        write_file_bytes(dir / bg_name, bg_bytes);

        json entry;
        entry["fg"] = fg_name;
        entry["fg_crc32"] = crc32_bytes(fg_bytes);
        entry["bg"] = bg_name;
        entry["bg_crc32"] = crc32_bytes(bg_bytes);
        entry["provenance"] = masks[i].provenance;
        entry["degenerate"] = masks[i].degenerate;
        entry["fg_index"] = masks[i].fg_index;
        entry["bg_index"] = masks[i].bg_index;
        samples.push_back(std::move(entry));
    }
    doc["samples"] = std::move(samples);
    write_file_text(dir / "masks.json", doc.dump(2) + "\n");
}

std::optional<FgBgMasks> load_support_mask(const std::filesystem::path& cache_dir,
                                           const std::string& category_id, std::uint64_t seed,
                                           int n, const std::string& adapter_fingerprint,
                                           int index) {
    const std::string key = support_cache_key(category_id, seed, n, adapter_fingerprint);
    const std::filesystem::path dir = cache_dir / key;
    const std::filesystem::path doc_path = dir / "masks.json";
    if (!std::filesystem::exists(doc_path) || index < 0) return std::nullopt;
    try {
        const json doc = json::parse(read_file_text(doc_path));
        const json& samples = doc.at("samples");
        if (index >= static_cast<int>(samples.size())) return std::nullopt;
        const json& entry = samples[static_cast<std::size_t>(index)];
        const std::vector<std::uint8_t> fg_bytes =
            read_file_bytes(dir / entry.at("fg").get<std::string>());
        const std::vector<std::uint8_t> bg_bytes =
            read_file_bytes(dir / entry.at("bg").get<std::string>());
        if (crc32_bytes(fg_bytes) != entry.at("fg_crc32").get<std::uint32_t>() ||
            crc32_bytes(bg_bytes) != entry.at("bg_crc32").get<std::uint32_t>()) {
            log_warn("support masks in " + dir.string() + " failed their checksum; ignoring");
            return std::nullopt;
        }
        FgBgMasks masks;
        masks.fg = decode_bitmask(fg_bytes, "support fg mask");
        masks.bg = decode_bitmask(bg_bytes, "support bg mask");
        masks.provenance = entry.at("provenance").get<std::string>();
        masks.degenerate = entry.at("degenerate").get<bool>();
        masks.fg_index = entry.at("fg_index").get<int>();
        masks.bg_index = entry.at("bg_index").get<int>();
        return masks;
    } catch (const std::exception& e) {
        log_warn("support masks in " + dir.string() + " are unreadable (" + e.what() +
                 "); ignoring");
        return std::nullopt;
    }
}

}  // namespace protoseg
