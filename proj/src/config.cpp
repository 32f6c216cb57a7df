#include "protoseg/config.hpp"

#include <cstdlib>
#include <sstream>

#include "protoseg/binio.hpp"
#include "protoseg/common.hpp"
#include "protoseg/rng.hpp"

namespace protoseg {

using nlohmann::json;

namespace {

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream stream(text);
    std::string token;
    while (std::getline(stream, token, ',')) {
        if (token.empty()) continue;
        out.push_back(std::stoi(token));
    }
    return out;
}

bool parse_bool(const std::string& text) {
    if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
    if (text == "0" || text == "false" || text == "no" || text == "off") return false;
    throw Error("cannot parse boolean value '" + text + "'");
}

}  // namespace

void PipelineConfig::apply_json(const json& doc) {
    require(doc.is_object(), "config: document must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        try {
            if (key == "seed") {
                seed = value.get<std::uint64_t>();
            } else if (key == "n_support") {
                n_support = value.get<int>();
            } else if (key == "prompt_template") {
                prompt_template = value.get<std::string>();
            } else if (key == "guidance_scale") {
                guidance_scale = value.get<double>();
            } else if (key == "steps") {
                steps = value.get<int>();
            } else if (key == "sampler") {
                sampler = value.get<std::string>();
            } else if (key == "batch_size") {
                batch_size = value.get<int>();
            } else if (key == "image_size") {
                image_size = value.get<int>();
            } else if (key == "adapter") {
                adapter = value.get<std::string>();
            } else if (key == "k_parts") {
                k_parts = value.get<int>();
            } else if (key == "stuff_threshold") {
                stuff_threshold = value.get<double>();
            } else if (key == "eta") {
                eta = value.get<int>();
            } else if (key == "use_prefilter") {
                use_prefilter = value.get<bool>();
            } else if (key == "use_bg_prototypes") {
                use_bg_prototypes = value.get<bool>();
            } else if (key == "fg_threshold") {
                fg_threshold = value.get<double>();
            } else if (key == "bg_pool_all_categories") {
                bg_pool_all_categories = value.get<bool>();
            } else if (key == "window_sizes") {
                window_sizes = value.get<std::vector<int>>();
            } else if (key == "window_stride") {
                window_stride = value.get<int>();
            } else if (key == "shortest_side") {
                shortest_side = value.get<int>();
            } else if (key == "ensemble") {
                ensemble = value.get<std::vector<std::string>>();
            } else if (key == "cache_dir") {
                cache_dir = value.get<std::string>();
            } else {
                throw Error("config: unknown key '" + key + "'");
            }
        } catch (const json::exception& e) {
            throw Error("config: bad value for '" + key + "': " + e.what());
        }
    }
}

json PipelineConfig::to_json() const {
    json doc;
    doc["seed"] = seed;
    doc["n_support"] = n_support;
    doc["prompt_template"] = prompt_template;
    doc["guidance_scale"] = guidance_scale;
    doc["steps"] = steps;
    doc["sampler"] = sampler;
    doc["batch_size"] = batch_size;
    doc["image_size"] = image_size;
    doc["adapter"] = adapter;
    doc["k_parts"] = k_parts;
    doc["stuff_threshold"] = stuff_threshold;
    doc["eta"] = eta;
    doc["use_prefilter"] = use_prefilter;
    doc["use_bg_prototypes"] = use_bg_prototypes;
    doc["fg_threshold"] = fg_threshold;
    doc["bg_pool_all_categories"] = bg_pool_all_categories;
    doc["window_sizes"] = window_sizes;
    doc["window_stride"] = window_stride;
    doc["shortest_side"] = shortest_side;
    doc["ensemble"] = ensemble;
    doc["cache_dir"] = cache_dir.string();
    return doc;
}

void PipelineConfig::validate() const {
    require(n_support > 0, "config: n_support must be positive");
    require(k_parts > 0, "config: k_parts must be positive");
    require(eta >= 1 && eta <= 16, "config: eta must be in [1, 16]");
    require(steps > 0, "config: steps must be positive");
    require(batch_size > 0, "config: batch_size must be positive");
    require(image_size > 0, "config: image_size must be positive");
    require(!window_sizes.empty(), "config: window_sizes must not be empty");
    for (int w : window_sizes) require(w > 0, "config: window sizes must be positive");
    require(window_stride > 0, "config: window_stride must be positive");
    require(shortest_side > 0, "config: shortest_side must be positive");
    require(stuff_threshold >= -1.0 && stuff_threshold <= 1.0,
            "config: stuff_threshold must be a cosine value");
    require(fg_threshold >= -1.0 && fg_threshold <= 1.0,
            "config: fg_threshold must be a cosine value");
    require(!ensemble.empty(), "config: ensemble must name at least one feature space");
    make_prompt(prompt_template, "probe");  // validates the placeholder
}

std::uint64_t PipelineConfig::digest() const { return fnv1a64(to_json().dump()); }

void apply_env_overrides(PipelineConfig& config,
                         const std::function<const char*(const char*)>& getenv_fn) {
    auto get = [&](const char* name) -> std::optional<std::string> {
        const char* v = getenv_fn(name);
        if (v == nullptr || *v == '\0') return std::nullopt;
        return std::string(v);
    };
    try {
        if (auto v = get("PROTOSEG_SEED")) config.seed = std::stoull(*v);
        if (auto v = get("PROTOSEG_N_SUPPORT")) config.n_support = std::stoi(*v);
        if (auto v = get("PROTOSEG_PROMPT_TEMPLATE")) config.prompt_template = *v;
        if (auto v = get("PROTOSEG_GUIDANCE_SCALE")) config.guidance_scale = std::stod(*v);
        if (auto v = get("PROTOSEG_STEPS")) config.steps = std::stoi(*v);
        if (auto v = get("PROTOSEG_SAMPLER")) config.sampler = *v;
        if (auto v = get("PROTOSEG_BATCH_SIZE")) config.batch_size = std::stoi(*v);
        if (auto v = get("PROTOSEG_IMAGE_SIZE")) config.image_size = std::stoi(*v);
        if (auto v = get("PROTOSEG_ADAPTER")) config.adapter = *v;
        if (auto v = get("PROTOSEG_K_PARTS")) config.k_parts = std::stoi(*v);
        if (auto v = get("PROTOSEG_STUFF_THRESHOLD")) config.stuff_threshold = std::stod(*v);
        if (auto v = get("PROTOSEG_ETA")) config.eta = std::stoi(*v);
        if (auto v = get("PROTOSEG_USE_PREFILTER")) config.use_prefilter = parse_bool(*v);
        if (auto v = get("PROTOSEG_USE_BG_PROTOTYPES")) {
            config.use_bg_prototypes = parse_bool(*v);
        }
        if (auto v = get("PROTOSEG_FG_THRESHOLD")) config.fg_threshold = std::stod(*v);
        if (auto v = get("PROTOSEG_BG_POOL_ALL_CATEGORIES")) {
            config.bg_pool_all_categories = parse_bool(*v);
        }
        if (auto v = get("PROTOSEG_WINDOW_SIZES")) config.window_sizes = parse_int_list(*v);
        if (auto v = get("PROTOSEG_WINDOW_STRIDE")) config.window_stride = std::stoi(*v);
        if (auto v = get("PROTOSEG_SHORTEST_SIDE")) config.shortest_side = std::stoi(*v);
        if (auto v = get("PROTOSEG_ENSEMBLE")) {
            config.ensemble.clear();
            std::stringstream stream(*v);
            std::string token;
            while (std::getline(stream, token, ';')) {
                if (!token.empty()) config.ensemble.push_back(token);
            }
        }
        if (auto v = get("PROTOSEG_CACHE_DIR")) config.cache_dir = *v;
    } catch (const std::invalid_argument&) {
        throw Error("config: unparsable PROTOSEG_* environment value");
    } catch (const std::out_of_range&) {
        throw Error("config: out-of-range PROTOSEG_* environment value");
    }
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& file) {
    PipelineConfig config;
    if (file.has_value()) {
        config.apply_json(json::parse(read_file_text(*file)));
    }
    apply_env_overrides(config, [](const char* name) { return std::getenv(name); });
    return config;
}

}  // namespace protoseg
