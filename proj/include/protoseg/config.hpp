#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoseg/vocabulary.hpp"

namespace protoseg {

// Every knob of the pipeline, resolved in layers: built-in defaults, then a
// JSON config file, then PROTOSEG_* environment variables, then command-line
// flags (applied by the CLI). Unknown keys are rejected.
struct PipelineConfig {
    std::uint64_t seed = 0;

    // Support-set sampling.
    int n_support = 64;
    std::string prompt_template = std::string(kDefaultPromptTemplate);
    double guidance_scale = 8.0;
    int steps = 30;
    std::string sampler = "dpm-solver";
    int batch_size = 16;
    int image_size = 512;
    std::string adapter = "synthetic";  // generator adapter kind

    // Prototype construction.
    int k_parts = 32;
    double stuff_threshold = 0.85;

    // Inference.
    int eta = 10;
    bool use_prefilter = true;
    bool use_bg_prototypes = true;
    double fg_threshold = 0.75;
    bool bg_pool_all_categories = false;
    std::vector<int> window_sizes = {448, 336};
    int window_stride = 224;
    int shortest_side = 448;

    // Feature spaces: extractor configuration strings, "kind" or
    // "kind:{json}". The shipped runnable space is "color-hash"; the
    // contrastive/generative reference spaces need external backends.
    std::vector<std::string> ensemble = {"color-hash"};

    std::filesystem::path cache_dir = "cache";

    void apply_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
    void validate() const;
    // Stable fingerprint of the resolved configuration.
    std::uint64_t digest() const;
};

// defaults -> optional JSON file -> PROTOSEG_* environment variables.
PipelineConfig load_config(const std::optional<std::filesystem::path>& file);

// Applies PROTOSEG_* variables onto `config`. Exposed for tests.
void apply_env_overrides(PipelineConfig& config,
                         const std::function<const char*(const char*)>& getenv_fn);

}  // namespace protoseg
