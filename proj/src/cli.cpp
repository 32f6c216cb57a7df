#include "protoseg/cli.hpp"

#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "protoseg/binio.hpp"
#include "protoseg/common.hpp"
#include "protoseg/config.hpp"
#include "protoseg/dataset.hpp"
#include "protoseg/eval.hpp"
#include "protoseg/explanation.hpp"
#include "protoseg/inference.hpp"
#include "protoseg/png_io.hpp"
#include "protoseg/prototypes.hpp"
#include "protoseg/rng.hpp"
#include "protoseg/synthetic.hpp"

namespace protoseg::cli {
namespace {

using nlohmann::json;

// Everything a subcommand needs, resolved from config + vocabulary.
struct Pipeline {
    PipelineConfig config;
    SyntheticWorld world;
    Vocabulary vocabulary;  // tagged and seeded, without background
    Vocabulary expanded;    // with background prepended
    std::unique_ptr<GeneratorAdapter> generator;
    std::vector<std::unique_ptr<ExtractorAdapter>> extractors;
    std::map<std::string, ExtractorAdapter*> extractor_map;
    std::vector<ExtractorAdapter*> extractor_list;
    EnsembleSpace ensemble;
    std::unique_ptr<ProposerAdapter> proposer;
    std::unique_ptr<PrefilterScorer> scorer;
};

GeneratorConfig generator_config(const PipelineConfig& config) {
    GeneratorConfig g;
    g.guidance_scale = config.guidance_scale;
    g.steps = config.steps;
    g.sampler = config.sampler;
    g.batch_size = config.batch_size;
    g.image_size = config.image_size;
    return g;
}

Pipeline build_pipeline(PipelineConfig config, const std::optional<std::filesystem::path>& vocab,
                        const std::optional<std::filesystem::path>& table) {
    config.validate();
    register_synthetic_components();

    Pipeline p;
    p.config = std::move(config);
    p.world = SyntheticWorld::standard();

    if (vocab.has_value()) {
        p.vocabulary = load_vocabulary(*vocab);
    } else {
        log_info("no vocabulary file given; using the built-in synthetic vocabulary");
        p.vocabulary = SyntheticWorld::standard_vocabulary(p.config.seed);
    }
    assign_default_seeds(p.vocabulary, p.config.seed);
    ThingStuffTable tags = builtin_thing_stuff_table();
    if (table.has_value()) {
        tags = merge_tables(tags, load_thing_stuff_table(*table));
    }
    p.vocabulary = tag_vocabulary(std::move(p.vocabulary), tags);
    p.expanded = expand_with_background(p.vocabulary);

    if (p.config.adapter == "synthetic") {
        p.generator = std::make_unique<SyntheticGenerator>(
            p.world, p.vocabulary, generator_config(p.config), p.config.prompt_template);
    } else {
        throw Error("generator adapter '" + p.config.adapter +
                    "' requires an external backend that is not part of this build");
    }

    for (const std::string& text : p.config.ensemble) {
        const ExtractorConfig extractor_config = ExtractorConfig::parse(text);
        p.extractors.push_back(ExtractorRegistry::instance().create(extractor_config));
        ExtractorAdapter* raw = p.extractors.back().get();
        require(!p.extractor_map.contains(raw->space_id()),
                "ensemble lists feature space '" + raw->space_id() + "' twice");
        p.extractor_map.emplace(raw->space_id(), raw);
        p.extractor_list.push_back(raw);
        p.ensemble.members.push_back({raw->space_id(), 1.0});
    }
    p.ensemble.normalize();

    p.proposer = std::make_unique<PaletteProposer>(p.world);
    p.scorer = std::make_unique<PaletteAffinityScorer>(p.world, p.vocabulary);
    return p;
}

SegmentOptions segment_options(const PipelineConfig& config) {
    SegmentOptions o;
    o.use_bg_prototypes = config.use_bg_prototypes;
    o.fg_threshold = static_cast<float>(config.fg_threshold);
    o.bg_pool_all_categories = config.bg_pool_all_categories;
    o.window_sizes = config.window_sizes;
    o.window_stride = config.window_stride;
    o.shortest_side = config.shortest_side;
    return o;
}

PrefilterOptions prefilter_options(const PipelineConfig& config) {
    PrefilterOptions o;
    o.enabled = config.use_prefilter;
    o.eta = config.eta;
    o.prompt_template = config.prompt_template;
    return o;
}

// Samples (or loads) every category's support set; returns the sets in
// vocabulary order.
std::vector<SupportSet> ensure_supports(Pipeline& p) {
    std::vector<SupportSet> sets;
    for (const Category& category : p.vocabulary.categories) {
        sets.push_back(sample_support_set_cached(*p.generator, category, p.config.n_support,
                                                 p.config.cache_dir, p.config.prompt_template));
    }
    return sets;
}

int cmd_sample(Pipeline& p) {
    for (const SupportSet& set : ensure_supports(p)) {
        std::cout << set.category_id << ": " << set.samples.size() << " samples under "
                  << (p.config.cache_dir /
                      support_cache_key(set.category_id, set.seed,
                                        static_cast<int>(set.samples.size()),
                                        set.adapter_fingerprint))
                         .string()
                  << "\n";
    }
    return 0;
}

PrototypeBank build_bank(Pipeline& p) {
    PrototypeBank bank;
    const BankBuildOptions options{.k_parts = p.config.k_parts};
    for (const Category& category : p.vocabulary.categories) {
        SupportSet set = sample_support_set_cached(*p.generator, category, p.config.n_support,
                                                   p.config.cache_dir, p.config.prompt_template);
        std::vector<FgBgMasks> masks;
        masks.reserve(set.samples.size());
        for (const SupportSample& sample : set.samples) {
            masks.push_back(propose_fg_bg(*p.proposer, sample.image, sample.attribution));
        }
        save_support_masks(p.config.cache_dir, set, masks);
        for (auto& [space, protos] : build_category(set, masks, p.extractor_list, options)) {
            bank.add(category.id, space, std::move(protos));
        }
    }
    return bank;
}

int cmd_build(Pipeline& p, const std::filesystem::path& bank_dir) {
    const PrototypeBank bank = build_bank(p);
    save_bank(bank, bank_dir);
    std::cout << "bank: " << bank_dir.string() << "\n"
              << "categories: " << bank.category_ids().size() << "\n"
              << "digest: " << hex64(bank_digest(bank)) << "\n";
    return 0;
}

int cmd_filter(Pipeline& p, const std::filesystem::path& bank_dir,
               const std::filesystem::path& out_dir) {
    const PrototypeBank bank = load_bank(bank_dir);
    StuffFilterStats stats;
    const PrototypeBank filtered =
        stuff_filter(bank, p.expanded, p.config.stuff_threshold, &stats);
    save_bank(filtered, out_dir);
    std::cout << "filtered bank: " << out_dir.string() << "\n"
              << "applied: " << (stats.applied ? "yes" : "no (no stuff categories)") << "\n"
              << "dropped stuff bg: " << stats.dropped_stuff_bg << "\n"
              << "dropped thing bg: " << stats.dropped_thing_bg << "\n"
              << "digest: " << hex64(bank_digest(filtered)) << "\n";
    return 0;
}

json segmentation_metadata(const Pipeline& p, const SegmentationResult& result) {
    json doc;
    doc["width"] = result.width;
    doc["height"] = result.height;
    doc["class_list"] = result.class_list;
    doc["kept_categories"] = result.prefilter.kept;
    doc["prefilter_applied"] = result.prefilter.applied;
    doc["best_prompt"] = result.prefilter.best_prompt;
    doc["config_digest"] = hex64(p.config.digest());
    return doc;
}

int cmd_segment(Pipeline& p, const std::filesystem::path& bank_dir,
                const std::filesystem::path& image_path, const std::filesystem::path& out_prefix) {
    const PrototypeBank bank = load_bank(bank_dir);
    const Image image = png_read_rgb(image_path);
    const SegmentationResult result =
        segment(image, p.extractor_map, p.ensemble, bank, p.expanded,
                p.config.use_prefilter ? p.scorer.get() : nullptr, prefilter_options(p.config),
                segment_options(p.config));

    std::filesystem::path label_path = out_prefix;
    label_path += ".png";
    std::filesystem::path meta_path = out_prefix;
    meta_path += ".json";
    if (label_path.has_parent_path()) std::filesystem::create_directories(label_path.parent_path());
    png_write_indexed(label_path, result.labels, voc_palette(256));
    write_file_text(meta_path, segmentation_metadata(p, result).dump(2) + "\n");
    std::cout << "labels: " << label_path.string() << "\n"
              << "metadata: " << meta_path.string() << "\n";
    return 0;
}

int cmd_explain(Pipeline& p, const std::filesystem::path& bank_dir,
                const std::filesystem::path& image_path, int x, int y,
                const std::filesystem::path& out_prefix) {
    const PrototypeBank bank = load_bank(bank_dir);
    const Image image = png_read_rgb(image_path);
    const SegmentOptions options = segment_options(p.config);
    const SegmentationResult result =
        segment(image, p.extractor_map, p.ensemble, bank, p.expanded,
                p.config.use_prefilter ? p.scorer.get() : nullptr, prefilter_options(p.config),
                options);

    FileSupportStore store(p.config.cache_dir, p.vocabulary, p.config.n_support,
                           p.generator->config_fingerprint());
    ExtractorAdapter* first_extractor =
        p.extractor_list.empty() ? nullptr : p.extractor_list.front();
    const Explanation explanation =
        explain_pixel(result, p.expanded, x, y, store, 4, &bank, first_extractor);
    const Image work = resize_shortest_side(image, options.shortest_side);
    const Image montage = render_explanation(explanation, result, work);

    std::filesystem::path montage_path = out_prefix;
    montage_path += ".png";
    std::filesystem::path json_path = out_prefix;
    json_path += ".json";
    if (montage_path.has_parent_path()) {
        std::filesystem::create_directories(montage_path.parent_path());
    }
    png_write_rgb(montage_path, montage);
    write_file_text(json_path, explanation_to_json(explanation).dump(2) + "\n");
    std::cout << "pixel (" << x << ", " << y << "): " << explanation.category_id
              << " score " << explanation.score << "\n"
              << "montage: " << montage_path.string() << "\n"
              << "details: " << json_path.string() << "\n";
    return 0;
}

int cmd_eval(Pipeline& p, const std::filesystem::path& bank_dir, int scenes,
             const std::optional<std::filesystem::path>& dataset_dir,
             const std::filesystem::path& out_dir) {
    const PrototypeBank bank = load_bank(bank_dir);
    std::unique_ptr<DatasetAdapter> dataset;
    if (dataset_dir.has_value()) {
        dataset = std::make_unique<FolderDataset>(*dataset_dir);
    } else {
        dataset = std::make_unique<SyntheticSceneDataset>(p.world, p.expanded, scenes,
                                                          hash_combine(p.config.seed,
                                                                       fnv1a64("eval-scenes")));
    }

    const SegmentFn segment_fn = [&](const Image& image) {
        return segment(image, p.extractor_map, p.ensemble, bank, p.expanded,
                       p.config.use_prefilter ? p.scorer.get() : nullptr,
                       prefilter_options(p.config), segment_options(p.config));
    };
    const EvalReport report = run_benchmark(*dataset, p.expanded, segment_fn, out_dir);
    if (!out_dir.empty()) {
        write_file_text(out_dir / "config.json", p.config.to_json().dump(2) + "\n");
    }

    std::cout << "images: " << report.images << "\n";
    for (const ClassEval& c : report.classes) {
        std::cout << "  " << c.class_id << ": ";
        if (c.scored()) {
            std::cout << c.iou() << "\n";
        } else {
            std::cout << "not scored\n";
        }
    }
    std::cout << "miou: " << report.miou << "\n"
              << "wall clock: " << report.wall_clock_seconds << "s\n";
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Training-free open-vocabulary segmentation via per-category prototype banks"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may appear after the subcommand

    std::string config_file;
    app.add_option("--config", config_file, "JSON configuration file")
        ->check(CLI::ExistingFile);

    // Pre-scan for --config so file values sit under env vars and flags.
    PipelineConfig config;
    try {
        std::optional<std::filesystem::path> file;
        for (int i = 1; i + 1 < argc; ++i) {
            if (std::string_view(argv[i]) == "--config") {
                file = std::filesystem::path(argv[i + 1]);
            }
        }
        config = load_config(file);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    std::string vocab_file, table_file;
    app.add_option("--vocab", vocab_file, "vocabulary JSON (default: built-in synthetic)")
        ->check(CLI::ExistingFile);
    app.add_option("--table", table_file, "extra thing/stuff table JSON")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", config.seed, "global random seed");
    app.add_option("--n-support", config.n_support, "support images per category");
    app.add_option("--k-parts", config.k_parts, "part clusters per polarity");
    app.add_option("--eta", config.eta, "category pre-filter cap");
    app.add_option("--ensemble", config.ensemble,
                   "feature space configs, e.g. color-hash or 'color-hash:{\"patch\":4}'");
    app.add_option("--windows", config.window_sizes, "sliding window sizes");
    app.add_option("--stride", config.window_stride, "sliding window stride");
    app.add_option("--shortest-side", config.shortest_side, "inference resize target");
    app.add_option("--fg-threshold", config.fg_threshold,
                   "background cut when bg prototypes are disabled");
    app.add_option("--stuff-threshold", config.stuff_threshold,
                   "cosine cut for redundant thing bg prototypes");
    app.add_option("--cache", config.cache_dir, "support cache directory");
    app.add_option("--adapter", config.adapter, "generator adapter kind");
    app.add_option("--image-size", config.image_size, "generated support image size");
    app.add_flag_callback("--no-prefilter", [&] { config.use_prefilter = false; },
                          "score every category");
    app.add_flag_callback("--no-bg-prototypes", [&] { config.use_bg_prototypes = false; },
                          "threshold foreground scores instead of using bg prototypes");
    app.add_flag_callback("--bg-pool-all", [&] { config.bg_pool_all_categories = true; },
                          "pool bg prototypes from every bank category");

    auto* sample_cmd = app.add_subcommand("sample", "sample + cache support sets");

    auto* build_cmd = app.add_subcommand("build", "build a prototype bank from support sets");
    std::string build_bank_dir;
    build_cmd->add_option("--bank", build_bank_dir, "output bank directory")->required();

    auto* filter_cmd = app.add_subcommand("filter", "apply the stuff filter to a bank");
    std::string filter_bank_dir, filter_out_dir;
    filter_cmd->add_option("--bank", filter_bank_dir, "input bank directory")->required();
    filter_cmd->add_option("--out", filter_out_dir, "output bank directory")->required();

    auto* segment_cmd = app.add_subcommand("segment", "segment one image");
    std::string segment_bank_dir, segment_image, segment_out;
    segment_cmd->add_option("--bank", segment_bank_dir, "bank directory")->required();
    segment_cmd->add_option("--image", segment_image, "input PNG")->required()
        ->check(CLI::ExistingFile);
    segment_cmd->add_option("--out", segment_out, "output prefix (.png/.json appended)")
        ->required();

    auto* explain_cmd = app.add_subcommand("explain", "explain one pixel's label");
    std::string explain_bank_dir, explain_image, explain_out;
    int explain_x = 0, explain_y = 0;
    explain_cmd->add_option("--bank", explain_bank_dir, "bank directory")->required();
    explain_cmd->add_option("--image", explain_image, "input PNG")->required()
        ->check(CLI::ExistingFile);
    explain_cmd->add_option("--x", explain_x, "pixel x (resized geometry)")->required();
    explain_cmd->add_option("--y", explain_y, "pixel y (resized geometry)")->required();
    explain_cmd->add_option("--out", explain_out, "output prefix (.png/.json appended)")
        ->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate mIoU over a dataset");
    std::string eval_bank_dir, eval_dataset, eval_out;
    int eval_scenes = 8;
    eval_cmd->add_option("--bank", eval_bank_dir, "bank directory")->required();
    eval_cmd->add_option("--scenes", eval_scenes, "synthetic scene count (default dataset)");
    eval_cmd->add_option("--dataset", eval_dataset, "folder dataset root (images/ + labels/)")
        ->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--out", eval_out, "output directory for predictions + report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors exit 1
    }

    try {
        auto vocab = vocab_file.empty()
                         ? std::nullopt
                         : std::optional<std::filesystem::path>(vocab_file);
        auto table = table_file.empty()
                         ? std::nullopt
                         : std::optional<std::filesystem::path>(table_file);
        Pipeline pipeline = build_pipeline(std::move(config), vocab, table);

        if (sample_cmd->parsed()) return cmd_sample(pipeline);
        if (build_cmd->parsed()) return cmd_build(pipeline, build_bank_dir);
        if (filter_cmd->parsed()) return cmd_filter(pipeline, filter_bank_dir, filter_out_dir);
        if (segment_cmd->parsed()) {
            return cmd_segment(pipeline, segment_bank_dir, segment_image, segment_out);
        }
        if (explain_cmd->parsed()) {
            return cmd_explain(pipeline, explain_bank_dir, explain_image, explain_x, explain_y,
                               explain_out);
        }
        if (eval_cmd->parsed()) {
            auto dataset = eval_dataset.empty()
                               ? std::nullopt
                               : std::optional<std::filesystem::path>(eval_dataset);
            return cmd_eval(pipeline, eval_bank_dir, eval_scenes, dataset, eval_out);
        }
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;  // runtime failures exit 2
    }
}

}  // namespace protoseg::cli
