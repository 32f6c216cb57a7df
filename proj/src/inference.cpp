#include "protoseg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "protoseg/common.hpp"

namespace protoseg {

namespace {

// Score assigned to a class whose prototype pool is empty (it never wins).
constexpr float kAbsentScore = -1e30f;

std::vector<double> softmax(const std::vector<double>& raw) {
    const double hi = *std::max_element(raw.begin(), raw.end());
    std::vector<double> p(raw.size());
    double total = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        p[i] = std::exp(raw[i] - hi);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

}  // namespace

PrefilterResult prefilter(PrefilterScorer& scorer, const Image& image,
                          const std::vector<Category>& categories,
                          const PrefilterOptions& options) {
    require(!categories.empty(), "prefilter: no categories");
    require(options.eta >= 1 && options.eta <= 16, "prefilter: eta must be in [1, 16]");
    const int n = static_cast<int>(categories.size());

    std::vector<std::string> prompts;
    prompts.reserve(categories.size());
    for (const Category& c : categories) {
        prompts.push_back(make_prompt(options.prompt_template, c.query_text));
    }
    const std::vector<double> raw = scorer.score(image, prompts);
    require(static_cast<int>(raw.size()) == n,
            "prefilter: scorer returned a wrong number of scores");

    PrefilterResult result;
    result.applied = true;
    result.probabilities = softmax(raw);

    // Stage 1: categories more probable than uniform, capped to the eta best.
    const double uniform = 1.0 / n;
    std::vector<int> survivors;
    for (int i = 0; i < n; ++i) {
        if (result.probabilities[i] > uniform) survivors.push_back(i);
    }
    if (survivors.empty()) {
        int best = 0;
        for (int i = 1; i < n; ++i) {
            if (result.probabilities[i] > result.probabilities[best]) best = i;
        }
        survivors.push_back(best);
    }
    if (static_cast<int>(survivors.size()) > options.eta) {
        std::stable_sort(survivors.begin(), survivors.end(), [&](int a, int b) {
            return result.probabilities[a] > result.probabilities[b];
        });
        survivors.resize(static_cast<std::size_t>(options.eta));
        std::sort(survivors.begin(), survivors.end());
    }
    for (int i : survivors) result.stage1.push_back(categories[i].id);

    if (survivors.size() == 1) {
        result.kept = result.stage1;
        result.best_prompt = prompts[static_cast<std::size_t>(survivors[0])];
        return result;
    }

    // Stage 2: every non-empty subset of the survivors as one composite
    // prompt, scored on raw affinity.
    const int m = static_cast<int>(survivors.size());
    const std::uint32_t subsets = (1u << m) - 1u;
    std::vector<std::uint32_t> subset_of_prompt;
    subset_of_prompt.reserve(subsets);
    for (std::uint32_t mask = 1; mask <= subsets; ++mask) {
        std::string query;
        for (int j = 0; j < m; ++j) {
            if ((mask >> j) & 1u) {
                if (!query.empty()) query += " and ";
                query += categories[survivors[j]].query_text;
            }
        }
        result.combination_prompts.push_back(make_prompt(options.prompt_template, query));
        subset_of_prompt.push_back(mask);
    }
    const std::vector<double> comb = scorer.score(image, result.combination_prompts);
    require(comb.size() == result.combination_prompts.size(),
            "prefilter: scorer returned a wrong number of combination scores");
    std::size_t best = 0;
    for (std::size_t i = 1; i < comb.size(); ++i) {
        if (comb[i] > comb[best]) best = i;
    }
    result.best_prompt = result.combination_prompts[best];
    const std::uint32_t best_mask = subset_of_prompt[best];
    for (int j = 0; j < m; ++j) {
        if ((best_mask >> j) & 1u) result.kept.push_back(categories[survivors[j]].id);
    }
    return result;
}

// --- Scoring pool -------------------------------------------------------------

namespace {

using ProtoIdentity = std::tuple<std::uint8_t, std::uint8_t, int, int>;

ProtoIdentity identity_of(const Prototype& p) {
    return {static_cast<std::uint8_t>(p.polarity), static_cast<std::uint8_t>(p.kind),
            p.sample_index, p.cluster_index};
}

struct LogicalProto {
    PrototypeRef ref;
    int class_index = 0;
    std::vector<const Prototype*> per_space;  // parallel to ensemble member order
};

struct ScoringPool {
    std::vector<std::string> class_list;  // background first
    std::vector<std::string> space_order;
    std::vector<double> weights;  // normalized, parallel to space_order
    std::vector<LogicalProto> protos;
    std::vector<std::pair<int, int>> class_ranges;  // [begin, end) into protos
};

// Logical prototypes of one polarity for one category: the prototypes of the
// first ensemble space, kept only when every other space has a matching
// identity.
void append_logical(ScoringPool& pool, const PrototypeBank& bank, const std::string& category_id,
                    Polarity polarity, int class_index) {
    const std::vector<Prototype>* first = bank.find(category_id, pool.space_order.front());
    if (first == nullptr) return;
    for (const Prototype& p : *first) {
        if (p.polarity != polarity) continue;
        LogicalProto lp;
        lp.per_space.push_back(&p);
        bool complete = true;
        for (std::size_t s = 1; s < pool.space_order.size(); ++s) {
            const std::vector<Prototype>* protos = bank.find(category_id, pool.space_order[s]);
            const Prototype* match = nullptr;
            if (protos != nullptr) {
                for (const Prototype& q : *protos) {
                    if (identity_of(q) == identity_of(p)) {
                        match = &q;
                        break;
                    }
                }
            }
            if (match == nullptr) {
                complete = false;
                break;
            }
            lp.per_space.push_back(match);
        }
        if (!complete) continue;
        lp.ref = {category_id, p.polarity, p.kind, p.sample_index, p.cluster_index};
        lp.class_index = class_index;
        pool.protos.push_back(std::move(lp));
    }
}

ScoringPool build_scoring_pool(const PrototypeBank& bank, const Vocabulary& vocabulary,
                               const std::vector<std::string>& kept_categories,
                               const EnsembleSpace& ensemble, const SegmentOptions& options) {
    require(vocabulary.is_expanded(),
            "segmentation needs an expanded vocabulary (background first)");
    require(!kept_categories.empty(), "segmentation needs at least one category");
    require(!ensemble.members.empty(), "segmentation needs at least one ensemble member");

    ScoringPool pool;
    double weight_total = 0.0;
    for (const auto& m : ensemble.members) {
        require(m.weight > 0.0, "ensemble weights must be positive");
        require(std::find(pool.space_order.begin(), pool.space_order.end(), m.space_id) ==
                    pool.space_order.end(),
                "duplicate ensemble member '" + m.space_id + "'");
        pool.space_order.push_back(m.space_id);
        pool.weights.push_back(m.weight);
        weight_total += m.weight;
    }
    for (double& w : pool.weights) w /= weight_total;

    pool.class_list.push_back(vocabulary.background_id);
    for (const std::string& id : kept_categories) {
        const Category* c = vocabulary.find(id);
        require(c != nullptr, "kept category '" + id + "' is not in the vocabulary");
        require(id != vocabulary.background_id, "background cannot be a kept category");
        pool.class_list.push_back(id);
    }

    // Background pool: bg prototypes of the kept categories (or of every bank
    // category when configured so).
    int begin = 0;
    if (options.use_bg_prototypes) {
        const std::vector<std::string> bg_sources =
            options.bg_pool_all_categories ? bank.category_ids() : kept_categories;
        for (const std::string& id : bg_sources) {
            append_logical(pool, bank, id, Polarity::Bg, 0);
        }
    }
    pool.class_ranges.emplace_back(begin, static_cast<int>(pool.protos.size()));
    begin = static_cast<int>(pool.protos.size());

    for (std::size_t k = 1; k < pool.class_list.size(); ++k) {
        const std::string& id = pool.class_list[k];
        for (const std::string& space : pool.space_order) {
            require(bank.find(id, space) != nullptr,
                    "prototype bank is missing category '" + id + "' in space '" + space + "'");
        }
        append_logical(pool, bank, id, Polarity::Fg, static_cast<int>(k));
        require(static_cast<int>(pool.protos.size()) > begin,
                "category '" + id + "' has no prototype shared by every ensemble space");
        pool.class_ranges.emplace_back(begin, static_cast<int>(pool.protos.size()));
        begin = static_cast<int>(pool.protos.size());
    }
    return pool;
}

// Per-window scoring output, at the window's pixel resolution.
struct WindowScores {
    std::vector<FloatGrid> class_scores;
    std::vector<IndexGrid> class_winner;  // pool proto index per pixel, kNoWinner if none
};

// Nearest-neighbor source index per output coordinate; matches resize_nearest.
std::vector<int> nearest_axis_map(int src, int dst) {
    std::vector<int> map(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        int j = static_cast<int>(std::floor((i + 0.5) * scale));
        map[i] = std::clamp(j, 0, src - 1);
    }
    return map;
}

WindowScores score_features(const std::map<std::string, FeatureMap>& features, int out_width,
                            int out_height, const ScoringPool& pool,
                            const SegmentOptions& options) {
    require(out_width > 0 && out_height > 0, "score_features: bad output size");
    const int spaces = static_cast<int>(pool.space_order.size());
    std::vector<const FeatureMap*> fms;
    for (const std::string& space : pool.space_order) {
        auto it = features.find(space);
        require(it != features.end(), "score_features: missing features for space '" + space + "'");
        require(!it->second.empty(), "score_features: empty feature map for space '" + space + "'");
        fms.push_back(&it->second);
    }

    // Per-space cosine tables: proto x feature-grid cell, plus axis maps from
    // window pixels to feature cells.
    const int n_protos = static_cast<int>(pool.protos.size());
    std::vector<std::vector<float>> cos_table(static_cast<std::size_t>(spaces));
    std::vector<std::vector<int>> xmaps(static_cast<std::size_t>(spaces));
    std::vector<std::vector<int>> ymaps(static_cast<std::size_t>(spaces));
    for (int s = 0; s < spaces; ++s) {
        const FeatureMap& fm = *fms[s];
        const std::size_t cells = static_cast<std::size_t>(fm.width) * fm.height;
        xmaps[s] = nearest_axis_map(fm.width, out_width);
        ymaps[s] = nearest_axis_map(fm.height, out_height);

        std::vector<double> cell_norm(cells, 0.0);
        for (std::size_t cell = 0; cell < cells; ++cell) {
            const float* f = &fm.data[cell * fm.dim];
            double acc = 0.0;
            for (int d = 0; d < fm.dim; ++d) acc += static_cast<double>(f[d]) * f[d];
            cell_norm[cell] = std::sqrt(acc);
        }

        cos_table[s].assign(static_cast<std::size_t>(n_protos) * cells, 0.0f);
        for (int pi = 0; pi < n_protos; ++pi) {
            const Prototype& proto = *pool.protos[static_cast<std::size_t>(pi)].per_space[s];
            require(static_cast<int>(proto.values.size()) == fm.dim,
                    "prototype dimension differs from the feature map in space '" +
                        pool.space_order[static_cast<std::size_t>(s)] + "'");
            double pacc = 0.0;
            for (float v : proto.values) pacc += static_cast<double>(v) * v;
            const double pnorm = std::sqrt(pacc);
            float* row = &cos_table[s][static_cast<std::size_t>(pi) * cells];
            if (pnorm == 0.0) continue;  // zero prototype scores 0 everywhere
            for (std::size_t cell = 0; cell < cells; ++cell) {
                if (cell_norm[cell] == 0.0) continue;
                const float* f = &fm.data[cell * fm.dim];
                double dot = 0.0;
                for (int d = 0; d < fm.dim; ++d) dot += static_cast<double>(f[d]) * proto.values[d];
                row[cell] = static_cast<float>(dot / (cell_norm[cell] * pnorm));
            }
        }
    }

    const int n_classes = static_cast<int>(pool.class_list.size());
    WindowScores out;
    out.class_scores.assign(static_cast<std::size_t>(n_classes),
                            FloatGrid(out_width, out_height, kAbsentScore));
    out.class_winner.assign(static_cast<std::size_t>(n_classes),
                            IndexGrid(out_width, out_height, kNoWinner));

    std::vector<std::size_t> cell_of_space(static_cast<std::size_t>(spaces));
    for (int y = 0; y < out_height; ++y) {
        for (int s = 0; s < spaces; ++s) {
            cell_of_space[s] = static_cast<std::size_t>(ymaps[s][y]) * fms[s]->width;
        }
        for (int x = 0; x < out_width; ++x) {
            const std::size_t pixel = static_cast<std::size_t>(y) * out_width + x;
            for (int c = 0; c < n_classes; ++c) {
                const auto [b, e] = pool.class_ranges[static_cast<std::size_t>(c)];
                float best = kAbsentScore;
                std::uint16_t best_idx = kNoWinner;
                for (int pi = b; pi < e; ++pi) {
                    double v = 0.0;
                    for (int s = 0; s < spaces; ++s) {
                        const std::size_t cells =
                            static_cast<std::size_t>(fms[s]->width) * fms[s]->height;
                        const std::size_t cell = cell_of_space[s] + xmaps[s][x];
                        v += pool.weights[s] *
                             cos_table[s][static_cast<std::size_t>(pi) * cells + cell];
                    }
                    if (v > best) {
                        best = static_cast<float>(v);
                        best_idx = static_cast<std::uint16_t>(pi);
                    }
                }
                out.class_scores[c].values[pixel] = best;
                out.class_winner[c].values[pixel] = best_idx;
            }
        }
    }

    // Foreground-threshold mode: background scores a flat threshold and has no
    // winning prototype.
    if (!options.use_bg_prototypes) {
        std::fill(out.class_scores[0].values.begin(), out.class_scores[0].values.end(),
                  options.fg_threshold);
        std::fill(out.class_winner[0].values.begin(), out.class_winner[0].values.end(), kNoWinner);
    }
    return out;
}

std::vector<PrototypeRef> pool_refs_of(const ScoringPool& pool) {
    std::vector<PrototypeRef> refs;
    refs.reserve(pool.protos.size());
    for (const LogicalProto& lp : pool.protos) refs.push_back(lp.ref);
    return refs;
}

// Argmax over mean class scores; ties keep the lowest class index, so
// background (index 0) wins ties against everything. Fills result.labels with
// expanded-vocabulary indices and returns the winning class_list index per
// pixel for winner-prototype lookup.
std::vector<std::uint16_t> finalize_labels(SegmentationResult& result,
                                           const Vocabulary& vocabulary) {
    const int n_classes = static_cast<int>(result.class_list.size());
    std::vector<std::uint16_t> vocab_index(static_cast<std::size_t>(n_classes), 0);
    for (int c = 1; c < n_classes; ++c) {
        int idx = -1;
        for (std::size_t i = 0; i < vocabulary.categories.size(); ++i) {
            if (vocabulary.categories[i].id == result.class_list[static_cast<std::size_t>(c)]) {
                idx = static_cast<int>(i);
                break;
            }
        }
        require(idx >= 0, "class '" + result.class_list[static_cast<std::size_t>(c)] +
                              "' is not in the vocabulary");
        vocab_index[static_cast<std::size_t>(c)] = static_cast<std::uint16_t>(idx);
    }

    result.labels = IndexGrid(result.width, result.height, 0);
    const std::size_t pixels = static_cast<std::size_t>(result.width) * result.height;
    std::vector<std::uint16_t> win_class(pixels, 0);
    for (std::size_t p = 0; p < pixels; ++p) {
        int best = 0;
        float best_score = result.scores[0].values[p];
        for (int c = 1; c < n_classes; ++c) {
            const float v = result.scores[static_cast<std::size_t>(c)].values[p];
            if (v > best_score) {
                best_score = v;
                best = c;
            }
        }
        win_class[p] = static_cast<std::uint16_t>(best);
        result.labels.values[p] = vocab_index[static_cast<std::size_t>(best)];
    }
    return win_class;
}

}  // namespace

std::vector<int> window_positions(int dim, int window, int stride) {
    require(dim > 0 && window > 0 && stride > 0, "window_positions: bad arguments");
    if (window >= dim) return {0};
    std::vector<int> out;
    for (int p = 0; p + window <= dim; p += stride) out.push_back(p);
    if (out.back() + window < dim) out.push_back(dim - window);
    return out;
}

SegmentationResult segment_features(const std::map<std::string, FeatureMap>& features,
                                    int out_width, int out_height, const PrototypeBank& bank,
                                    const Vocabulary& vocabulary,
                                    const std::vector<std::string>& kept_categories,
                                    const EnsembleSpace& ensemble, const SegmentOptions& options) {
    const ScoringPool pool = build_scoring_pool(bank, vocabulary, kept_categories, ensemble,
                                                options);
    WindowScores ws = score_features(features, out_width, out_height, pool, options);

    SegmentationResult result;
    result.width = out_width;
    result.height = out_height;
    result.class_list = pool.class_list;
    result.scores = std::move(ws.class_scores);
    result.pool_refs = pool_refs_of(pool);

    const std::vector<std::uint16_t> win_class = finalize_labels(result, vocabulary);
    result.winner = IndexGrid(out_width, out_height, kNoWinner);
    const std::size_t pixels = static_cast<std::size_t>(out_width) * out_height;
    for (std::size_t p = 0; p < pixels; ++p) {
        result.winner.values[p] = ws.class_winner[win_class[p]].values[p];
    }
    return result;
}

SegmentationResult segment(const Image& image,
                           const std::map<std::string, ExtractorAdapter*>& extractors,
                           const EnsembleSpace& ensemble, const PrototypeBank& bank,
                           const Vocabulary& vocabulary, PrefilterScorer* prefilter_scorer,
                           const PrefilterOptions& prefilter_options,
                           const SegmentOptions& options) {
    require(!image.empty(), "segment: empty image");
    require(vocabulary.is_expanded(), "segment: vocabulary must be expanded (background first)");
    require(!options.window_sizes.empty(), "segment: no window sizes");
    require(options.window_stride > 0, "segment: stride must be positive");
    require(options.shortest_side > 0, "segment: shortest side must be positive");
    for (const auto& m : ensemble.members) {
        auto it = extractors.find(m.space_id);
        require(it != extractors.end() && it->second != nullptr,
                "segment: no extractor for ensemble space '" + m.space_id + "'");
    }

    // Vocabulary categories to consider (everything except background).
    std::vector<Category> candidates;
    for (std::size_t i = 1; i < vocabulary.categories.size(); ++i) {
        candidates.push_back(vocabulary.categories[i]);
    }
    require(!candidates.empty(), "segment: vocabulary has no categories besides background");

    PrefilterResult pf;
    if (prefilter_scorer != nullptr && prefilter_options.enabled) {
        pf = prefilter(*prefilter_scorer, image, candidates, prefilter_options);
    } else {
        for (const Category& c : candidates) pf.kept.push_back(c.id);
    }

    const Image work = resize_shortest_side(image, options.shortest_side);
    const int W = work.width, H = work.height;

    const ScoringPool pool = build_scoring_pool(bank, vocabulary, pf.kept, ensemble, options);
    const int n_classes = static_cast<int>(pool.class_list.size());
    const std::size_t pixels = static_cast<std::size_t>(W) * H;

    std::vector<FloatGrid> sum(static_cast<std::size_t>(n_classes), FloatGrid(W, H, 0.0f));
    std::vector<std::uint32_t> coverage(pixels, 0);
    std::vector<FloatGrid> best_score(static_cast<std::size_t>(n_classes),
                                      FloatGrid(W, H, -std::numeric_limits<float>::infinity()));
    std::vector<IndexGrid> best_proto(static_cast<std::size_t>(n_classes),
                                      IndexGrid(W, H, kNoWinner));

    for (int window : options.window_sizes) {
        require(window > 0, "segment: window sizes must be positive");
        const int wx = std::min(window, W);
        const int wy = std::min(window, H);
        const std::vector<int> xs = window_positions(W, wx, options.window_stride);
        const std::vector<int> ys = window_positions(H, wy, options.window_stride);
        for (int y0 : ys) {
            for (int x0 : xs) {
                const Image tile = crop(work, x0, y0, wx, wy);
                std::map<std::string, FeatureMap> features;
                for (const std::string& space : pool.space_order) {
                    features.emplace(space, extract(tile, *extractors.at(space)));
                }
                WindowScores ws = score_features(features, wx, wy, pool, options);
                for (int y = 0; y < wy; ++y) {
                    const std::size_t row = static_cast<std::size_t>(y0 + y) * W + x0;
                    const std::size_t wrow = static_cast<std::size_t>(y) * wx;
                    for (int x = 0; x < wx; ++x) {
                        ++coverage[row + x];
                        for (int c = 0; c < n_classes; ++c) {
                            const float v = ws.class_scores[c].values[wrow + x];
                            sum[c].values[row + x] += v;
                            if (v > best_score[c].values[row + x]) {
                                best_score[c].values[row + x] = v;
                                best_proto[c].values[row + x] = ws.class_winner[c].values[wrow + x];
                            }
                        }
                    }
                }
            }
        }
    }

    SegmentationResult result;
    result.width = W;
    result.height = H;
    result.class_list = pool.class_list;
    result.pool_refs = pool_refs_of(pool);
    result.prefilter = std::move(pf);
    result.scores.assign(static_cast<std::size_t>(n_classes), FloatGrid(W, H, 0.0f));
    for (std::size_t p = 0; p < pixels; ++p) {
        require(coverage[p] > 0, "segment: tiling left a pixel uncovered");
        for (int c = 0; c < n_classes; ++c) {
            result.scores[static_cast<std::size_t>(c)].values[p] =
                sum[static_cast<std::size_t>(c)].values[p] / static_cast<float>(coverage[p]);
        }
    }
    if (!options.use_bg_prototypes) {
        std::fill(result.scores[0].values.begin(), result.scores[0].values.end(),
                  options.fg_threshold);
    }
    if (options.refine) options.refine(work, result.scores);

    const std::vector<std::uint16_t> win_class = finalize_labels(result, vocabulary);
    result.winner = IndexGrid(W, H, kNoWinner);
    for (std::size_t p = 0; p < pixels; ++p) {
        result.winner.values[p] = best_proto[win_class[p]].values[p];
    }
    return result;
}

}  // namespace protoseg
