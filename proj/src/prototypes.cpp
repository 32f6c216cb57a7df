#include "protoseg/prototypes.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"
#include "protoseg/binio.hpp"
#include "protoseg/common.hpp"
#include "protoseg/kmeans.hpp"
#include "protoseg/rng.hpp"

namespace protoseg {

using nlohmann::json;

std::string_view polarity_name(Polarity p) {
    switch (p) {
        case Polarity::Fg: return "fg";
        case Polarity::Bg: return "bg";
    }
    throw Error("polarity_name: bad polarity value");
}

std::string_view proto_kind_name(ProtoKind k) {
    switch (k) {
        case ProtoKind::Class: return "class";
        case ProtoKind::Instance: return "instance";
        case ProtoKind::Part: return "part";
    }
    throw Error("proto_kind_name: bad kind value");
}

namespace {

Polarity polarity_from_name(const std::string& name) {
    if (name == "fg") return Polarity::Fg;
    if (name == "bg") return Polarity::Bg;
    throw Error("unknown polarity name '" + name + "'");
}

ProtoKind proto_kind_from_name(const std::string& name) {
    if (name == "class") return ProtoKind::Class;
    if (name == "instance") return ProtoKind::Instance;
    if (name == "part") return ProtoKind::Part;
    throw Error("unknown prototype kind name '" + name + "'");
}

}  // namespace

bool PrototypeBank::has(const std::string& category_id) const {
    return entries.contains(category_id);
}

const std::vector<Prototype>* PrototypeBank::find(const std::string& category_id,
                                                  const std::string& space_id) const {
    auto cat = entries.find(category_id);
    if (cat == entries.end()) return nullptr;
    auto space = cat->second.find(space_id);
    if (space == cat->second.end()) return nullptr;
    return &space->second;
}

std::vector<std::string> PrototypeBank::category_ids() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& [id, _] : entries) out.push_back(id);
    return out;
}

std::vector<std::string> PrototypeBank::space_ids() const {
    std::set<std::string> ids;
    for (const auto& [_, spaces] : entries) {
        for (const auto& [space, __] : spaces) ids.insert(space);
    }
    return {ids.begin(), ids.end()};
}

void PrototypeBank::add(const std::string& category_id, const std::string& space_id,
                        std::vector<Prototype> prototypes) {
    auto& spaces = entries[category_id];
    require(!spaces.contains(space_id), "prototype bank already holds category '" + category_id +
                                            "' in space '" + space_id + "'");
    spaces.emplace(space_id, std::move(prototypes));
}

namespace {

// All feature vectors under the mask (nearest-resized to the feature grid),
// flattened row-major.
std::vector<float> masked_vectors(const FeatureMap& features, const BinaryMask& mask) {
    const BinaryMask m = resize_nearest(mask, features.width, features.height);
    std::vector<float> pool;
    for (int y = 0; y < features.height; ++y) {
        for (int x = 0; x < features.width; ++x) {
            if (!m.values[static_cast<std::size_t>(y) * features.width + x]) continue;
            auto v = features.at(x, y);
            pool.insert(pool.end(), v.begin(), v.end());
        }
    }
    return pool;
}

void append_polarity_prototypes(std::vector<Prototype>& out, Polarity polarity,
                                const std::vector<FeatureMap>& feature_maps,
                                const std::vector<const BinaryMask*>& masks, int k_parts,
                                std::uint64_t kmeans_seed) {
    const int dim = feature_maps.front().dim;

    // Instance vectors first; the class prototype is their weighted mean.
    std::vector<Prototype> instances;
    for (std::size_t i = 0; i < feature_maps.size(); ++i) {
        auto mm = masked_mean(feature_maps[i], *masks[i]);
        if (!mm) continue;
        Prototype p;
        p.values = std::move(mm->mean);
        p.polarity = polarity;
        p.kind = ProtoKind::Instance;
        p.sample_index = static_cast<int>(i);
        p.pixel_count = mm->pixel_count;
        instances.push_back(std::move(p));
    }
    if (instances.empty()) return;

    Prototype cls;
    cls.values.assign(static_cast<std::size_t>(dim), 0.0f);
    cls.polarity = polarity;
    cls.kind = ProtoKind::Class;
    {
        std::vector<double> acc(static_cast<std::size_t>(dim), 0.0);
        double total = 0.0;
        for (const Prototype& inst : instances) {
            const double w = static_cast<double>(inst.pixel_count);
            for (int d = 0; d < dim; ++d) acc[d] += w * inst.values[d];
            total += w;
        }
        for (int d = 0; d < dim; ++d) cls.values[d] = static_cast<float>(acc[d] / total);
        cls.pixel_count = static_cast<std::int64_t>(total);
    }
    out.push_back(std::move(cls));
    for (Prototype& inst : instances) out.push_back(std::move(inst));

    // Part prototypes: cluster the pooled masked vectors across all samples.
    std::vector<float> pool;
    for (std::size_t i = 0; i < feature_maps.size(); ++i) {
        std::vector<float> v = masked_vectors(feature_maps[i], *masks[i]);
        pool.insert(pool.end(), v.begin(), v.end());
    }
    if (pool.empty()) return;
    KMeansResult clusters = kmeans(pool, dim, k_parts, kmeans_seed);
    std::vector<std::int64_t> sizes(static_cast<std::size_t>(clusters.k), 0);
    for (std::int32_t a : clusters.assignment) ++sizes[static_cast<std::size_t>(a)];
    for (int c = 0; c < clusters.k; ++c) {
        // A cluster that owns no vectors (fewer distinct inputs than k) would
        // duplicate another centroid with nothing to attribute it to; skip it.
        if (sizes[static_cast<std::size_t>(c)] == 0) continue;
        Prototype p;
        auto centroid = clusters.centroid(c);
        p.values.assign(centroid.begin(), centroid.end());
        p.polarity = polarity;
        p.kind = ProtoKind::Part;
        p.cluster_index = c;
        p.pixel_count = sizes[static_cast<std::size_t>(c)];
        out.push_back(std::move(p));
    }
}

}  // namespace

std::vector<Prototype> build_category_space(const SupportSet& set,
                                            const std::vector<FgBgMasks>& masks,
                                            ExtractorAdapter& extractor,
                                            const BankBuildOptions& options) {
    require(!set.samples.empty(), "build_category_space: empty support set");
    require(set.samples.size() == masks.size(),
            "build_category_space: need one fg/bg mask pair per support sample");
    require(options.k_parts > 0, "build_category_space: k_parts must be positive");

    std::vector<FeatureMap> feature_maps;
    feature_maps.reserve(set.samples.size());
    std::vector<const BinaryMask*> fg_masks, bg_masks;
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        const SupportSample& s = set.samples[i];
        require(masks[i].fg.width == s.image.width && masks[i].fg.height == s.image.height &&
                    masks[i].bg.width == s.image.width && masks[i].bg.height == s.image.height,
                "build_category_space: mask size differs from support image size");
        feature_maps.push_back(extract(s.image, extractor));
        fg_masks.push_back(&masks[i].fg);
        bg_masks.push_back(&masks[i].bg);
    }

    const std::string space = extractor.space_id();
    std::vector<Prototype> out;
    const std::uint64_t space_seed = hash_combine(set.seed, fnv1a64(space));
    append_polarity_prototypes(out, Polarity::Fg, feature_maps, fg_masks, options.k_parts,
                               hash_combine(space_seed, static_cast<std::uint64_t>(Polarity::Fg)));
    require(!out.empty(), "category '" + set.category_id +
                              "' produced no foreground evidence in space '" + space + "'");
    append_polarity_prototypes(out, Polarity::Bg, feature_maps, bg_masks, options.k_parts,
                               hash_combine(space_seed, static_cast<std::uint64_t>(Polarity::Bg)));
    return out;
}

std::map<std::string, std::vector<Prototype>> build_category(
    const SupportSet& set, const std::vector<FgBgMasks>& masks,
    const std::vector<ExtractorAdapter*>& extractors, const BankBuildOptions& options) {
    require(!extractors.empty(), "build_category: no extractors");
    std::map<std::string, std::vector<Prototype>> out;
    for (ExtractorAdapter* e : extractors) {
        require(e != nullptr, "build_category: null extractor");
        require(!out.contains(e->space_id()),
                "build_category: duplicate feature space '" + e->space_id() + "'");
        out.emplace(e->space_id(), build_category_space(set, masks, *e, options));
    }
    return out;
}

PrototypeBank stuff_filter(const PrototypeBank& bank, const Vocabulary& vocabulary,
                           double threshold, StuffFilterStats* stats) {
    StuffFilterStats local;
    auto tag_of = [&](const std::string& category_id) {
        const Category* c = vocabulary.find(category_id);
        if (c == nullptr) {
            log_warn("stuff filter: category '" + category_id +
                     "' is not in the vocabulary; treating as thing");
            return Tag::Thing;
        }
        return c->tag;
    };

    // Gather stuff foreground prototypes per space.
    std::map<std::string, std::vector<const Prototype*>> stuff_fg;
    bool any_stuff = false;
    for (const auto& [category_id, spaces] : bank.entries) {
        if (tag_of(category_id) != Tag::Stuff) continue;
        any_stuff = true;
        for (const auto& [space_id, protos] : spaces) {
            for (const Prototype& p : protos) {
                if (p.polarity == Polarity::Fg) stuff_fg[space_id].push_back(&p);
            }
        }
    }
    if (!any_stuff) {
        if (stats != nullptr) *stats = local;
        return bank;
    }
    local.applied = true;

    PrototypeBank out;
    for (const auto& [category_id, spaces] : bank.entries) {
        const bool is_stuff = tag_of(category_id) == Tag::Stuff;
        for (const auto& [space_id, protos] : spaces) {
            std::vector<Prototype> kept;
            kept.reserve(protos.size());
            const auto* anchors = [&]() -> const std::vector<const Prototype*>* {
                auto it = stuff_fg.find(space_id);
                return it == stuff_fg.end() ? nullptr : &it->second;
            }();
            for (const Prototype& p : protos) {
                if (p.polarity == Polarity::Fg) {
                    kept.push_back(p);
                    continue;
                }
                if (is_stuff) {
                    ++local.dropped_stuff_bg;
                    continue;
                }
                bool redundant = false;
                if (anchors != nullptr) {
                    for (const Prototype* anchor : *anchors) {
                        if (cosine_sim(p.values, anchor->values) > threshold) {
                            redundant = true;
                            break;
                        }
                    }
                }
                if (redundant) {
                    ++local.dropped_thing_bg;
                } else {
                    kept.push_back(p);
                }
            }
            out.add(category_id, space_id, std::move(kept));
        }
    }
    if (stats != nullptr) *stats = local;
    return out;
}

std::vector<std::uint8_t> encode_pvec(const std::vector<Prototype>& prototypes) {
    const int dim = prototypes.empty() ? 0 : static_cast<int>(prototypes.front().values.size());
    std::uint32_t polarity_mask = 0, kind_mask = 0;
    std::vector<std::uint8_t> payload;
    payload.reserve(prototypes.size() * static_cast<std::size_t>(dim) * 4);
    for (const Prototype& p : prototypes) {
        require(static_cast<int>(p.values.size()) == dim,
                "encode_pvec: prototypes disagree on dimension");
        polarity_mask |= static_cast<std::uint32_t>(p.polarity);
        kind_mask |= static_cast<std::uint32_t>(p.kind);
        for (float v : p.values) put_f32(payload, v);
    }

    std::vector<std::uint8_t> out;
    out.reserve(24 + payload.size());
    put_u32(out, kPvecMagic);
    put_u32(out, static_cast<std::uint32_t>(prototypes.size()));
    put_u32(out, static_cast<std::uint32_t>(dim));
    put_u32(out, polarity_mask);
    put_u32(out, kind_mask);
    put_u32(out, crc32_bytes(payload));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

PvecPayload decode_pvec(const std::vector<std::uint8_t>& bytes) {
    require(bytes.size() >= 24, "prototype file is too small for its header");
    require(get_u32(bytes, 0) == kPvecMagic, "prototype file has a bad magic number");
    PvecPayload out;
    out.count = static_cast<int>(get_u32(bytes, 4));
    out.dim = static_cast<int>(get_u32(bytes, 8));
    out.polarity_mask = get_u32(bytes, 12);
    out.kind_mask = get_u32(bytes, 16);
    const std::uint32_t expected_crc = get_u32(bytes, 20);
    const std::size_t payload_size =
        static_cast<std::size_t>(out.count) * static_cast<std::size_t>(out.dim) * 4;
    require(bytes.size() == 24 + payload_size, "prototype file size disagrees with its header");
    const std::span<const std::uint8_t> payload(bytes.data() + 24, payload_size);
    require(crc32_bytes(payload) == expected_crc, "prototype payload failed its checksum");
    out.values.resize(static_cast<std::size_t>(out.count) * out.dim);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = get_f32(bytes, 24 + i * 4);
    return out;
}

namespace {

std::string bank_file_name(const std::string& category_id, const std::string& space_id) {
    std::string slug = slugify(category_id);
    if (slug.empty()) slug = "category";
    return slug + "-" + hex64(fnv1a64(category_id)) + "." + space_id + ".pvec";
}

std::string hex32(std::uint32_t v) {
    static const char digits[] = "0123456789abcdef";
    std::string out(8, '0');
    for (int i = 7; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xFu];
        v >>= 4;
    }
    return out;
}

// Strict inverse of hex32 + "\n": exactly 8 lowercase hex digits, at most one
// trailing newline. Anything else counts as a corrupted checksum file.
std::uint32_t parse_crc_sidecar(std::string text, const std::string& context) {
    if (!text.empty() && text.back() == '\n') text.pop_back();
    require(text.size() == 8, context + " must hold exactly 8 hex digits");
    std::uint32_t v = 0;
    for (char c : text) {
        v <<= 4;
        if (c >= '0' && c <= '9') {
            v |= static_cast<std::uint32_t>(c - '0');
        } else if (c >= 'a' && c <= 'f') {
            v |= static_cast<std::uint32_t>(c - 'a' + 10);
        } else {
            throw Error(context + " holds a non-hex character");
        }
    }
    return v;
}

}  // namespace

void save_bank(const PrototypeBank& bank, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json categories = json::object();
    for (const auto& [category_id, spaces] : bank.entries) {
        json per_space = json::object();
        for (const auto& [space_id, protos] : spaces) {
            const std::string file_name = bank_file_name(category_id, space_id);
            const std::vector<std::uint8_t> bytes = encode_pvec(protos);
            write_file_bytes(dir / file_name, bytes);

            json meta;
            meta["file"] = file_name;
            meta["crc32"] = crc32_bytes(bytes);
            meta["count"] = static_cast<int>(protos.size());
            meta["dim"] = protos.empty() ? 0 : static_cast<int>(protos.front().values.size());
            json provenance = json::array();
            for (const Prototype& p : protos) {
                json entry;
                entry["polarity"] = std::string(polarity_name(p.polarity));
                entry["kind"] = std::string(proto_kind_name(p.kind));
                entry["sample_index"] = p.sample_index;
                entry["cluster_index"] = p.cluster_index;
                entry["pixel_count"] = p.pixel_count;
                provenance.push_back(std::move(entry));
            }
            meta["prototypes"] = std::move(provenance);
            per_space[space_id] = std::move(meta);
        }
        categories[category_id] = std::move(per_space);
    }

    json manifest;
    manifest["format"] = "prototype-bank-v1";
    manifest["categories"] = std::move(categories);
    const std::string text = manifest.dump(2) + "\n";
    write_file_text(dir / "manifest.json", text);
    // Raw-byte sidecar checksum: unlike a checksum over the re-parsed
    // document, this catches flips of insignificant bytes (indentation,
    // newlines) as well.
    write_file_text(dir / "manifest.crc", hex32(crc32_string(text)) + "\n");
}

PrototypeBank load_bank(const std::filesystem::path& dir) {
    const std::filesystem::path manifest_path = dir / "manifest.json";
    require(std::filesystem::exists(manifest_path),
            "prototype bank manifest not found at " + manifest_path.string());
    const std::filesystem::path crc_path = dir / "manifest.crc";
    require(std::filesystem::exists(crc_path),
            "prototype bank manifest checksum not found at " + crc_path.string());
    const std::string text = read_file_text(manifest_path);
    const std::uint32_t recorded =
        parse_crc_sidecar(read_file_text(crc_path), crc_path.string());
    require(crc32_string(text) == recorded,
            "prototype bank manifest failed its checksum");
    json manifest = json::parse(text);
    require(manifest.value("format", "") == "prototype-bank-v1",
            "unsupported prototype bank format in " + manifest_path.string());

    PrototypeBank bank;
    for (const auto& [category_id, spaces] : manifest.at("categories").items()) {
        for (const auto& [space_id, meta] : spaces.items()) {
            const std::vector<std::uint8_t> bytes =
                read_file_bytes(dir / meta.at("file").get<std::string>());
            require(crc32_bytes(bytes) == meta.at("crc32").get<std::uint32_t>(),
                    "prototype file " + meta.at("file").get<std::string>() +
                        " failed its checksum");
            const PvecPayload payload = decode_pvec(bytes);
            require(payload.count == meta.at("count").get<int>() &&
                        payload.dim == meta.at("dim").get<int>(),
                    "prototype file " + meta.at("file").get<std::string>() +
                        " disagrees with the manifest");
            const json& provenance = meta.at("prototypes");
            require(static_cast<int>(provenance.size()) == payload.count,
                    "prototype provenance count disagrees with the payload");
            std::vector<Prototype> protos;
            protos.reserve(static_cast<std::size_t>(payload.count));
            for (int i = 0; i < payload.count; ++i) {
                const json& entry = provenance[static_cast<std::size_t>(i)];
                Prototype p;
                p.values.assign(
                    payload.values.begin() + static_cast<std::ptrdiff_t>(i) * payload.dim,
                    payload.values.begin() + static_cast<std::ptrdiff_t>(i + 1) * payload.dim);
                p.polarity = polarity_from_name(entry.at("polarity").get<std::string>());
                p.kind = proto_kind_from_name(entry.at("kind").get<std::string>());
                p.sample_index = entry.at("sample_index").get<int>();
                p.cluster_index = entry.at("cluster_index").get<int>();
                p.pixel_count = entry.at("pixel_count").get<std::int64_t>();
                protos.push_back(std::move(p));
            }
            bank.add(category_id, space_id, std::move(protos));
        }
    }
    return bank;
}

PrototypeBank merge_banks(const PrototypeBank& a, const PrototypeBank& b) {
    PrototypeBank out = a;
    for (const auto& [category_id, spaces] : b.entries) {
        for (const auto& [space_id, protos] : spaces) {
            out.add(category_id, space_id, protos);
        }
    }
    return out;
}

std::uint64_t bank_digest(const PrototypeBank& bank) {
    std::vector<std::uint8_t> buffer;
    for (const auto& [category_id, spaces] : bank.entries) {
        for (const auto& [space_id, protos] : spaces) {
            for (char c : category_id) buffer.push_back(static_cast<std::uint8_t>(c));
            buffer.push_back(0);
            for (char c : space_id) buffer.push_back(static_cast<std::uint8_t>(c));
            buffer.push_back(0);
            for (const Prototype& p : protos) {
                buffer.push_back(static_cast<std::uint8_t>(p.polarity));
                buffer.push_back(static_cast<std::uint8_t>(p.kind));
                put_u32(buffer, static_cast<std::uint32_t>(p.sample_index));
                put_u32(buffer, static_cast<std::uint32_t>(p.cluster_index));
                put_u32(buffer, static_cast<std::uint32_t>(p.pixel_count));
                put_u32(buffer, static_cast<std::uint32_t>(p.pixel_count >> 32));
                for (float v : p.values) put_f32(buffer, v);
            }
        }
    }
    return fnv1a64(std::span<const std::uint8_t>(buffer));
}

}  // namespace protoseg
