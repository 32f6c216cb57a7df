#include "protoseg/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <json.hpp>

#include "protoseg/binio.hpp"
#include "protoseg/common.hpp"
#include "protoseg/rng.hpp"

namespace protoseg {

using nlohmann::json;

std::string_view tag_name(Tag tag) { return tag == Tag::Thing ? "thing" : "stuff"; }

std::optional<Tag> tag_from_name(std::string_view name) {
    std::string key = normalize_key(name);
    if (key == "thing" || key == "things") return Tag::Thing;
    if (key == "stuff") return Tag::Stuff;
    return std::nullopt;
}

const Category* Vocabulary::find(std::string_view id) const {
    for (const auto& c : categories)
        if (c.id == id) return &c;
    return nullptr;
}

std::optional<Tag> ThingStuffTable::lookup(std::string_view name) const {
    auto it = entries.find(normalize_key(name));
    if (it == entries.end()) return std::nullopt;
    return it->second;
}

std::string make_prompt(std::string_view tmpl, std::string_view query_text) {
    require(!query_text.empty(), "make_prompt: empty query text");
    std::size_t first = tmpl.find(kPromptPlaceholder);
    require(first != std::string_view::npos,
            "make_prompt: template has no '" + std::string(kPromptPlaceholder) + "' placeholder");
    require(tmpl.find(kPromptPlaceholder, first + 1) == std::string_view::npos,
            "make_prompt: template has multiple placeholders");
    std::string out(tmpl.substr(0, first));
    out += query_text;
    out += tmpl.substr(first + kPromptPlaceholder.size());
    return out;
}

std::string make_prompt(const Category& category, std::string_view tmpl) {
    require(!category.query_text.empty(),
            "make_prompt: empty query text for '" + category.id + "'");
    return make_prompt(tmpl, category.query_text);
}

std::string normalize_key(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    bool pending_space = false;
    for (char raw : name) {
        unsigned char c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

Vocabulary tag_vocabulary(Vocabulary vocab, const ThingStuffTable& table) {
    for (auto& category : vocab.categories) {
        auto tag = table.lookup(category.query_text);
        if (!tag) tag = table.lookup(category.id);
        if (tag) {
            category.tag = *tag;
        } else {
            log_warn("thing/stuff table has no entry for '" + category.id +
                     "'; keeping its '" + std::string(tag_name(category.tag)) + "' tag");
        }
    }
    return vocab;
}

ThingStuffTable merge_tables(const ThingStuffTable& base, const ThingStuffTable& override_table) {
    ThingStuffTable merged = base;
    for (const auto& [key, tag] : override_table.entries) merged.entries[key] = tag;
    merged.source = override_table.source;
    return merged;
}

Category background_category(const Vocabulary& vocab) {
    Category bg;
    bg.id = vocab.background_id;
    bg.query_text = "background";
    bg.tag = Tag::Stuff;
    bg.seed = fnv1a64(vocab.background_id);
    return bg;
}

Vocabulary expand_with_background(const Vocabulary& vocab) {
    require(!vocab.categories.empty(), "expand_with_background: empty vocabulary");
    require(!vocab.has(vocab.background_id),
            "expand_with_background: background id '" + vocab.background_id +
                "' collides with a category (already expanded?)");
    Vocabulary out;
    out.background_id = vocab.background_id;
    out.categories.reserve(vocab.categories.size() + 1);
    out.categories.push_back(background_category(vocab));
    out.categories.insert(out.categories.end(), vocab.categories.begin(),
                          vocab.categories.end());
    return out;
}

void assign_default_seeds(Vocabulary& vocab, std::uint64_t global_seed) {
    for (auto& category : vocab.categories)
        if (category.seed == 0)
            category.seed = hash_combine(global_seed, fnv1a64(category.id));
}

namespace {

void validate_vocabulary(const Vocabulary& vocab) {
    require(!vocab.categories.empty(), "vocabulary must contain at least one category");
    std::set<std::string> ids;
    for (const auto& c : vocab.categories) {
        require(!c.id.empty(), "vocabulary: empty category id");
        require(!c.query_text.empty(), "vocabulary: empty query text for '" + c.id + "'");
        require(ids.insert(c.id).second, "vocabulary: duplicate category id '" + c.id + "'");
    }
    require(ids.find(vocab.background_id) == ids.end(),
            "vocabulary: background id collides with category '" + vocab.background_id + "'");
}

}  // namespace

Vocabulary load_vocabulary(const std::filesystem::path& path) {
    json doc = json::parse(read_file_text(path));
    Vocabulary vocab;
    if (doc.contains("background_id")) vocab.background_id = doc.at("background_id");
    for (const auto& entry : doc.at("categories")) {
        Category c;
        c.id = entry.at("id");
        c.query_text = entry.value("query_text", c.id);
        if (entry.contains("tag")) {
            auto tag = tag_from_name(entry.at("tag").get<std::string>());
            require(tag.has_value(), "vocabulary: unknown tag for '" + c.id + "'");
            c.tag = *tag;
        }
        c.seed = entry.value("seed", std::uint64_t{0});
        vocab.categories.push_back(std::move(c));
    }
    validate_vocabulary(vocab);
    return vocab;
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
    json doc;
    doc["background_id"] = vocab.background_id;
    json cats = json::array();
    for (const auto& c : vocab.categories) {
        json entry;
        entry["id"] = c.id;
        entry["query_text"] = c.query_text;
        entry["tag"] = std::string(tag_name(c.tag));
        entry["seed"] = c.seed;
        cats.push_back(std::move(entry));
    }
    doc["categories"] = std::move(cats);
    write_file_text(path, doc.dump(2) + "\n");
}

ThingStuffTable load_thing_stuff_table(const std::filesystem::path& path, TableSource source) {
    json doc = json::parse(read_file_text(path));
    ThingStuffTable table;
    table.source = source;
    for (const auto& entry : doc.at("entries")) {
        std::string name = entry.at("name");
        auto tag = tag_from_name(entry.at("tag").get<std::string>());
        require(tag.has_value(), "thing/stuff table: unknown tag for '" + name + "'");
        table.entries[normalize_key(name)] = *tag;
    }
    return table;
}

void save_thing_stuff_table(const ThingStuffTable& table, const std::filesystem::path& path) {
    json doc;
    doc["source"] = table.source == TableSource::Builtin ? "builtin" : "user";
    json entries = json::array();
    for (const auto& [name, tag] : table.entries) {
        entries.push_back({{"name", name}, {"tag", std::string(tag_name(tag))}});
    }
    doc["entries"] = std::move(entries);
    write_file_text(path, doc.dump(2) + "\n");
}

ThingStuffTable builtin_thing_stuff_table() {
    // Static assignments for the benchmark vocabularies. Kept as-shipped,
    // including the known misclassifications (glass, blanket, trade name as
    // stuff; land, sand, snow, ground as things); a user table can override.
    static const std::pair<const char*, Tag> kEntries[] = {
        // amorphous region classes
        {"sky", Tag::Stuff},
        {"water", Tag::Stuff},
        {"sea", Tag::Stuff},
        {"river", Tag::Stuff},
        {"lake", Tag::Stuff},
        {"grass", Tag::Stuff},
        {"road", Tag::Stuff},
        {"sidewalk", Tag::Stuff},
        {"wall", Tag::Stuff},
        {"floor", Tag::Stuff},
        {"ceiling", Tag::Stuff},
        {"mountain", Tag::Stuff},
        {"hill", Tag::Stuff},
        {"field", Tag::Stuff},
        {"earth", Tag::Stuff},
        {"dirt track", Tag::Stuff},
        {"platform", Tag::Stuff},
        {"track", Tag::Stuff},
        {"fog", Tag::Stuff},
        {"carpet", Tag::Stuff},
        {"rug", Tag::Stuff},
        {"pavement", Tag::Stuff},
        // shipped-as-stuff although arguably things (tableware, bedding, signage)
        {"glass", Tag::Stuff},
        {"blanket", Tag::Stuff},
        {"trade name", Tag::Stuff},
        // shipped-as-things although arguably stuff
        {"land", Tag::Thing},
        {"sand", Tag::Thing},
        {"snow", Tag::Thing},
        {"ground", Tag::Thing},
        // countable object classes (VOC plus common context classes)
        {"aeroplane", Tag::Thing},
        {"airplane", Tag::Thing},
        {"bicycle", Tag::Thing},
        {"bird", Tag::Thing},
        {"boat", Tag::Thing},
        {"bottle", Tag::Thing},
        {"bus", Tag::Thing},
        {"car", Tag::Thing},
        {"cat", Tag::Thing},
        {"chair", Tag::Thing},
        {"cow", Tag::Thing},
        {"diningtable", Tag::Thing},
        {"dining table", Tag::Thing},
        {"dog", Tag::Thing},
        {"horse", Tag::Thing},
        {"motorbike", Tag::Thing},
        {"motorcycle", Tag::Thing},
        {"person", Tag::Thing},
        {"pottedplant", Tag::Thing},
        {"potted plant", Tag::Thing},
        {"sheep", Tag::Thing},
        {"sofa", Tag::Thing},
        {"train", Tag::Thing},
        {"tvmonitor", Tag::Thing},
        {"tv monitor", Tag::Thing},
        {"bag", Tag::Thing},
        {"bed", Tag::Thing},
        {"bench", Tag::Thing},
        {"book", Tag::Thing},
        {"building", Tag::Thing},
        {"cabinet", Tag::Thing},
        {"cloth", Tag::Thing},
        {"computer", Tag::Thing},
        {"cup", Tag::Thing},
        {"curtain", Tag::Thing},
        {"door", Tag::Thing},
        {"fence", Tag::Thing},
        {"flower", Tag::Thing},
        {"food", Tag::Thing},
        {"keyboard", Tag::Thing},
        {"light", Tag::Thing},
        {"mouse", Tag::Thing},
        {"plate", Tag::Thing},
        {"rock", Tag::Thing},
        {"shelves", Tag::Thing},
        {"sign", Tag::Thing},
        {"table", Tag::Thing},
        {"tree", Tag::Thing},
        {"truck", Tag::Thing},
        {"window", Tag::Thing},
        {"wood", Tag::Thing},
    };
    ThingStuffTable table;
    table.source = TableSource::Builtin;
    for (const auto& [name, tag] : kEntries) table.entries[name] = tag;
    return table;
}

}  // namespace protoseg
