#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace protoseg {

enum class Tag : std::uint8_t { Thing, Stuff };

std::string_view tag_name(Tag tag);
std::optional<Tag> tag_from_name(std::string_view name);

struct Category {
    std::string id;          // stable key, unique within a vocabulary
    std::string query_text;  // free-form text used in prompts
    Tag tag = Tag::Thing;
    std::uint64_t seed = 0;
};

struct Vocabulary {
    std::vector<Category> categories;
    std::string background_id = "background";

    const Category* find(std::string_view id) const;
    bool has(std::string_view id) const { return find(id) != nullptr; }
    // True once expand_with_background has prepended the background entry.
    bool is_expanded() const {
        return !categories.empty() && categories.front().id == background_id;
    }
};

enum class TableSource : std::uint8_t { Builtin, User };

// Case-folded, whitespace-normalized name -> tag. Lookups are total: a
// missing key resolves to Thing (with a warning at tagging time).
struct ThingStuffTable {
    std::map<std::string, Tag> entries;
    TableSource source = TableSource::Builtin;

    std::optional<Tag> lookup(std::string_view name) const;
};

inline constexpr std::string_view kDefaultPromptTemplate = "A good photo of a <c>";
inline constexpr std::string_view kPromptPlaceholder = "<c>";

// Replaces the single "<c>" placeholder with the query text. Throws on
// templates with zero or multiple placeholders and on empty query text.
std::string make_prompt(std::string_view tmpl, std::string_view query_text);
std::string make_prompt(const Category& category,
                        std::string_view tmpl = kDefaultPromptTemplate);

// Lowercased, trimmed, inner whitespace runs collapsed to single spaces.
std::string normalize_key(std::string_view name);

// Stamps each category's tag from the table; categories without a table
// entry keep their current tag (Thing unless the file said otherwise).
Vocabulary tag_vocabulary(Vocabulary vocab, const ThingStuffTable& table);

// Returns the table with `override_table` entries taking precedence.
ThingStuffTable merge_tables(const ThingStuffTable& base, const ThingStuffTable& override_table);

// Prepends the reserved background category; errors if the background id
// already names a category (including a previous expansion).
Vocabulary expand_with_background(const Vocabulary& vocab);

Category background_category(const Vocabulary& vocab);

// Fills in zero seeds with a stable hash of (global_seed, category id).
void assign_default_seeds(Vocabulary& vocab, std::uint64_t global_seed);

ThingStuffTable builtin_thing_stuff_table();

Vocabulary load_vocabulary(const std::filesystem::path& path);
void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
ThingStuffTable load_thing_stuff_table(const std::filesystem::path& path,
                                       TableSource source = TableSource::User);
void save_thing_stuff_table(const ThingStuffTable& table, const std::filesystem::path& path);

}  // namespace protoseg
