#pragma once

// Corpus data model: books, pages, panels in reading order, transition
// annotations, and the genre taxonomy with its five coarse groups.

#include <algorithm>
#include <array>
#include <compare>
#include <concepts>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ranges>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "panelscope/error.hpp"
#include "panelscope/io.hpp"
#include "panelscope/label.hpp"

namespace panelscope {

struct PanelKey {
    std::string book_id;
    int page_index = 0;
    int panel_index = 0;

    auto operator<=>(const PanelKey&) const = default;

    std::string str() const {
        return book_id + ":" + std::to_string(page_index) + ":" + std::to_string(panel_index);
    }
};

struct Panel {
    std::string book_id;
    int page_index = 0;
    int panel_index = 0;
    std::optional<std::string> image_ref;

    PanelKey key() const { return {book_id, page_index, panel_index}; }
    bool operator==(const Panel&) const = default;
};

// An ordered pair of consecutive panels. Within-page pairs satisfy
// second_panel_index == first_panel_index + 1. A cross-page pair (only
// produced when explicitly enabled) links the last panel of `page_index` to
// panel 0 of `page_index + 1`.
struct PanelPair {
    std::string book_id;
    int page_index = 0;
    int first_panel_index = 0;
    int second_panel_index = 1;
    bool crosses_page = false;

    auto operator<=>(const PanelPair&) const = default;

    PanelKey first_key() const { return {book_id, page_index, first_panel_index}; }
    PanelKey second_key() const {
        return {book_id, crosses_page ? page_index + 1 : page_index, second_panel_index};
    }

    // Compact identifier used in URLs and reports: "<book>:<page>:<first>".
    // Cross-page pairs carry a trailing "+".
    std::string key() const {
        return book_id + ":" + std::to_string(page_index) + ":" +
               std::to_string(first_panel_index) + (crosses_page ? "+" : "");
    }
};

inline PanelPair make_pair(std::string book_id, int page, int first) {
    return PanelPair{std::move(book_id), page, first, first + 1, false};
}

// Inverse of PanelPair::key(). The book id may itself contain ':'; the last
// two fields are numeric.
inline PanelPair parse_pair_key(std::string_view key) {
    std::string k(key);
    const bool cross = !k.empty() && k.back() == '+';
    if (cross) k.pop_back();
    auto p2 = k.rfind(':');
    if (p2 == std::string::npos || p2 == 0) throw ValidationError("malformed pair key: " + std::string(key));
    auto p1 = k.rfind(':', p2 - 1);
    if (p1 == std::string::npos || p1 == 0) throw ValidationError("malformed pair key: " + std::string(key));
    try {
        std::size_t used = 0;
        int page = std::stoi(k.substr(p1 + 1, p2 - p1 - 1), &used);
        if (used != p2 - p1 - 1) throw std::invalid_argument("page");
        int first = std::stoi(k.substr(p2 + 1), &used);
        if (used != k.size() - p2 - 1) throw std::invalid_argument("panel");
        if (page < 0 || first < 0) throw std::invalid_argument("negative");
        if (cross) return PanelPair{k.substr(0, p1), page, first, 0, true};
        return make_pair(k.substr(0, p1), page, first);
    } catch (const std::logic_error&) {
        throw ValidationError("malformed pair key: " + std::string(key));
    }
}

struct AnnotationRecord {
    PanelPair pair;
    std::string annotator_id;
    TransitionLabel label = TransitionLabel::ACT;

    bool operator==(const AnnotationRecord&) const = default;
};

struct BookMeta {
    std::string book_id;
    std::string title;
    std::string genre;  // normalized (lower case, trimmed)
    int page_count = 1;

    bool operator==(const BookMeta&) const = default;
};

// ---------------------------------------------------------------------------
// Genres
// ---------------------------------------------------------------------------

inline constexpr std::array<std::string_view, 12> kGenres = {
    "humor",  "battle",          "romantic comedy", "animal",       "science fiction",
    "sports", "historical drama", "fantasy",        "love romance", "suspense",
    "horror", "four frame cartoons"};

enum class GenreGroup : std::uint8_t { Romance = 0, Fiction, Action, Plot, FourPanel };

inline constexpr std::array<GenreGroup, 5> kAllGroups = {
    GenreGroup::Romance, GenreGroup::Fiction, GenreGroup::Action, GenreGroup::Plot,
    GenreGroup::FourPanel};

constexpr std::string_view group_name(GenreGroup g) {
    constexpr std::array<std::string_view, 5> names = {"Romance", "Fiction", "Action", "Plot",
                                                       "FourPanel"};
    return names[static_cast<std::size_t>(g)];
}

inline std::optional<GenreGroup> try_parse_group(std::string_view s) {
    for (auto g : kAllGroups)
        if (group_name(g) == s) return g;
    return std::nullopt;
}

inline std::span<const std::string_view> group_members(GenreGroup g) {
    static constexpr std::array<std::string_view, 2> romance = {"love romance", "romantic comedy"};
    static constexpr std::array<std::string_view, 2> fiction = {"science fiction", "fantasy"};
    static constexpr std::array<std::string_view, 2> action = {"battle", "sports"};
    static constexpr std::array<std::string_view, 3> plot = {"historical drama", "suspense",
                                                             "animal"};
    static constexpr std::array<std::string_view, 1> four = {"four frame cartoons"};
    switch (g) {
        case GenreGroup::Romance: return romance;
        case GenreGroup::Fiction: return fiction;
        case GenreGroup::Action: return action;
        case GenreGroup::Plot: return plot;
        case GenreGroup::FourPanel: return four;
    }
    return {};
}

// Trims surrounding whitespace and lower-cases. Throws ValidationError listing
// the allowed set when the result is not one of the twelve genres.
inline std::string normalize_genre(std::string_view raw) {
    auto b = raw.find_first_not_of(" \t\r\n");
    auto e = raw.find_last_not_of(" \t\r\n");
    std::string g = b == std::string_view::npos ? std::string() : std::string(raw.substr(b, e - b + 1));
    for (auto& c : g) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (std::find(kGenres.begin(), kGenres.end(), g) == kGenres.end()) {
        std::string allowed;
        for (auto a : kGenres) {
            if (!allowed.empty()) allowed += ", ";
            allowed += a;
        }
        throw ValidationError("unknown genre '" + std::string(raw) + "'; allowed: " + allowed);
    }
    return g;
}

// Humor and horror belong to no group and map to nullopt.
inline std::optional<GenreGroup> genre_group_of(std::string_view genre) {
    auto g = normalize_genre(genre);
    for (auto grp : kAllGroups) {
        auto m = group_members(grp);
        if (std::find(m.begin(), m.end(), g) != m.end()) return grp;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

class Corpus {
public:
    using Page = std::vector<Panel>;

    Corpus() = default;

    // Builds and validates a corpus. Panels may be given in any order; within
    // a page they are kept sorted by panel_index (which is the reading order).
    Corpus(std::vector<BookMeta> books, std::vector<Panel> panels,
           std::vector<AnnotationRecord> annotations = {}) {
        for (auto& b : books) {
            if (b.book_id.empty()) throw ValidationError("book with empty book_id");
            if (b.page_count <= 0)
                throw ValidationError("book " + b.book_id + ": page_count must be positive");
            b.genre = normalize_genre(b.genre);
            if (!index_.emplace(b.book_id, books_.size()).second)
                throw ValidationError("duplicate book_id " + b.book_id);
            books_.push_back(std::move(b));
            pages_.emplace_back(static_cast<std::size_t>(books_.back().page_count));
        }
        std::set<PanelKey> seen;
        for (auto& p : panels) {
            auto it = index_.find(p.book_id);
            if (it == index_.end())
                throw ValidationError("panel " + p.key().str() + " references unknown book");
            if (p.page_index < 0 || p.panel_index < 0)
                throw ValidationError("panel " + p.key().str() + " has a negative index");
            if (p.page_index >= books_[it->second].page_count)
                throw ValidationError("panel " + p.key().str() + " lies beyond page_count " +
                                      std::to_string(books_[it->second].page_count));
            if (!seen.insert(p.key()).second)
                throw ValidationError("duplicate panel key " + p.key().str());
            pages_[it->second][static_cast<std::size_t>(p.page_index)].push_back(std::move(p));
        }
        for (auto& book_pages : pages_) {
            for (auto& page : book_pages) {
                std::sort(page.begin(), page.end(),
                          [](const Panel& a, const Panel& b) { return a.panel_index < b.panel_index; });
                for (std::size_t i = 0; i < page.size(); ++i) {
                    if (page[i].panel_index != static_cast<int>(i))
                        throw ValidationError("page " + page[i].book_id + ":" +
                                              std::to_string(page[i].page_index) +
                                              ": panel indices are not contiguous from 0");
                }
            }
        }
        for (auto& a : annotations) add_annotation(std::move(a));
    }

    std::span<const BookMeta> books() const { return books_; }

    const BookMeta* find_book(std::string_view id) const {
        auto it = index_.find(std::string(id));
        return it == index_.end() ? nullptr : &books_[it->second];
    }

    const BookMeta& book(std::string_view id) const {
        if (auto* b = find_book(id)) return *b;
        throw NotFoundError("unknown book_id " + std::string(id));
    }

    // Pages of a book indexed by page_index; each page lists its panels in
    // reading order.
    const std::vector<Page>& pages(std::string_view book_id) const {
        auto it = index_.find(std::string(book_id));
        if (it == index_.end()) throw NotFoundError("unknown book_id " + std::string(book_id));
        return pages_[it->second];
    }

    const Panel* find_panel(const PanelKey& k) const {
        auto it = index_.find(k.book_id);
        if (it == index_.end()) return nullptr;
        const auto& bp = pages_[it->second];
        if (k.page_index < 0 || static_cast<std::size_t>(k.page_index) >= bp.size()) return nullptr;
        const auto& page = bp[static_cast<std::size_t>(k.page_index)];
        if (k.panel_index < 0 || static_cast<std::size_t>(k.panel_index) >= page.size()) return nullptr;
        return &page[static_cast<std::size_t>(k.panel_index)];
    }

    bool has_pair(const PanelPair& p) const {
        if (!find_panel(p.first_key()) || !find_panel(p.second_key())) return false;
        if (!p.crosses_page) return p.second_panel_index == p.first_panel_index + 1;
        const auto& page = pages(p.book_id)[static_cast<std::size_t>(p.page_index)];
        return p.second_panel_index == 0 &&
               p.first_panel_index + 1 == static_cast<int>(page.size());
    }

    std::size_t panel_count() const {
        std::size_t n = 0;
        for (const auto& bp : pages_)
            for (const auto& page : bp) n += page.size();
        return n;
    }

    // Adds a record, replacing an earlier record by the same annotator for the
    // same pair. The pair must be a valid consecutive pair of this corpus.
    void add_annotation(AnnotationRecord a) {
        if (a.annotator_id.empty()) throw ValidationError("annotation with empty annotator_id");
        if (!has_pair(a.pair))
            throw ValidationError("annotation references invalid pair " + a.pair.key());
        auto key = std::make_pair(a.annotator_id, a.pair);
        if (auto it = annotation_index_.find(key); it != annotation_index_.end()) {
            annotations_[it->second] = std::move(a);
            return;
        }
        annotation_index_.emplace(std::move(key), annotations_.size());
        annotations_.push_back(std::move(a));
    }

    std::span<const AnnotationRecord> annotations() const { return annotations_; }

    std::vector<AnnotationRecord> annotations_by(std::string_view annotator) const {
        std::vector<AnnotationRecord> out;
        for (const auto& a : annotations_)
            if (a.annotator_id == annotator) out.push_back(a);
        return out;
    }

    std::set<std::string> annotators() const {
        std::set<std::string> out;
        for (const auto& a : annotations_) out.insert(a.annotator_id);
        return out;
    }

private:
    std::vector<BookMeta> books_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::vector<Page>> pages_;
    std::vector<AnnotationRecord> annotations_;
    std::map<std::pair<std::string, PanelPair>, std::size_t> annotation_index_;
};

// ---------------------------------------------------------------------------
// JSON mapping
// ---------------------------------------------------------------------------

inline json to_json(const PanelPair& p) {
    json j = {{"book_id", p.book_id},
              {"page_index", p.page_index},
              {"first_panel_index", p.first_panel_index},
              {"second_panel_index", p.second_panel_index}};
    if (p.crosses_page) j["crosses_page"] = true;
    return j;
}

inline PanelPair pair_from_json(const json& j) {
    PanelPair p;
    p.book_id = j.at("book_id").get<std::string>();
    p.page_index = j.at("page_index").get<int>();
    p.first_panel_index = j.at("first_panel_index").get<int>();
    p.crosses_page = j.value("crosses_page", false);
    p.second_panel_index = j.contains("second_panel_index")
                               ? j.at("second_panel_index").get<int>()
                               : (p.crosses_page ? 0 : p.first_panel_index + 1);
    if (p.page_index < 0 || p.first_panel_index < 0)
        throw ValidationError("pair " + p.key() + " has a negative index");
    if (!p.crosses_page && p.second_panel_index != p.first_panel_index + 1)
        throw ValidationError("pair " + p.key() + ": second_panel_index must equal first + 1");
    return p;
}

inline json to_json(const AnnotationRecord& a) {
    return {{"pair", to_json(a.pair)},
            {"annotator_id", a.annotator_id},
            {"label", std::string(code3(a.label))}};
}

inline AnnotationRecord annotation_from_json(const json& j) {
    return {pair_from_json(j.at("pair")), j.at("annotator_id").get<std::string>(),
            parse_label(j.at("label").get<std::string>())};
}

inline json to_json(const BookMeta& b) {
    return {{"book_id", b.book_id}, {"title", b.title}, {"genre", b.genre},
            {"page_count", b.page_count}};
}

inline json to_json(const Panel& p) {
    json j = {{"book_id", p.book_id}, {"page_index", p.page_index}, {"panel_index", p.panel_index}};
    if (p.image_ref) j["image_ref"] = *p.image_ref;
    return j;
}

// Reads an annotation file (annotations.jsonl, oracle files, label files).
// Records are returned in file order; no de-duplication.
inline std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
    std::vector<AnnotationRecord> out;
    io::for_each_jsonl(path, [&](const json& j, std::size_t lineno) {
        try {
            out.push_back(annotation_from_json(j));
        } catch (const ValidationError& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno), e.what());
        }
    });
    return out;
}

inline void save_annotations(const std::filesystem::path& path,
                             std::span<const AnnotationRecord> records) {
    auto out = io::open_out(path);
    for (const auto& a : records) out << to_json(a).dump() << '\n';
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
    std::vector<BookMeta> books;
    std::vector<Panel> panels;
    std::vector<AnnotationRecord> annotations;

    io::for_each_jsonl(dir / "books.jsonl", [&](const json& j, std::size_t) {
        books.push_back({j.at("book_id").get<std::string>(), j.value("title", std::string()),
                         j.at("genre").get<std::string>(), j.at("page_count").get<int>()});
    });
    io::for_each_jsonl(dir / "panels.jsonl", [&](const json& j, std::size_t) {
        Panel p{j.at("book_id").get<std::string>(), j.at("page_index").get<int>(),
                j.at("panel_index").get<int>(), std::nullopt};
        if (j.contains("image_ref") && !j.at("image_ref").is_null())
            p.image_ref = j.at("image_ref").get<std::string>();
        panels.push_back(std::move(p));
    });
    if (std::filesystem::exists(dir / "annotations.jsonl")) {
        annotations = load_annotations(dir / "annotations.jsonl");
    }
    return Corpus(std::move(books), std::move(panels), std::move(annotations));
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto books = io::open_out(dir / "books.jsonl");
    auto panels = io::open_out(dir / "panels.jsonl");
    for (const auto& b : corpus.books()) {
        books << to_json(b).dump() << '\n';
        for (const auto& page : corpus.pages(b.book_id))
            for (const auto& p : page) panels << to_json(p).dump() << '\n';
    }
    save_annotations(dir / "annotations.jsonl", corpus.annotations());
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

struct PairOptions {
    bool cross_page = false;
};

// All consecutive pairs of a book in reading order. A page with n panels
// yields n-1 pairs.
inline std::vector<PanelPair> extract_pairs(std::string_view book_id, const Corpus& corpus,
                                            PairOptions opts = {}) {
    const auto& pages = corpus.pages(book_id);
    std::vector<PanelPair> out;
    for (std::size_t pg = 0; pg < pages.size(); ++pg) {
        const auto& page = pages[pg];
        for (std::size_t i = 0; i + 1 < page.size(); ++i)
            out.push_back(make_pair(std::string(book_id), static_cast<int>(pg), static_cast<int>(i)));
        if (opts.cross_page && !page.empty() && pg + 1 < pages.size() && !pages[pg + 1].empty()) {
            out.push_back(PanelPair{std::string(book_id), static_cast<int>(pg),
                                    static_cast<int>(page.size()) - 1, 0, true});
        }
    }
    return out;
}

inline std::vector<PanelPair> extract_pairs(const BookMeta& book, const Corpus& corpus,
                                            PairOptions opts = {}) {
    return extract_pairs(book.book_id, corpus, opts);
}

inline std::vector<PanelPair> extract_all_pairs(const Corpus& corpus, PairOptions opts = {}) {
    std::vector<PanelPair> out;
    for (const auto& b : corpus.books()) {
        auto p = extract_pairs(b.book_id, corpus, opts);
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

using LabelCounts = std::array<std::size_t, kNumLabels>;
using LabelVector = std::array<double, kNumLabels>;

template <std::ranges::input_range Labels>
    requires std::convertible_to<std::ranges::range_value_t<Labels>, TransitionLabel>
LabelCounts count_labels(const Labels& labels) {
    LabelCounts c{};
    for (TransitionLabel l : labels) ++c[index_of(l)];
    return c;
}

inline LabelCounts count_labels(std::span<const AnnotationRecord> records) {
    LabelCounts c{};
    for (const auto& r : records) ++c[index_of(r.label)];
    return c;
}

inline LabelVector normalize_counts(const LabelCounts& c) {
    std::size_t total = 0;
    for (auto v : c) total += v;
    if (total == 0) throw EmptyInputError("cannot normalize an all-zero label count");
    LabelVector out{};
    for (std::size_t i = 0; i < kNumLabels; ++i)
        out[i] = static_cast<double>(c[i]) / static_cast<double>(total);
    return out;
}

// Fraction of records per transition label.
inline LabelVector label_distribution(std::span<const AnnotationRecord> records) {
    if (records.empty()) throw EmptyInputError("label_distribution: no annotation records");
    return normalize_counts(count_labels(records));
}

// One label per pair. With an annotator filter only that annotator's
// records count; otherwise the majority label across annotators wins, ties
// going to the lowest label index.
inline std::map<PanelPair, TransitionLabel> ground_truth(
    std::span<const AnnotationRecord> records, std::optional<std::string> annotator = std::nullopt) {
    std::map<PanelPair, LabelCounts> votes;
    for (const auto& r : records) {
        if (annotator && r.annotator_id != *annotator) continue;
        ++votes[r.pair][index_of(r.label)];
    }
    std::map<PanelPair, TransitionLabel> out;
    for (const auto& [pair, c] : votes) {
        auto best = std::max_element(c.begin(), c.end());
        out.emplace(pair, label_at(static_cast<std::size_t>(best - c.begin())));
    }
    return out;
}

inline std::vector<AnnotationRecord> to_records(const std::map<PanelPair, TransitionLabel>& labels,
                                                const std::string& annotator_id) {
    std::vector<AnnotationRecord> out;
    out.reserve(labels.size());
    for (const auto& [p, l] : labels) out.push_back({p, annotator_id, l});
    return out;
}

}  // namespace panelscope
