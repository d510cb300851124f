#pragma once

// Page-wise transition sequences and frequent contiguous patterns.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "panelscope/corpus.hpp"
#include "panelscope/error.hpp"
#include "panelscope/log.hpp"

namespace panelscope {

// A maximal run of labeled, consecutive within-page pairs.
struct PageSequence {
    std::string book_id;
    int page_index = 0;
    int first_panel_index = 0;  // first panel of the run's first pair
    std::vector<TransitionLabel> labels;

    bool operator==(const PageSequence&) const = default;
};

using LabelSeq = std::vector<TransitionLabel>;
using PatternCounts = std::map<LabelSeq, std::size_t>;

struct Pattern {
    LabelSeq labels;
    std::size_t count = 0;
    std::size_t rank = 0;

    bool operator==(const Pattern&) const = default;
};

inline std::string format_pattern(const LabelSeq& s, bool short_codes = false) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += short_codes ? code2(s[i]) : code3(s[i]);
    }
    return out + "]";
}

// Groups labels by page and splits each page at unlabeled gaps. Cross-page
// pairs are ignored. Output is ordered by book, page, then position; books
// follow `book_order` when given, otherwise book_id order.
inline std::vector<PageSequence> page_sequences(const std::map<PanelPair, TransitionLabel>& labels,
                                                std::span<const std::string> book_order = {}) {
    // PanelPair ordering is (book, page, first, ...), so a map walk visits
    // each page's pairs in reading order.
    std::map<std::string, std::vector<PageSequence>> by_book;
    for (const auto& [pair, label] : labels) {
        if (pair.crosses_page) continue;
        auto& seqs = by_book[pair.book_id];
        const bool extends = !seqs.empty() && seqs.back().page_index == pair.page_index &&
                             seqs.back().first_panel_index + static_cast<int>(seqs.back().labels.size()) ==
                                 pair.first_panel_index;
        if (!extends) seqs.push_back({pair.book_id, pair.page_index, pair.first_panel_index, {}});
        seqs.back().labels.push_back(label);
    }
    std::vector<PageSequence> out;
    std::set<std::string> done;
    for (const auto& b : book_order) {
        auto it = by_book.find(b);
        if (it == by_book.end()) continue;
        out.insert(out.end(), it->second.begin(), it->second.end());
        done.insert(b);
    }
    for (const auto& [b, seqs] : by_book)
        if (!done.count(b)) out.insert(out.end(), seqs.begin(), seqs.end());
    return out;
}

inline std::vector<PageSequence> page_sequences(const Corpus& corpus,
                                                const std::map<PanelPair, TransitionLabel>& labels) {
    for (const auto& [pair, l] : labels)
        if (!corpus.has_pair(pair)) throw ValidationError("label for unknown pair " + pair.key());
    std::vector<std::string> order;
    for (const auto& b : corpus.books()) order.push_back(b.book_id);
    return page_sequences(labels, order);
}

// Every contiguous length-n window of every sequence, overlaps included.
// Windows never span two sequences.
inline PatternCounts ngram_counts(std::span<const LabelSeq> seqs, std::size_t n) {
    if (n == 0) throw ValidationError("ngram_counts: n must be at least 1");
    PatternCounts out;
    for (const auto& s : seqs) {
        if (s.size() < n) continue;
        for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[LabelSeq(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return out;
}

inline std::vector<LabelSeq> label_seqs(std::span<const PageSequence> seqs) {
    std::vector<LabelSeq> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) out.push_back(s.labels);
    return out;
}

inline PatternCounts ngram_counts(std::span<const PageSequence> seqs, std::size_t n) {
    auto ls = label_seqs(seqs);
    return ngram_counts(std::span<const LabelSeq>(ls), n);
}

// Gapped variant: occurrences are index tuples i_1 < ... < i_n within one
// sequence with at most `max_gap` skipped positions between neighbours.
// max_gap = 0 reproduces ngram_counts.
inline PatternCounts gapped_counts(std::span<const LabelSeq> seqs, std::size_t n, std::size_t max_gap) {
    if (n == 0) throw ValidationError("gapped_counts: n must be at least 1");
    PatternCounts out;
    LabelSeq cur;
    for (const auto& s : seqs) {
        auto rec = [&](auto&& self, std::size_t pos) -> void {
            if (cur.size() == n) {
                ++out[cur];
                return;
            }
            const std::size_t hi = std::min(s.size(), pos + max_gap + 1);
            for (std::size_t j = pos; j < hi; ++j) {
                cur.push_back(s[j]);
                self(self, j + 1);
                cur.pop_back();
            }
        };
        for (std::size_t start = 0; start < s.size(); ++start) {
            cur.assign(1, s[start]);
            if (n == 1) {
                ++out[cur];
                continue;
            }
            rec(rec, start + 1);
        }
    }
    return out;
}

// Patterns by descending count. Equal counts share a (dense) rank and are
// ordered lexicographically; every pattern with rank <= k is returned.
inline std::vector<Pattern> top_k(const PatternCounts& counts, std::size_t k = 4) {
    if (k == 0) throw ValidationError("top_k: k must be at least 1");
    std::vector<Pattern> all;
    all.reserve(counts.size());
    for (const auto& [p, c] : counts) all.push_back({p, c, 0});
    std::stable_sort(all.begin(), all.end(), [](const Pattern& a, const Pattern& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.labels < b.labels;
    });
    std::vector<Pattern> out;
    std::size_t rank = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (i == 0 || all[i].count != all[i - 1].count) ++rank;
        if (rank > k) break;
        all[i].rank = rank;
        out.push_back(all[i]);
    }
    return out;
}

struct MiningOptions {
    std::vector<std::size_t> lengths = {1, 2, 3, 4};
    std::size_t top_k = 4;
    std::size_t max_gap = 0;  // > 0 switches to gapped counting
};

// group -> length -> ranked patterns
using MiningReport = std::map<GenreGroup, std::map<std::size_t, std::vector<Pattern>>>;

inline MiningReport mine(std::span<const PageSequence> seqs, const std::map<std::string, GenreGroup>& groups,
                         const MiningOptions& opt = {}) {
    std::map<GenreGroup, std::vector<LabelSeq>> per_group;
    std::set<std::string> ungrouped;
    for (const auto& s : seqs) {
        auto it = groups.find(s.book_id);
        if (it == groups.end()) {
            ungrouped.insert(s.book_id);
            continue;
        }
        per_group[it->second].push_back(s.labels);
    }
    for (const auto& b : ungrouped) log::warn("book " + b + " has no genre group; its sequences are skipped");
    MiningReport rep;
    for (auto g : kAllGroups) {
        auto it = per_group.find(g);
        if (it == per_group.end()) {
            log::warn("genre group " + std::string(group_name(g)) + " has no sequences; omitted");
            continue;
        }
        for (auto n : opt.lengths) {
            auto counts = opt.max_gap == 0 ? ngram_counts(std::span<const LabelSeq>(it->second), n)
                                           : gapped_counts(it->second, n, opt.max_gap);
            rep[g][n] = top_k(counts, opt.top_k);
        }
    }
    return rep;
}

inline json to_json(const MiningReport& rep) {
    json out = json::array();
    for (const auto& [g, by_len] : rep)
        for (const auto& [n, pats] : by_len)
            for (const auto& p : pats) {
                json labels = json::array();
                for (auto l : p.labels) labels.push_back(std::string(code3(l)));
                out.push_back({{"group", std::string(group_name(g))},
                               {"length", n},
                               {"rank", p.rank},
                               {"pattern", labels},
                               {"count", p.count}});
            }
    return out;
}

// Rows "Top r sequence, with length n", one column per group; tied patterns
// share a cell.
inline std::string format_mining_table(const MiningReport& rep, const MiningOptions& opt) {
    std::vector<GenreGroup> cols;
    for (const auto& [g, _] : rep) cols.push_back(g);
    constexpr int kFirst = 32;
    constexpr int kCol = 30;
    std::ostringstream os;
    os << std::left << std::setw(kFirst) << "Categories";
    for (auto g : cols) os << std::setw(kCol) << group_name(g);
    os << '\n';
    for (auto n : opt.lengths) {
        for (std::size_t r = 1; r <= opt.top_k; ++r) {
            std::vector<std::vector<std::string>> cells;
            std::size_t lines = 1;
            for (auto g : cols) {
                std::vector<std::string> c;
                auto it = rep.at(g).find(n);
                if (it != rep.at(g).end())
                    for (const auto& p : it->second)
                        if (p.rank == r) c.push_back(format_pattern(p.labels) + " " + std::to_string(p.count));
                lines = std::max(lines, c.size());
                cells.push_back(std::move(c));
            }
            for (std::size_t line = 0; line < lines; ++line) {
                std::string head = line == 0 ? "Top " + std::to_string(r) + " sequence, with length " + std::to_string(n) : "";
                os << std::setw(kFirst) << head;
                for (const auto& c : cells) os << std::setw(kCol) << (line < c.size() ? c[line] : "");
                os << '\n';
            }
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace panelscope
