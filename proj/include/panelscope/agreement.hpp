#pragma once

// Inter-annotator reliability: confusion matrices, Cohen's kappa and the
// McHugh interpretation bands. Kappa is always pairwise (two raters).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "panelscope/corpus.hpp"
#include "panelscope/error.hpp"
#include "panelscope/label.hpp"

namespace panelscope {

// Square count matrix; rows are rater A's category, columns rater B's.
// Defaults to the six transition labels but any k >= 1 is allowed so the
// statistic can be checked on smaller category sets.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t categories = kNumLabels)
        : k_(categories), counts_(categories * categories, 0) {
        if (categories == 0) throw ValidationError("confusion matrix needs at least one category");
    }

    static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
        ConfusionMatrix m(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows.size()) throw ShapeError("confusion matrix must be square");
            for (std::size_t j = 0; j < rows.size(); ++j) m.add(i, j, rows[i][j]);
        }
        return m;
    }

    std::size_t categories() const { return k_; }

    std::uint64_t operator()(std::size_t i, std::size_t j) const { return counts_[i * k_ + j]; }
    std::uint64_t at(TransitionLabel a, TransitionLabel b) const {
        return (*this)(index_of(a), index_of(b));
    }

    void add(std::size_t i, std::size_t j, std::uint64_t n = 1) {
        if (i >= k_ || j >= k_) throw ShapeError("confusion matrix index out of range");
        counts_[i * k_ + j] += n;
        total_ += n;
    }
    void add(TransitionLabel a, TransitionLabel b) { add(index_of(a), index_of(b)); }

    std::uint64_t total() const { return total_; }

    std::uint64_t row_sum(std::size_t i) const {
        std::uint64_t s = 0;
        for (std::size_t j = 0; j < k_; ++j) s += (*this)(i, j);
        return s;
    }
    std::uint64_t col_sum(std::size_t j) const {
        std::uint64_t s = 0;
        for (std::size_t i = 0; i < k_; ++i) s += (*this)(i, j);
        return s;
    }
    std::uint64_t diagonal() const {
        std::uint64_t s = 0;
        for (std::size_t i = 0; i < k_; ++i) s += (*this)(i, i);
        return s;
    }

    ConfusionMatrix transposed() const {
        ConfusionMatrix t(k_);
        for (std::size_t i = 0; i < k_; ++i)
            for (std::size_t j = 0; j < k_; ++j) t.add(j, i, (*this)(i, j));
        return t;
    }

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t k_;
    std::vector<std::uint64_t> counts_;
    std::uint64_t total_ = 0;
};

struct KappaScore {
    double kappa = 0.0;
    double observed_agreement = 0.0;  // p_o
    double expected_agreement = 0.0;  // p_e
    std::string band;
};

// McHugh's reading of kappa. Bands are closed on the upper end.
inline std::string interpret_kappa(double kappa) {
    if (!(kappa >= -1.0 && kappa <= 1.0))
        throw ValidationError("kappa must lie in [-1, 1], got " + std::to_string(kappa));
    if (kappa <= 0.0) return "no agreement";
    if (kappa <= 0.20) return "none to slight";
    if (kappa <= 0.40) return "fair";
    if (kappa <= 0.60) return "moderate";
    if (kappa <= 0.80) return "substantial";
    return "almost perfect";
}

// kappa = (p_o - p_e) / (1 - p_e). Evaluated as
// (n * diag - sum_i row_i col_i) / (n^2 - sum_i row_i col_i) so the
// all-diagonal case yields exactly 1.
inline KappaScore cohen_kappa(const ConfusionMatrix& m) {
    const std::uint64_t n = m.total();
    if (n == 0) throw EmptyInputError("cohen_kappa: confusion matrix is empty");
    const long double nn = static_cast<long double>(n);
    long double chance = 0;  // sum_i row_i * col_i
    for (std::size_t i = 0; i < m.categories(); ++i)
        chance += static_cast<long double>(m.row_sum(i)) * static_cast<long double>(m.col_sum(i));
    const long double diag = static_cast<long double>(m.diagonal());
    const long double denom = nn * nn - chance;
    if (denom == 0)
        throw DegenerateError(
            "cohen_kappa: expected agreement is 1 (both raters used one identical label); kappa is "
            "undefined");
    KappaScore s;
    s.observed_agreement = static_cast<double>(diag / nn);
    s.expected_agreement = static_cast<double>(chance / (nn * nn));
    s.kappa = static_cast<double>((nn * diag - chance) / denom);
    s.band = interpret_kappa(std::clamp(s.kappa, -1.0, 1.0));
    return s;
}

// Kappa for reports: nullopt where the statistic is undefined.
inline std::optional<KappaScore> try_cohen_kappa(const ConfusionMatrix& m) {
    try {
        return cohen_kappa(m);
    } catch (const DegenerateError&) {
        return std::nullopt;
    } catch (const EmptyInputError&) {
        return std::nullopt;
    }
}

// Counts over pairs labelled by both raters. If a rater has several records
// for a pair the last one counts.
inline ConfusionMatrix build_confusion(std::span<const AnnotationRecord> a,
                                       std::span<const AnnotationRecord> b) {
    std::map<PanelPair, TransitionLabel> la, lb;
    for (const auto& r : a) la[r.pair] = r.label;
    for (const auto& r : b) lb[r.pair] = r.label;
    ConfusionMatrix m;
    for (const auto& [pair, label] : la) {
        if (auto it = lb.find(pair); it != lb.end()) m.add(label, it->second);
    }
    if (m.total() == 0)
        throw EmptyInputError(
            "build_confusion: the two raters share no annotated pairs; check the evaluation-set "
            "assignment");
    return m;
}

inline ConfusionMatrix confusion_from_labels(std::span<const TransitionLabel> a,
                                             std::span<const TransitionLabel> b) {
    if (a.size() != b.size()) throw ShapeError("label sequences differ in length");
    ConfusionMatrix m;
    for (std::size_t i = 0; i < a.size(); ++i) m.add(a[i], b[i]);
    return m;
}

struct PairwiseAgreement {
    std::string rater_a;
    std::string rater_b;
    std::uint64_t overlap = 0;
    std::optional<KappaScore> score;
};

// One entry per unordered annotator pair (lexicographic order), as in a
// Table-1-style report. Pairs without overlap are listed with overlap 0.
inline std::vector<PairwiseAgreement> all_pairs_agreement(std::span<const AnnotationRecord> records) {
    std::map<std::string, std::vector<AnnotationRecord>> by_rater;
    for (const auto& r : records) by_rater[r.annotator_id].push_back(r);
    std::vector<PairwiseAgreement> out;
    for (auto i = by_rater.begin(); i != by_rater.end(); ++i) {
        for (auto j = std::next(i); j != by_rater.end(); ++j) {
            PairwiseAgreement p{i->first, j->first, 0, std::nullopt};
            try {
                auto m = build_confusion(i->second, j->second);
                p.overlap = m.total();
                p.score = try_cohen_kappa(m);
            } catch (const EmptyInputError&) {
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

}  // namespace panelscope
