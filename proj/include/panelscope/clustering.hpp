#pragma once

// Per-book transition distributions, k-means (k-means++ seeding, Lloyd
// iterations, best of several restarts), elbow selection of k and
// cluster/genre-group intersection tables.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "panelscope/corpus.hpp"
#include "panelscope/error.hpp"
#include "panelscope/io.hpp"
#include "panelscope/log.hpp"

namespace panelscope {

template <std::size_t D>
using Point = std::array<double, D>;

template <std::size_t D>
double squared_distance(const Point<D>& a, const Point<D>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < D; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

struct KMeansOptions {
    int max_iter = 300;
    double tol = 1e-6;  // stop once no centroid moves farther than this
    int restarts = 10;
};

template <std::size_t D>
struct KMeansResult {
    std::size_t k = 0;
    std::vector<Point<D>> centroids;
    std::vector<std::size_t> assignments;  // one per input point
    double inertia = 0.0;
    int iterations = 0;
    int restart = 0;                    // index of the winning restart
    std::vector<double> inertia_trace;  // inertia after every assignment step

    double distortion() const {
        return assignments.empty() ? 0.0 : inertia / static_cast<double>(assignments.size());
    }
};

namespace detail {

// Nearest centroid, lowest index on ties.
template <std::size_t D>
std::pair<std::size_t, double> nearest(const Point<D>& x, std::span<const Point<D>> centroids) {
    std::size_t best = 0;
    double bd = squared_distance(x, centroids[0]);
    for (std::size_t c = 1; c < centroids.size(); ++c) {
        double d = squared_distance(x, centroids[c]);
        if (d < bd) {
            bd = d;
            best = c;
        }
    }
    return {best, bd};
}

template <std::size_t D>
std::vector<Point<D>> kmeanspp_seed(std::span<const Point<D>> xs, std::size_t k, std::mt19937_64& rng) {
    std::vector<Point<D>> c;
    c.reserve(k);
    std::uniform_int_distribution<std::size_t> first(0, xs.size() - 1);
    c.push_back(xs[first(rng)]);
    std::vector<double> d2(xs.size());
    while (c.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            d2[i] = nearest<D>(xs[i], c).second;
            total += d2[i];
        }
        if (total <= 0.0) {
            // fewer distinct points than k: duplicate an arbitrary point, the
            // empty-cluster rule takes over in Lloyd.
            c.push_back(xs[first(rng)]);
            continue;
        }
        std::uniform_real_distribution<double> u(0.0, total);
        double r = u(rng), acc = 0.0;
        std::size_t pick = xs.size() - 1;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            acc += d2[i];
            if (r < acc && d2[i] > 0.0) {
                pick = i;
                break;
            }
        }
        c.push_back(xs[pick]);
    }
    return c;
}

template <std::size_t D>
double assign(std::span<const Point<D>> xs, std::span<const Point<D>> c, std::vector<std::size_t>& a) {
    double inertia = 0.0;
    a.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        auto [best, d] = nearest<D>(xs[i], c);
        a[i] = best;
        inertia += d;
    }
    return inertia;
}

// Lloyd iterations from the given centroids. Empty clusters are moved to the
// point farthest from its current centroid.
template <std::size_t D>
KMeansResult<D> lloyd(std::span<const Point<D>> xs, std::vector<Point<D>> centroids, const KMeansOptions& opt) {
    KMeansResult<D> r;
    r.k = centroids.size();
    const std::size_t k = centroids.size();
    for (int it = 0; it < opt.max_iter; ++it) {
        r.inertia_trace.push_back(assign<D>(xs, centroids, r.assignments));
        ++r.iterations;
        std::vector<Point<D>> sums(k, Point<D>{});
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            auto c = r.assignments[i];
            ++counts[c];
            for (std::size_t d = 0; d < D; ++d) sums[c][d] += xs[i][d];
        }
        double moved = 0.0;
        std::vector<Point<D>> next = centroids;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t d = 0; d < D; ++d) next[c][d] = sums[c][d] / static_cast<double>(counts[c]);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = 0;
            double fd = -1.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                double d = nearest<D>(xs[i], next).second;
                if (d > fd) {
                    fd = d;
                    far = i;
                }
            }
            next[c] = xs[far];
        }
        for (std::size_t c = 0; c < k; ++c) moved = std::max(moved, std::sqrt(squared_distance(next[c], centroids[c])));
        centroids = std::move(next);
        if (moved < opt.tol) break;
    }
    r.inertia = assign<D>(xs, centroids, r.assignments);
    r.inertia_trace.push_back(r.inertia);
    r.centroids = std::move(centroids);
    return r;
}

}  // namespace detail

// Best-of-restarts k-means. Restart r is seeded from (seed, r); the winner is
// the lowest (inertia, restart index). `extra_inits` are additional starting
// centroid sets tried after the random restarts.
template <std::size_t D>
KMeansResult<D> kmeans(std::span<const Point<D>> xs, std::size_t k, std::uint64_t seed,
                       const KMeansOptions& opt = {},
                       std::span<const std::vector<Point<D>>> extra_inits = {}) {
    if (k == 0) throw ValidationError("kmeans: k must be at least 1");
    if (k > xs.size())
        throw ValidationError("kmeans: k=" + std::to_string(k) + " exceeds the number of points (" +
                              std::to_string(xs.size()) + ")");
    if (opt.restarts <= 0 || opt.max_iter <= 0) throw ValidationError("kmeans: restarts and max_iter must be positive");
    std::optional<KMeansResult<D>> best;
    auto consider = [&](KMeansResult<D> r, int idx) {
        r.restart = idx;
        if (!best || r.inertia < best->inertia) best = std::move(r);
    };
    for (int r = 0; r < opt.restarts; ++r) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(r)};
        std::mt19937_64 rng(seq);
        consider(detail::lloyd<D>(xs, detail::kmeanspp_seed<D>(xs, k, rng), opt), r);
    }
    for (std::size_t e = 0; e < extra_inits.size(); ++e) {
        if (extra_inits[e].size() != k) throw ShapeError("kmeans: extra init has the wrong number of centroids");
        consider(detail::lloyd<D>(xs, extra_inits[e], opt), opt.restarts + static_cast<int>(e));
    }
    return *best;
}

// ---------------------------------------------------------------------------
// Elbow
// ---------------------------------------------------------------------------

struct ElbowPoint {
    std::size_t k = 0;
    double distortion = 0.0;  // inertia / n
    double inertia = 0.0;
};

struct ElbowReport {
    std::vector<ElbowPoint> curve;
    std::size_t chosen_k = 1;
    double threshold = 0.10;
};

// The chosen k is the smallest k whose relative inertia drop to k+1,
// (I_k - I_{k+1}) / I_k, is below `threshold`; a k with zero inertia is
// chosen outright. Each k > k_min also tries the previous solution plus its
// farthest point as a starting set, so inertia never increases with k.
template <std::size_t D>
ElbowReport elbow(std::span<const Point<D>> xs, std::size_t k_min, std::size_t k_max, std::uint64_t seed,
                  double threshold = 0.10, const KMeansOptions& opt = {}) {
    if (k_min == 0 || k_min > k_max) throw ValidationError("elbow: need 1 <= k_min <= k_max");
    if (k_max > xs.size())
        throw ValidationError("elbow: k_max=" + std::to_string(k_max) + " exceeds the number of points (" +
                              std::to_string(xs.size()) + ")");
    ElbowReport rep;
    rep.threshold = threshold;
    std::optional<KMeansResult<D>> prev;
    for (std::size_t k = k_min; k <= k_max; ++k) {
        std::vector<std::vector<Point<D>>> warm;
        if (prev) {
            auto init = prev->centroids;
            std::size_t far = 0;
            double fd = -1.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                double d = detail::nearest<D>(xs[i], init).second;
                if (d > fd) {
                    fd = d;
                    far = i;
                }
            }
            init.push_back(xs[far]);
            warm.push_back(std::move(init));
        }
        auto r = kmeans<D>(xs, k, seed, opt, warm);
        rep.curve.push_back({k, r.distortion(), r.inertia});
        prev = std::move(r);
    }
    // inertia below this is rounding noise from averaging identical points
    double scale = 0.0;
    for (const auto& x : xs)
        for (double c : x) scale += c * c;
    const double zero = 1e-12 * std::max(1.0, scale);
    rep.chosen_k = rep.curve.back().k;
    for (std::size_t i = 0; i + 1 < rep.curve.size(); ++i) {
        const double ik = rep.curve[i].inertia;
        if (ik <= zero || (ik - rep.curve[i + 1].inertia) / ik < threshold) {
            rep.chosen_k = rep.curve[i].k;
            break;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Book vectors and genre groups
// ---------------------------------------------------------------------------

struct BookVector {
    std::string book_id;
    LabelVector v{};
    std::size_t pair_count = 0;
};

// Normalised label counts for one book.
template <typename Labels>
LabelVector book_vector(const Labels& labels) {
    auto c = count_labels(labels);
    std::size_t total = 0;
    for (auto x : c) total += x;
    if (total == 0) throw EmptyInputError("book_vector: book has no labeled pairs");
    return normalize_counts(c);
}

// One vector per book (sorted by book_id) from a set of labeled pairs. When a
// corpus is given, its books without labels are reported and skipped.
inline std::vector<BookVector> book_vectors(const std::map<PanelPair, TransitionLabel>& labels,
                                            const Corpus* corpus = nullptr) {
    std::map<std::string, LabelCounts> counts;
    for (const auto& [pair, l] : labels) ++counts[pair.book_id][index_of(l)];
    if (corpus) {
        for (const auto& b : corpus->books())
            if (!counts.count(b.book_id)) log::warn("book " + b.book_id + " has no labeled pairs; excluded");
    }
    std::vector<BookVector> out;
    for (const auto& [book, c] : counts) {
        std::size_t n = 0;
        for (auto x : c) n += x;
        out.push_back({book, normalize_counts(c), n});
    }
    return out;
}

// Cluster model over books; ids are sorted so the fit does not depend on
// input order.
struct ClusterModel {
    std::size_t k = 0;
    std::vector<Point<kNumLabels>> centroids;
    std::map<std::string, std::size_t> assignments;
    double inertia = 0.0;
    std::uint64_t seed = 0;
};

inline std::vector<Point<kNumLabels>> canonical_points(std::vector<BookVector>& books) {
    std::sort(books.begin(), books.end(), [](const auto& a, const auto& b) { return a.book_id < b.book_id; });
    std::vector<Point<kNumLabels>> pts;
    pts.reserve(books.size());
    for (const auto& b : books) pts.push_back(b.v);
    return pts;
}

inline ClusterModel cluster_books(std::vector<BookVector> books, std::size_t k, std::uint64_t seed,
                                  const KMeansOptions& opt = {}) {
    auto pts = canonical_points(books);
    auto r = kmeans<kNumLabels>(pts, k, seed, opt);
    ClusterModel m{k, r.centroids, {}, r.inertia, seed};
    for (std::size_t i = 0; i < books.size(); ++i) m.assignments[books[i].book_id] = r.assignments[i];
    return m;
}

inline json to_json(const ClusterModel& m) {
    json a = json::object();
    for (const auto& [b, c] : m.assignments) a[b] = c;
    return {{"k", m.k}, {"centroids", m.centroids}, {"assignments", a}, {"inertia", m.inertia}, {"seed", m.seed}};
}

inline ClusterModel cluster_model_from_json(const json& j) {
    ClusterModel m;
    m.k = j.at("k").get<std::size_t>();
    m.centroids = j.at("centroids").get<std::vector<Point<kNumLabels>>>();
    for (const auto& [b, c] : j.at("assignments").items()) m.assignments[b] = c.get<std::size_t>();
    m.inertia = j.at("inertia").get<double>();
    m.seed = j.value("seed", std::uint64_t{0});
    if (m.centroids.size() != m.k) throw ValidationError("cluster model: centroid count differs from k");
    for (const auto& [b, c] : m.assignments)
        if (c >= m.k) throw ValidationError("cluster model: book " + b + " assigned to cluster " + std::to_string(c));
    return m;
}

// Book -> group for every book of the corpus that belongs to a group.
inline std::map<std::string, GenreGroup> default_group_assignment(const Corpus& corpus) {
    std::map<std::string, GenreGroup> out;
    for (const auto& b : corpus.books()) {
        if (auto g = genre_group_of(b.genre)) out[b.book_id] = *g;
        else log::warn("book " + b.book_id + " (" + b.genre + ") belongs to no genre group; excluded");
    }
    return out;
}

struct IntersectionTable {
    std::size_t k = 0;
    std::vector<GenreGroup> groups;                       // rows present
    std::vector<std::vector<std::size_t>> counts;          // groups x k
    std::vector<std::vector<double>> cells;                // fraction of the group's books

    const std::vector<double>& row(GenreGroup g) const {
        for (std::size_t i = 0; i < groups.size(); ++i)
            if (groups[i] == g) return cells[i];
        throw NotFoundError("no row for group " + std::string(group_name(g)));
    }
};

// cell(g, c) = |books of g in cluster c| / |books of g|. Books without a group
// are skipped; groups without books are omitted with a warning.
inline IntersectionTable intersect(const ClusterModel& model, const std::map<std::string, GenreGroup>& groups) {
    IntersectionTable t;
    t.k = model.k;
    for (auto g : kAllGroups) {
        std::vector<std::size_t> row(model.k, 0);
        std::size_t n = 0;
        for (const auto& [book, cluster] : model.assignments) {
            auto it = groups.find(book);
            if (it == groups.end() || it->second != g) continue;
            ++row[cluster];
            ++n;
        }
        if (n == 0) {
            log::warn("genre group " + std::string(group_name(g)) + " has no clustered books; row omitted");
            continue;
        }
        std::vector<double> cells(model.k);
        for (std::size_t c = 0; c < model.k; ++c) cells[c] = static_cast<double>(row[c]) / static_cast<double>(n);
        t.groups.push_back(g);
        t.counts.push_back(std::move(row));
        t.cells.push_back(std::move(cells));
    }
    return t;
}

// Unweighted mean of member book vectors per group.
inline std::map<GenreGroup, LabelVector> genre_transition_summary(
    std::span<const BookVector> books, const std::map<std::string, GenreGroup>& groups) {
    std::map<GenreGroup, LabelVector> sums;
    std::map<GenreGroup, std::size_t> n;
    for (const auto& b : books) {
        auto it = groups.find(b.book_id);
        if (it == groups.end()) continue;
        auto& s = sums[it->second];
        for (std::size_t i = 0; i < kNumLabels; ++i) s[i] += b.v[i];
        ++n[it->second];
    }
    for (auto g : kAllGroups)
        if (!n.count(g)) log::warn("genre group " + std::string(group_name(g)) + " has no books; omitted");
    for (auto& [g, s] : sums)
        for (auto& x : s) x /= static_cast<double>(n[g]);
    return sums;
}

}  // namespace panelscope
