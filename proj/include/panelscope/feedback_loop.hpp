#pragma once

// Iterative feedback training. Each round:
//   1. split the labeled pool 90/10 into train and holdout (fresh each round)
//   2. train the model for one round of epochs on the train part
//   3. measure holdout accuracy
//   4. draw a batch of unlabeled pairs uniformly without replacement
//   5. predict them
//   6. obtain feedback labels (oracle file or interactive session)
//   7. move correctly predicted pairs into the labeled pool; the rest stay
//      unlabeled (or, with adopt_corrections, enter with the feedback label)
//   8. kappa between predictions and feedback
//
// The loop is generic over the model so tests can plug in stubs.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "panelscope/agreement.hpp"
#include "panelscope/classifier.hpp"
#include "panelscope/corpus.hpp"
#include "panelscope/error.hpp"
#include "panelscope/features.hpp"
#include "panelscope/log.hpp"

namespace panelscope {

struct LabelPool {
    std::map<PanelPair, TransitionLabel> labeled;
    std::set<PanelPair> unlabeled;
    double holdout_fraction = 0.1;
    int round_index = 0;

    std::size_t size() const { return labeled.size() + unlabeled.size(); }

    void validate() const {
        if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
            throw ValidationError("holdout_fraction must lie in (0, 1)");
        for (const auto& [p, l] : labeled)
            if (unlabeled.count(p)) throw ValidationError("pair " + p.key() + " is both labeled and unlabeled");
    }
};

// Builds a pool from ground truth plus candidate pairs; candidates that
// already carry a label are dropped from the unlabeled side.
inline LabelPool make_pool(std::map<PanelPair, TransitionLabel> labeled,
                           std::span<const PanelPair> candidates, double holdout_fraction = 0.1) {
    LabelPool pool{std::move(labeled), {}, holdout_fraction, 0};
    for (const auto& p : candidates)
        if (!pool.labeled.count(p)) pool.unlabeled.insert(p);
    pool.validate();
    return pool;
}

struct LabeledSet {
    std::vector<PanelPair> pairs;
    std::vector<TransitionLabel> labels;

    std::size_t size() const { return pairs.size(); }
};

struct PoolSplit {
    LabeledSet train;
    LabeledSet holdout;
};

inline constexpr std::size_t kMinPoolForSplit = 10;

namespace detail {
inline std::mt19937_64 round_rng(std::uint64_t seed, int round, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(round), stream};
    return std::mt19937_64(seq);
}
}  // namespace detail

// Random train/holdout split of the labeled pool, deterministic in
// (seed, pool.round_index). Holdout gets floor(n * fraction) pairs, at least 1.
inline PoolSplit split_pool(const LabelPool& pool, std::uint64_t seed) {
    pool.validate();
    const std::size_t n = pool.labeled.size();
    if (n < kMinPoolForSplit)
        throw ValidationError("split_pool: labeled pool has " + std::to_string(n) +
                              " pairs; at least " + std::to_string(kMinPoolForSplit) + " are required");
    std::vector<std::pair<PanelPair, TransitionLabel>> items(pool.labeled.begin(), pool.labeled.end());
    auto rng = detail::round_rng(seed, pool.round_index, 1);
    std::shuffle(items.begin(), items.end(), rng);
    auto h = static_cast<std::size_t>(std::floor(static_cast<double>(n) * pool.holdout_fraction + 1e-9));
    h = std::clamp<std::size_t>(h, 1, n - 1);
    PoolSplit s;
    for (std::size_t i = 0; i < n; ++i) {
        auto& dst = i < h ? s.holdout : s.train;
        dst.pairs.push_back(items[i].first);
        dst.labels.push_back(items[i].second);
    }
    return s;
}

struct FitSummary {
    double train_loss = 0.0;
    double train_accuracy = 0.0;
};

// What the loop needs from a model: train one round on labeled pairs, predict
// labels for pairs, and re-initialise (cold start).
template <typename M>
concept TransitionModel = requires(M m, std::span<const PanelPair> pairs,
                                   std::span<const TransitionLabel> labels, std::uint64_t salt) {
    { m.fit(pairs, labels, salt) } -> std::same_as<FitSummary>;
    { m.predict(pairs) } -> std::same_as<std::vector<TransitionLabel>>;
    { m.reset() };
};

// The two-layer classifier over pair features from a FeatureStore.
class MlpModel {
public:
    MlpModel(const FeatureStore& store, TrainConfig cfg) : store_(&store), cfg_(cfg) {
        cfg_.validate();
        reset();
    }

    void reset() {
        params_ = init_params(cfg_.seed, static_cast<Eigen::Index>(2 * store_->dim()), cfg_.hidden_units);
        state_ = {};
        standardizer_ = {};
    }

    FitSummary fit(std::span<const PanelPair> pairs, std::span<const TransitionLabel> labels,
                   std::uint64_t salt) {
        if (cfg_.standardize) {
            std::vector<std::vector<double>> xs;
            xs.reserve(pairs.size());
            for (const auto& p : pairs) xs.push_back(pair_feature(*store_, p).x);
            standardizer_ = Standardizer::fit(xs);
        }
        Matrix X = features(pairs);
        auto hist = train(params_, state_, X, labels, cfg_, salt);
        return {hist.back().loss, hist.back().accuracy};
    }

    std::vector<TransitionLabel> predict(std::span<const PanelPair> pairs) const {
        if (pairs.empty()) return {};
        return predict_labels(params_, features(pairs), cfg_.output_activation);
    }

    Matrix scores(std::span<const PanelPair> pairs) const {
        return forward_batch(params_, features(pairs), cfg_.output_activation);
    }

    Matrix features(std::span<const PanelPair> pairs) const {
        Matrix X(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(2 * store_->dim()));
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            auto f = pair_feature(*store_, pairs[i]).x;
            standardizer_.apply(f);
            X.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), X.cols());
        }
        return X;
    }

    // Continues from trained parameters, e.g. a checkpoint.
    void load(MlpParams params, Standardizer standardizer) {
        if (params.input_dim() != static_cast<Eigen::Index>(2 * store_->dim()))
            throw ShapeError("model expects pair features of width " + std::to_string(params.input_dim()) +
                             ", feature store gives " + std::to_string(2 * store_->dim()));
        params_ = std::move(params);
        standardizer_ = std::move(standardizer);
        state_ = {};
    }

    const MlpParams& params() const { return params_; }
    const TrainConfig& config() const { return cfg_; }
    const Standardizer& standardizer() const { return standardizer_; }

private:
    const FeatureStore* store_;
    TrainConfig cfg_;
    MlpParams params_;
    RmspropState state_;
    Standardizer standardizer_;
};

static_assert(TransitionModel<MlpModel>);

// Supplies human (or oracle) labels for a batch of predicted pairs.
class FeedbackSource {
public:
    virtual ~FeedbackSource() = default;
    virtual std::vector<TransitionLabel> collect(int round_index, std::span<const PanelPair> pairs) = 0;
};

// Feedback from a label file; every queried pair must be present.
class OracleFeedback : public FeedbackSource {
public:
    explicit OracleFeedback(std::map<PanelPair, TransitionLabel> labels) : labels_(std::move(labels)) {}

    std::vector<TransitionLabel> collect(int round_index, std::span<const PanelPair> pairs) override {
        std::vector<TransitionLabel> out;
        out.reserve(pairs.size());
        for (const auto& p : pairs) {
            auto it = labels_.find(p);
            if (it == labels_.end())
                throw NotFoundError("oracle has no label for pair " + p.key() + " (round " +
                                    std::to_string(round_index) + ")");
            out.push_back(it->second);
        }
        return out;
    }

    const std::map<PanelPair, TransitionLabel>& labels() const { return labels_; }

private:
    std::map<PanelPair, TransitionLabel> labels_;
};

struct LoopOptions {
    std::uint64_t seed = 0;
    std::size_t feedback_batch_size = 100;
    bool adopt_corrections = false;
    bool cold_start = false;
};

inline json to_json(const LoopOptions& o) {
    return {{"seed", o.seed},
            {"feedback_batch_size", o.feedback_batch_size},
            {"adopt_corrections", o.adopt_corrections},
            {"cold_start", o.cold_start}};
}

struct RoundReport {
    int round_index = 0;
    std::size_t train_size = 0;
    std::size_t holdout_size = 0;
    double train_accuracy = 0.0;
    double holdout_accuracy = 0.0;
    std::size_t feedback_batch_size = 0;
    std::size_t feedback_correct_count = 0;
    std::optional<double> kappa_vs_feedback;  // empty when undefined (p_e == 1)
    std::size_t pool_size_after = 0;          // labeled pairs after the round
    std::size_t unlabeled_after = 0;

    bool operator==(const RoundReport&) const = default;
};

inline json to_json(const RoundReport& r) {
    return {{"round_index", r.round_index},
            {"train_size", r.train_size},
            {"holdout_size", r.holdout_size},
            {"train_accuracy", r.train_accuracy},
            {"holdout_accuracy", r.holdout_accuracy},
            {"feedback_batch_size", r.feedback_batch_size},
            {"feedback_correct_count", r.feedback_correct_count},
            {"kappa_vs_feedback", r.kappa_vs_feedback ? json(*r.kappa_vs_feedback) : json(nullptr)},
            {"pool_size_after", r.pool_size_after},
            {"unlabeled_after", r.unlabeled_after}};
}

inline RoundReport round_report_from_json(const json& j) {
    RoundReport r;
    r.round_index = j.at("round_index").get<int>();
    r.train_size = j.at("train_size").get<std::size_t>();
    r.holdout_size = j.at("holdout_size").get<std::size_t>();
    r.train_accuracy = j.value("train_accuracy", 0.0);
    r.holdout_accuracy = j.at("holdout_accuracy").get<double>();
    r.feedback_batch_size = j.at("feedback_batch_size").get<std::size_t>();
    r.feedback_correct_count = j.at("feedback_correct_count").get<std::size_t>();
    if (!j.at("kappa_vs_feedback").is_null()) r.kappa_vs_feedback = j.at("kappa_vs_feedback").get<double>();
    r.pool_size_after = j.at("pool_size_after").get<std::size_t>();
    r.unlabeled_after = j.value("unlabeled_after", std::size_t{0});
    return r;
}

// Accuracy and kappa rows laid out like a per-round results table.
inline std::string format_round_table(std::span<const RoundReport> reports) {
    std::ostringstream os;
    os << std::fixed;
    os << std::left << std::setw(16) << "round";
    for (const auto& r : reports) os << std::right << std::setw(9) << (r.round_index + 1);
    os << "\n" << std::left << std::setw(16) << "holdout acc";
    for (const auto& r : reports) os << std::right << std::setw(8) << std::setprecision(2) << r.holdout_accuracy * 100 << "%";
    os << "\n" << std::left << std::setw(16) << "train acc";
    for (const auto& r : reports) os << std::right << std::setw(8) << std::setprecision(2) << r.train_accuracy * 100 << "%";
    os << "\n" << std::left << std::setw(16) << "Cohen's kappa";
    for (const auto& r : reports) {
        if (r.kappa_vs_feedback) os << std::right << std::setw(9) << std::setprecision(4) << *r.kappa_vs_feedback;
        else os << std::right << std::setw(9) << "n/a";
    }
    os << "\n" << std::left << std::setw(16) << "correct/batch";
    for (const auto& r : reports)
        os << std::right << std::setw(9)
           << (std::to_string(r.feedback_correct_count) + "/" + std::to_string(r.feedback_batch_size));
    os << "\n" << std::left << std::setw(16) << "labeled pool";
    for (const auto& r : reports) os << std::right << std::setw(9) << r.pool_size_after;
    os << "\n";
    return os.str();
}

struct RoundResult {
    RoundReport report;
    LabelPool pool;
};

// Uniform sample without replacement, deterministic in (seed, round).
inline std::vector<PanelPair> sample_unlabeled(const LabelPool& pool, std::size_t count,
                                               std::uint64_t seed, std::uint32_t stream = 2) {
    std::vector<PanelPair> candidates(pool.unlabeled.begin(), pool.unlabeled.end());
    auto rng = detail::round_rng(seed, pool.round_index, stream);
    count = std::min(count, candidates.size());
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
        std::swap(candidates[i], candidates[pick(rng)]);
    }
    candidates.resize(count);
    return candidates;
}

inline std::optional<double> kappa_value(std::span<const TransitionLabel> a, std::span<const TransitionLabel> b) {
    if (a.empty()) return std::nullopt;
    auto k = try_cohen_kappa(confusion_from_labels(a, b));
    return k ? std::optional<double>(k->kappa) : std::nullopt;
}

// One feedback round. The input pool is not modified; on error (including an
// abandoned interactive session) the model is restored to its prior state.
template <TransitionModel M>
RoundResult run_round(const LabelPool& pool, M& model, const LoopOptions& opts,
                         FeedbackSource& feedback) {
    if (pool.unlabeled.empty()) throw EmptyInputError("run_round: no unlabeled pairs left");
    if (opts.feedback_batch_size == 0) throw ValidationError("feedback_batch_size must be positive");
    M snapshot = model;
    try {
        auto split = split_pool(pool, opts.seed);
        if (opts.cold_start) model.reset();
        auto fit = model.fit(split.train.pairs, split.train.labels,
                             static_cast<std::uint64_t>(pool.round_index));
        auto holdout_pred = model.predict(split.holdout.pairs);
        std::size_t holdout_hits = 0;
        for (std::size_t i = 0; i < holdout_pred.size(); ++i)
            holdout_hits += holdout_pred[i] == split.holdout.labels[i];

        if (pool.unlabeled.size() < opts.feedback_batch_size)
            log::warn("round " + std::to_string(pool.round_index + 1) + ": only " +
                      std::to_string(pool.unlabeled.size()) + " unlabeled pairs left (batch size " +
                      std::to_string(opts.feedback_batch_size) + ")");
        auto batch = sample_unlabeled(pool, opts.feedback_batch_size, opts.seed);
        auto predicted = model.predict(batch);
        auto given = feedback.collect(pool.round_index, batch);
        if (given.size() != batch.size())
            throw Error("feedback source returned " + std::to_string(given.size()) + " labels for " +
                        std::to_string(batch.size()) + " pairs");

        RoundResult out{{}, pool};
        std::size_t correct = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const bool hit = predicted[i] == given[i];
            correct += hit;
            if (hit || opts.adopt_corrections) {
                out.pool.unlabeled.erase(batch[i]);
                out.pool.labeled.emplace(batch[i], given[i]);
            }
        }
        out.pool.round_index = pool.round_index + 1;

        auto& r = out.report;
        r.round_index = pool.round_index;
        r.train_size = split.train.size();
        r.holdout_size = split.holdout.size();
        r.train_accuracy = fit.train_accuracy;
        r.holdout_accuracy = static_cast<double>(holdout_hits) / static_cast<double>(split.holdout.size());
        r.feedback_batch_size = batch.size();
        r.feedback_correct_count = correct;
        r.kappa_vs_feedback = kappa_value(predicted, given);
        r.pool_size_after = out.pool.labeled.size();
        r.unlabeled_after = out.pool.unlabeled.size();
        return out;
    } catch (...) {
        model = std::move(snapshot);
        throw;
    }
}

// Runs rounds until max_rounds or the unlabeled side is exhausted. Each
// report is handed to `on_report` as soon as its round completes so callers
// can persist progress incrementally.
template <TransitionModel M>
std::vector<RoundReport> run_experiment(LabelPool& pool, M& model, const LoopOptions& opts,
                                        FeedbackSource& feedback, int max_rounds,
                                        const std::function<void(const RoundReport&)>& on_report = {}) {
    if (pool.labeled.empty()) throw EmptyInputError("run_experiment: ground truth is empty");
    std::vector<RoundReport> reports;
    for (int i = 0; i < max_rounds && !pool.unlabeled.empty(); ++i) {
        RoundResult res;
        try {
            res = run_round(pool, model, opts, feedback);
        } catch (const Error& e) {
            throw Error("round " + std::to_string(pool.round_index + 1) + ": " + e.what());
        }
        pool = std::move(res.pool);
        if (on_report) on_report(res.report);
        reports.push_back(res.report);
    }
    return reports;
}

// No-feedback baseline: one fixed split of the pool, `stages` training rounds
// on it, and after each stage a fresh random batch is predicted and compared
// with feedback. The pool is never enlarged.
template <TransitionModel M>
std::vector<RoundReport> run_baseline(const LabelPool& pool, M& model, const LoopOptions& opts,
                                      FeedbackSource& feedback, int stages) {
    auto split = split_pool(pool, opts.seed);
    std::vector<RoundReport> reports;
    LabelPool view = pool;
    for (int stage = 0; stage < stages; ++stage) {
        auto fit = model.fit(split.train.pairs, split.train.labels, static_cast<std::uint64_t>(stage));
        auto holdout_pred = model.predict(split.holdout.pairs);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < holdout_pred.size(); ++i) hits += holdout_pred[i] == split.holdout.labels[i];
        view.round_index = stage;
        auto batch = sample_unlabeled(view, opts.feedback_batch_size, opts.seed, 3);
        auto predicted = model.predict(batch);
        auto given = feedback.collect(stage, batch);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) correct += predicted[i] == given[i];
        RoundReport r;
        r.round_index = stage;
        r.train_size = split.train.size();
        r.holdout_size = split.holdout.size();
        r.train_accuracy = fit.train_accuracy;
        r.holdout_accuracy = static_cast<double>(hits) / static_cast<double>(split.holdout.size());
        r.feedback_batch_size = batch.size();
        r.feedback_correct_count = correct;
        r.kappa_vs_feedback = kappa_value(predicted, given);
        r.pool_size_after = pool.labeled.size();
        r.unlabeled_after = pool.unlabeled.size();
        reports.push_back(r);
    }
    return reports;
}

}  // namespace panelscope
