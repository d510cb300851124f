#pragma once

// Transition classifier: two dense layers over pair features.
//
//   h      = relu(W1^T x + b1)        (hidden_units, default 256)
//   z      = W2^T h + b2              (6 logits)
//   scores = softmax(z) | sigmoid(z)
//
// trained with categorical cross-entropy and RMSprop. Everything is double
// precision so analytic gradients can be checked against finite differences.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "panelscope/agreement.hpp"
#include "panelscope/error.hpp"
#include "panelscope/io.hpp"
#include "panelscope/label.hpp"

namespace panelscope {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Scores = std::array<double, kNumLabels>;

enum class OutputActivation { Softmax, Sigmoid };

inline std::string to_string(OutputActivation a) {
    return a == OutputActivation::Softmax ? "softmax" : "sigmoid";
}

inline OutputActivation parse_activation(std::string_view s) {
    if (s == "softmax") return OutputActivation::Softmax;
    if (s == "sigmoid") return OutputActivation::Sigmoid;
    throw ValidationError("output_activation must be 'softmax' or 'sigmoid', got '" + std::string(s) + "'");
}

struct TrainConfig {
    double learning_rate = 1e-3;
    double rmsprop_decay = 0.9;  // rho
    double rmsprop_epsilon = 1e-8;
    int epochs_per_round = 10;
    int batch_size = 32;  // <= 0 means full batch
    OutputActivation output_activation = OutputActivation::Softmax;
    std::uint64_t seed = 0;
    int hidden_units = 256;
    bool standardize = false;

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw ValidationError("learning_rate must be a finite non-negative number");
        if (!(rmsprop_decay > 0.0 && rmsprop_decay < 1.0))
            throw ValidationError("rmsprop_decay must lie in (0, 1)");
        if (!(rmsprop_epsilon > 0.0)) throw ValidationError("rmsprop_epsilon must be positive");
        if (epochs_per_round <= 0) throw ValidationError("epochs_per_round must be positive");
        if (hidden_units <= 0) throw ValidationError("hidden_units must be positive");
    }
};

inline json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"rmsprop_decay", c.rmsprop_decay},
            {"rmsprop_epsilon", c.rmsprop_epsilon},
            {"epochs_per_round", c.epochs_per_round},
            {"batch_size", c.batch_size},
            {"output_activation", to_string(c.output_activation)},
            {"seed", c.seed},
            {"hidden_units", c.hidden_units},
            {"standardize", c.standardize}};
}

// Missing keys keep their defaults; unknown keys are ignored.
inline TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.rmsprop_decay = j.value("rmsprop_decay", c.rmsprop_decay);
    c.rmsprop_epsilon = j.value("rmsprop_epsilon", c.rmsprop_epsilon);
    c.epochs_per_round = j.value("epochs_per_round", c.epochs_per_round);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("output_activation"))
        c.output_activation = parse_activation(j.at("output_activation").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.hidden_units = j.value("hidden_units", c.hidden_units);
    c.standardize = j.value("standardize", c.standardize);
    c.validate();
    return c;
}

struct MlpParams {
    Matrix W1;  // input_dim x hidden
    Vector b1;  // hidden
    Matrix W2;  // hidden x 6
    Vector b2;  // 6

    Eigen::Index input_dim() const { return W1.rows(); }
    Eigen::Index hidden() const { return W1.cols(); }

    static MlpParams zeros(Eigen::Index input_dim, Eigen::Index hidden) {
        return {Matrix::Zero(input_dim, hidden), Vector::Zero(hidden),
                Matrix::Zero(hidden, static_cast<Eigen::Index>(kNumLabels)),
                Vector::Zero(static_cast<Eigen::Index>(kNumLabels))};
    }

    MlpParams zeros_like() const { return zeros(input_dim(), hidden()); }

    // Flat views in the order W1, b1, W2, b2 (row-major).
    std::array<std::span<double>, 4> tensors() {
        return {std::span<double>(W1.data(), static_cast<std::size_t>(W1.size())),
                std::span<double>(b1.data(), static_cast<std::size_t>(b1.size())),
                std::span<double>(W2.data(), static_cast<std::size_t>(W2.size())),
                std::span<double>(b2.data(), static_cast<std::size_t>(b2.size()))};
    }
    std::array<std::span<const double>, 4> tensors() const {
        return {std::span<const double>(W1.data(), static_cast<std::size_t>(W1.size())),
                std::span<const double>(b1.data(), static_cast<std::size_t>(b1.size())),
                std::span<const double>(W2.data(), static_cast<std::size_t>(W2.size())),
                std::span<const double>(b2.data(), static_cast<std::size_t>(b2.size()))};
    }

    bool all_finite() const {
        return W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite();
    }

    void check_shapes() const {
        if (b1.size() != W1.cols() || W2.rows() != W1.cols() ||
            W2.cols() != static_cast<Eigen::Index>(kNumLabels) ||
            b2.size() != static_cast<Eigen::Index>(kNumLabels))
            throw ShapeError("inconsistent MLP parameter shapes");
    }

    bool operator==(const MlpParams& o) const {
        return W1.rows() == o.W1.rows() && W1.cols() == o.W1.cols() && W1 == o.W1 &&
               b1 == o.b1 && W2 == o.W2 && b2 == o.b2;
    }
};

using Gradients = MlpParams;

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
// Deterministic for a given seed.
inline MlpParams init_params(std::uint64_t seed, Eigen::Index input_dim, Eigen::Index hidden = 256) {
    if (input_dim <= 0) throw ValidationError("init_params: input_dim must be positive");
    if (hidden <= 0) throw ValidationError("init_params: hidden must be positive");
    auto p = MlpParams::zeros(input_dim, hidden);
    std::mt19937_64 rng(seed);
    auto fill = [&](Matrix& w) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    };
    fill(p.W1);
    fill(p.W2);
    return p;
}

namespace detail {

inline void apply_output(Eigen::Ref<Matrix> z, OutputActivation act) {
    if (act == OutputActivation::Softmax) {
        for (Eigen::Index r = 0; r < z.rows(); ++r) {
            auto row = z.row(r);
            const double m = row.maxCoeff();
            row = (row.array() - m).exp().matrix();
            row /= row.sum();
        }
    } else {
        z = (1.0 / (1.0 + (-z.array()).exp())).matrix();
    }
}

}  // namespace detail

// Row-wise forward pass over a batch X (n x input_dim). Returns n x 6 scores.
// The hidden pre-activations are written to `pre_hidden` when given.
inline Matrix forward_batch(const MlpParams& p, const Eigen::Ref<const Matrix>& X,
                            OutputActivation act, Matrix* pre_hidden = nullptr,
                            Matrix* hidden = nullptr, Matrix* logits = nullptr) {
    if (X.cols() != p.input_dim())
        throw ShapeError("forward: input has " + std::to_string(X.cols()) + " columns, model expects " +
                         std::to_string(p.input_dim()));
    Matrix z1 = X * p.W1;
    z1.rowwise() += p.b1.transpose();
    Matrix h = z1.cwiseMax(0.0);
    Matrix z2 = h * p.W2;
    z2.rowwise() += p.b2.transpose();
    if (logits) *logits = z2;
    detail::apply_output(z2, act);
    if (pre_hidden) *pre_hidden = std::move(z1);
    if (hidden) *hidden = std::move(h);
    return z2;
}

inline Scores forward(const MlpParams& p, std::span<const double> x, OutputActivation act) {
    if (static_cast<Eigen::Index>(x.size()) != p.input_dim())
        throw ShapeError("forward: input has length " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(p.input_dim()));
    Eigen::Map<const Matrix> X(x.data(), 1, static_cast<Eigen::Index>(x.size()));
    Matrix s = forward_batch(p, X, act);
    Scores out{};
    for (std::size_t i = 0; i < kNumLabels; ++i) out[i] = s(0, static_cast<Eigen::Index>(i));
    return out;
}

inline constexpr double kScoreFloor = 1e-12;

// Scores on which the cross-entropy is evaluated: the softmax output as is,
// sigmoid outputs renormalized to sum to one.
inline Scores loss_scores(const Scores& scores, OutputActivation act) {
    if (act == OutputActivation::Softmax) return scores;
    double sum = 0.0;
    for (double s : scores) sum += s;
    Scores out = scores;
    for (auto& s : out) s /= sum;
    return out;
}

// Categorical cross-entropy against a one-hot target, scores clipped to
// [1e-12, 1] before the log.
inline double loss(const Scores& scores, const Scores& target) {
    int ones = 0;
    for (double t : target) {
        if (t == 1.0) ++ones;
        else if (t != 0.0) throw ValidationError("loss: target is not one-hot");
    }
    if (ones != 1) throw ValidationError("loss: target is not one-hot");
    double l = 0.0;
    for (std::size_t i = 0; i < kNumLabels; ++i)
        if (target[i] == 1.0) l -= std::log(std::clamp(scores[i], kScoreFloor, 1.0));
    return l;
}

inline Scores one_hot(TransitionLabel l) {
    Scores t{};
    t[index_of(l)] = 1.0;
    return t;
}

// Lowest index wins ties.
inline TransitionLabel argmax_label(std::span<const double> scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return label_at(best);
}

// Mean cross-entropy of the batch.
inline double batch_loss(const MlpParams& p, const Eigen::Ref<const Matrix>& X,
                         std::span<const TransitionLabel> y, OutputActivation act) {
    if (static_cast<Eigen::Index>(y.size()) != X.rows()) throw ShapeError("batch_loss: |y| != rows(X)");
    if (y.empty()) throw EmptyInputError("batch_loss: empty batch");
    Matrix s = forward_batch(p, X, act);
    double total = 0.0;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        Scores sc{};
        for (std::size_t i = 0; i < kNumLabels; ++i) sc[i] = s(r, static_cast<Eigen::Index>(i));
        total += loss(loss_scores(sc, act), one_hot(y[static_cast<std::size_t>(r)]));
    }
    return total / static_cast<double>(y.size());
}

// Mean gradient of batch_loss with respect to every parameter. The ReLU
// derivative at exactly 0 is 0. The score clip is ignored by the analytic
// gradient (it only engages below 1e-12).
inline Gradients gradients(const MlpParams& p, const Eigen::Ref<const Matrix>& X,
                           std::span<const TransitionLabel> y, OutputActivation act) {
    p.check_shapes();
    if (y.empty()) throw EmptyInputError("gradients: empty batch");
    if (static_cast<Eigen::Index>(y.size()) != X.rows()) throw ShapeError("gradients: |y| != rows(X)");
    Matrix z1, h, logits;
    Matrix s = forward_batch(p, X, act, &z1, &h, &logits);
    const double inv_n = 1.0 / static_cast<double>(y.size());

    // dL/dlogits
    Matrix dz2(s.rows(), s.cols());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const auto t = static_cast<Eigen::Index>(index_of(y[static_cast<std::size_t>(r)]));
        if (act == OutputActivation::Softmax) {
            dz2.row(r) = s.row(r);
            dz2(r, t) -= 1.0;
        } else {
            // L = -log(sig_t / S), S = sum_j sig_j
            const double S = s.row(r).sum();
            for (Eigen::Index j = 0; j < s.cols(); ++j) dz2(r, j) = s(r, j) * (1.0 - s(r, j)) / S;
            dz2(r, t) -= 1.0 - s(r, t);
        }
    }
    dz2 *= inv_n;

    Gradients g;
    g.W2 = h.transpose() * dz2;
    g.b2 = dz2.colwise().sum().transpose();
    Matrix dh = dz2 * p.W2.transpose();
    Matrix dz1 = (z1.array() > 0.0).select(dh.array(), 0.0).matrix();
    g.W1 = X.transpose() * dz1;
    g.b1 = dz1.colwise().sum().transpose();
    return g;
}

// Running mean-square accumulators, one per parameter, zero-initialised.
struct RmspropState {
    MlpParams mean_square;
    bool initialized() const { return mean_square.W1.size() > 0; }
};

// s <- rho*s + (1-rho)*g^2;  theta <- theta - lr*g/(sqrt(s)+eps)
inline void rmsprop_update(std::span<double> theta, std::span<const double> g, std::span<double> s,
                           double lr, double rho, double eps) {
    if (theta.size() != g.size() || theta.size() != s.size())
        throw ShapeError("rmsprop_update: size mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
        s[i] = rho * s[i] + (1.0 - rho) * g[i] * g[i];
        theta[i] -= lr * g[i] / (std::sqrt(s[i]) + eps);
    }
}

inline void rmsprop_step(MlpParams& params, const Gradients& grads, RmspropState& state,
                         const TrainConfig& cfg) {
    if (!state.initialized()) state.mean_square = params.zeros_like();
    auto th = params.tensors();
    auto gr = grads.tensors();
    auto ms = state.mean_square.tensors();
    for (std::size_t t = 0; t < th.size(); ++t)
        rmsprop_update(th[t], gr[t], ms[t], cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_epsilon);
}

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

inline double accuracy(const MlpParams& p, const Eigen::Ref<const Matrix>& X,
                       std::span<const TransitionLabel> y, OutputActivation act) {
    Matrix s = forward_batch(p, X, act);
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < s.rows(); ++r)
        if (argmax_label(std::span<const double>(s.row(r).data(), kNumLabels)) == y[static_cast<std::size_t>(r)])
            ++correct;
    return static_cast<double>(correct) / static_cast<double>(y.size());
}

// Shuffled mini-batch RMSprop for cfg.epochs_per_round epochs. Loss and
// accuracy are measured on the whole set after each epoch. `shuffle_salt`
// lets callers (the feedback loop) vary the shuffle between rounds while
// staying deterministic.
inline std::vector<EpochStats> train(MlpParams& params, RmspropState& state,
                                     const Eigen::Ref<const Matrix>& X,
                                     std::span<const TransitionLabel> y, const TrainConfig& cfg,
                                     std::uint64_t shuffle_salt = 0) {
    cfg.validate();
    if (y.empty()) throw EmptyInputError("train: labeled set is empty");
    if (static_cast<Eigen::Index>(y.size()) != X.rows()) throw ShapeError("train: |y| != rows(X)");
    if (X.cols() != params.input_dim()) throw ShapeError("train: feature width does not match model");

    const std::size_t n = y.size();
    const std::size_t bs = cfg.batch_size <= 0 ? n : std::min<std::size_t>(n, static_cast<std::size_t>(cfg.batch_size));
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(shuffle_salt), static_cast<std::uint32_t>(shuffle_salt >> 32)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochStats> history;
    Matrix xb;
    std::vector<TransitionLabel> yb;
    for (int epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t end = std::min(n, start + bs);
            xb.resize(static_cast<Eigen::Index>(end - start), X.cols());
            yb.clear();
            for (std::size_t i = start; i < end; ++i) {
                xb.row(static_cast<Eigen::Index>(i - start)) = X.row(static_cast<Eigen::Index>(order[i]));
                yb.push_back(y[order[i]]);
            }
            rmsprop_step(params, gradients(params, xb, yb, cfg.output_activation), state, cfg);
        }
        history.push_back({batch_loss(params, X, y, cfg.output_activation),
                           accuracy(params, X, y, cfg.output_activation)});
    }
    return history;
}

struct Evaluation {
    double accuracy = 0.0;
    ConfusionMatrix confusion;  // rows: prediction, columns: truth
    std::optional<KappaScore> kappa;
};

inline std::vector<TransitionLabel> predict_labels(const MlpParams& p, const Eigen::Ref<const Matrix>& X,
                                                   OutputActivation act) {
    Matrix s = forward_batch(p, X, act);
    std::vector<TransitionLabel> out;
    out.reserve(static_cast<std::size_t>(s.rows()));
    for (Eigen::Index r = 0; r < s.rows(); ++r)
        out.push_back(argmax_label(std::span<const double>(s.row(r).data(), kNumLabels)));
    return out;
}

inline Evaluation evaluate_predictions(std::span<const TransitionLabel> predicted,
                                       std::span<const TransitionLabel> truth) {
    if (truth.empty()) throw EmptyInputError("evaluate: empty set");
    Evaluation e{0.0, confusion_from_labels(predicted, truth), std::nullopt};
    e.accuracy = static_cast<double>(e.confusion.diagonal()) / static_cast<double>(truth.size());
    e.kappa = try_cohen_kappa(e.confusion);
    return e;
}

inline Evaluation evaluate(const MlpParams& p, const Eigen::Ref<const Matrix>& X,
                           std::span<const TransitionLabel> y, OutputActivation act) {
    if (y.empty()) throw EmptyInputError("evaluate: empty set");
    auto pred = predict_labels(p, X, act);
    return evaluate_predictions(pred, y);
}

}  // namespace panelscope
