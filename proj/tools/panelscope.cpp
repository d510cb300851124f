// panelscope command-line front end.

#include "panelscope/panelscope.hpp"
#include "panelscope/service.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace panelscope;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string fmt(double x, int prec = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << x;
    return os.str();
}

void print_distribution_table(std::ostream& os, const LabelCounts& counts) {
    std::size_t total = 0;
    for (auto c : counts) total += c;
    os << std::left << std::setw(6) << "label" << std::setw(20) << "name" << std::right << std::setw(8) << "count"
       << std::setw(10) << "fraction" << '\n';
    for (std::size_t i = 0; i < kNumLabels; ++i) {
        os << std::left << std::setw(6) << code3(label_at(i)) << std::setw(20) << display_name(label_at(i)) << std::right << std::setw(8)
           << counts[i] << std::setw(10) << (total ? fmt(static_cast<double>(counts[i]) / static_cast<double>(total)) : "-")
           << '\n';
    }
    os << std::left << std::setw(26) << "total" << std::right << std::setw(8) << total << '\n';
}

// A label file: annotation records; one label per pair via majority vote.
std::map<PanelPair, TransitionLabel> load_labels(const fs::path& file, const std::optional<std::string>& annotator) {
    auto recs = load_annotations(file);
    auto gt = ground_truth(recs, annotator);
    if (gt.empty()) throw EmptyInputError(file.string() + ": no labels" + (annotator ? " for annotator " + *annotator : ""));
    return gt;
}

std::map<std::string, GenreGroup> load_groups(const std::string& spec, const std::optional<fs::path>& corpus_dir) {
    if (spec == "default") {
        if (!corpus_dir) throw ValidationError("--groups default needs --corpus to look up book genres");
        return default_group_assignment(load_corpus(*corpus_dir));
    }
    // JSON object book_id -> group name
    auto j = json::parse(io::read_file(spec));
    std::map<std::string, GenreGroup> out;
    for (const auto& [book, g] : j.items()) {
        auto grp = try_parse_group(g.get<std::string>());
        if (!grp) throw ValidationError("unknown genre group '" + g.get<std::string>() + "' for book " + book);
        out[book] = *grp;
    }
    return out;
}

// Pairs file: one pair per line, either a pair object, a record with a
// "pair" field, or a key string.
std::vector<PanelPair> load_pairs(const fs::path& file) {
    std::vector<PanelPair> out;
    io::for_each_jsonl(file, [&](const json& j, std::size_t lineno) {
        try {
            if (j.is_string()) out.push_back(parse_pair_key(j.get<std::string>()));
            else if (j.contains("pair")) out.push_back(pair_from_json(j.at("pair")));
            else out.push_back(pair_from_json(j));
        } catch (const ValidationError& e) {
            throw ParseError(file.string() + ":" + std::to_string(lineno), e.what());
        }
    }, false);
    return out;
}

TrainConfig load_config(const std::optional<fs::path>& file, std::optional<std::uint64_t> seed) {
    TrainConfig cfg = file ? train_config_from_json(json::parse(io::read_file(*file))) : TrainConfig{};
    if (seed) cfg.seed = *seed;
    return cfg;
}

// ---------------------------------------------------------------------------

int cmd_corpus_validate(const fs::path& dir) {
    auto c = load_corpus(dir);
    std::size_t pages = 0, panels = 0;
    for (const auto& b : c.books())
        for (const auto& p : c.pages(b.book_id)) {
            ++pages;
            panels += p.size();
        }
    std::cout << "ok: " << c.books().size() << " books, " << pages << " pages, " << panels << " panels, "
              << extract_all_pairs(c).size() << " within-page pairs, " << c.annotations().size()
              << " annotation records\n";
    return 0;
}

int cmd_corpus_stats(const fs::path& dir, const std::optional<std::string>& annotator, bool as_json) {
    auto c = load_corpus(dir);
    std::vector<AnnotationRecord> recs;
    for (const auto& a : c.annotations())
        if (!annotator || a.annotator_id == *annotator) recs.push_back(a);
    if (recs.empty()) throw EmptyInputError("no annotation records" + (annotator ? " for annotator " + *annotator : ""));
    auto counts = count_labels(recs);
    auto dist = label_distribution(recs);
    const auto pairs = extract_all_pairs(c);
    const auto labeled = ground_truth(recs).size();
    if (as_json) {
        for (std::size_t i = 0; i < kNumLabels; ++i)
            std::cout << json{{"record", "label"}, {"label", code3(label_at(i))}, {"count", counts[i]}, {"fraction", dist[i]}}.dump()
                      << '\n';
        std::cout << json{{"record", "pairs"}, {"books", c.books().size()}, {"candidate_pairs", pairs.size()},
                          {"labeled_pairs", labeled}, {"annotation_records", recs.size()}}.dump()
                  << '\n';
        return 0;
    }
    print_distribution_table(std::cout, counts);
    std::cout << "\nbooks " << c.books().size() << ", candidate pairs " << pairs.size() << ", labeled pairs "
              << labeled << ", annotation records " << recs.size() << '\n';
    return 0;
}

void print_matrix(const ConfusionMatrix& m, const std::string& a, const std::string& b) {
    std::cout << "rows: " << a << ", columns: " << b << '\n' << std::setw(6) << "";
    for (auto l : kAllLabels) std::cout << std::setw(6) << code3(l);
    std::cout << '\n';
    for (std::size_t i = 0; i < kNumLabels; ++i) {
        std::cout << std::setw(6) << code3(label_at(i));
        for (std::size_t j = 0; j < kNumLabels; ++j) std::cout << std::setw(6) << m(i, j);
        std::cout << '\n';
    }
}

int cmd_agree(const fs::path& source, const std::string& raters, bool all_pairs, bool as_json) {
    const fs::path file = fs::is_directory(source) ? source / "annotations.jsonl" : source;
    auto recs = load_annotations(file);
    if (all_pairs) {
        auto rows = all_pairs_agreement(recs);
        if (as_json) {
            for (const auto& r : rows) {
                json j = {{"rater_a", r.rater_a}, {"rater_b", r.rater_b}, {"overlap", r.overlap}};
                j["kappa"] = r.score ? json(r.score->kappa) : json(nullptr);
                j["band"] = r.score ? json(r.score->band) : json(nullptr);
                std::cout << j.dump() << '\n';
            }
            return 0;
        }
        std::cout << std::left << std::setw(24) << "raters" << std::right << std::setw(9) << "overlap" << std::setw(10)
                  << "kappa" << "  band\n";
        for (const auto& r : rows)
            std::cout << std::left << std::setw(24) << (r.rater_a + " & " + r.rater_b) << std::right << std::setw(9)
                      << r.overlap << std::setw(10) << (r.score ? fmt(r.score->kappa, 3) : "n/a") << "  "
                      << (r.score ? r.score->band : (r.overlap ? "undefined" : "no shared pairs")) << '\n';
        return 0;
    }
    auto names = split_csv(raters);
    if (names.size() != 2) throw ValidationError("--raters needs exactly two annotator ids, e.g. a1,a2");
    std::vector<AnnotationRecord> a, b;
    for (const auto& r : recs) {
        if (r.annotator_id == names[0]) a.push_back(r);
        if (r.annotator_id == names[1]) b.push_back(r);
    }
    if (a.empty()) throw NotFoundError("no records for annotator " + names[0]);
    if (b.empty()) throw NotFoundError("no records for annotator " + names[1]);
    auto m = build_confusion(a, b);
    auto k = cohen_kappa(m);
    if (as_json) {
        json rows = json::array();
        for (std::size_t i = 0; i < kNumLabels; ++i) {
            json row = json::array();
            for (std::size_t j = 0; j < kNumLabels; ++j) row.push_back(m(i, j));
            rows.push_back(row);
        }
        std::cout << json{{"rater_a", names[0]}, {"rater_b", names[1]}, {"matrix", rows}, {"kappa", k.kappa},
                          {"p_o", k.observed_agreement}, {"p_e", k.expected_agreement}, {"band", k.band},
                          {"overlap", m.total()}}.dump()
                  << '\n';
        return 0;
    }
    print_matrix(m, names[0], names[1]);
    std::cout << "\npairs " << m.total() << "\np_o   " << fmt(k.observed_agreement) << "\np_e   "
              << fmt(k.expected_agreement) << "\nkappa " << fmt(k.kappa) << " (" << k.band << ")\n";
    return 0;
}

int cmd_features_check(const fs::path& file, const std::optional<fs::path>& corpus_dir) {
    auto store = load_features(file);
    std::cout << "ok: " << store.size() << " descriptors, dim " << store.dim() << '\n';
    if (corpus_dir) {
        auto c = load_corpus(*corpus_dir);
        std::size_t missing = 0;
        for (const auto& p : extract_all_pairs(c))
            for (const auto& k : {p.first_key(), p.second_key()})
                if (!store.contains(k)) {
                    if (missing < 10) std::cerr << "missing descriptor " << k.str() << '\n';
                    ++missing;
                }
        if (missing) {
            std::cerr << missing << " descriptor lookups fail for corpus pairs\n";
            return 1;
        }
        std::cout << "every within-page pair of the corpus has both descriptors\n";
    }
    return 0;
}

int cmd_train(const fs::path& corpus_dir, const fs::path& features, const std::optional<fs::path>& config,
              const fs::path& out, const std::optional<std::string>& annotator, std::optional<std::uint64_t> seed) {
    auto c = load_corpus(corpus_dir);
    auto gt = ground_truth(c.annotations(), annotator);
    if (gt.empty()) throw EmptyInputError("corpus has no ground-truth labels");
    auto store = load_features(features);
    auto cfg = load_config(config, seed);
    MlpModel model(store, cfg);
    std::vector<PanelPair> pairs;
    std::vector<TransitionLabel> labels;
    for (const auto& [p, l] : gt) {
        pairs.push_back(p);
        labels.push_back(l);
    }
    auto fit = model.fit(pairs, labels, 0);
    save_checkpoint(out, {model.params(), cfg, model.standardizer()});
    std::cout << "trained on " << pairs.size() << " pairs for " << cfg.epochs_per_round
              << " epochs: loss " << fmt(fit.train_loss) << ", accuracy " << fmt(fit.train_accuracy) << "\nwrote "
              << out.string() << '\n';
    return 0;
}

int cmd_predict(const fs::path& model_file, const fs::path& pairs_file, const fs::path& features) {
    auto ck = load_checkpoint(model_file);
    auto store = load_features(features);
    MlpModel model(store, ck.config);
    model.load(ck.params, ck.standardizer);
    auto pairs = load_pairs(pairs_file);
    if (pairs.empty()) return 0;
    auto scores = model.scores(pairs);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::span<const double> row(scores.row(static_cast<Eigen::Index>(i)).data(), kNumLabels);
        json s = json::array();
        for (double v : row) s.push_back(v);
        std::cout << json{{"pair", to_json(pairs[i])}, {"scores", s}, {"label", code3(argmax_label(row))}}.dump()
                  << '\n';
    }
    return 0;
}

struct LoopArgs {
    fs::path corpus, features;
    std::optional<fs::path> oracle, config, out_dir, log;
    std::optional<std::string> annotator;
    int rounds = 11;
    std::uint64_t seed = 0;
    std::size_t batch = 100;
    bool adopt = false, cold = false, interactive = false, baseline = false;
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string feedback_annotator = "annotator";
};

int cmd_loop(const LoopArgs& a) {
    auto c = load_corpus(a.corpus);
    auto gt = ground_truth(c.annotations(), a.annotator);
    auto store = load_features(a.features);
    auto cfg = load_config(a.config, std::nullopt);
    auto candidates = extract_all_pairs(c);
    auto pool = make_pool(gt, candidates);
    LoopOptions opts{a.seed, a.batch, a.adopt, a.cold};
    MlpModel model(store, cfg);

    std::optional<std::ofstream> rounds_out;
    if (a.out_dir) {
        fs::create_directories(*a.out_dir);
        rounds_out.emplace(*a.out_dir / (a.baseline ? "baseline_rounds.jsonl" : "rounds.jsonl"));
        if (!*rounds_out) throw Error("cannot write to " + a.out_dir->string());
    }
    auto on_report = [&](const RoundReport& r) {
        std::cerr << "round " << r.round_index + 1 << ": holdout " << fmt(r.holdout_accuracy * 100, 2) << "%, "
                  << r.feedback_correct_count << "/" << r.feedback_batch_size << " correct, kappa "
                  << (r.kappa_vs_feedback ? fmt(*r.kappa_vs_feedback) : "n/a") << ", pool " << r.pool_size_after
                  << '\n';
        if (rounds_out) *rounds_out << to_json(r).dump() << '\n' << std::flush;
    };

    std::unique_ptr<FeedbackSource> feedback;
    std::unique_ptr<SessionStore> sessions;
    std::unique_ptr<httplib::Server> server;
    std::unique_ptr<AnnotationService> service;
    std::thread server_thread;
    if (a.interactive) {
        const fs::path log = a.log ? *a.log : fs::path("sessions.jsonl");
        sessions = std::make_unique<SessionStore>(log, &c);
        service = std::make_unique<AnnotationService>(*sessions, &c, a.corpus);
        server = std::make_unique<httplib::Server>();
        service->mount(*server);
        if (!server->bind_to_port(a.host, a.port)) throw Error("cannot bind " + a.host + ":" + std::to_string(a.port));
        server_thread = std::thread([&] { server->listen_after_bind(); });
        std::cerr << "annotation service on http://" << a.host << ":" << a.port << '\n';
        feedback = std::make_unique<SessionFeedback>(*sessions, a.feedback_annotator, [](const std::string& id) {
            std::cerr << "waiting for feedback session " << id << '\n';
        });
    } else {
        if (!a.oracle) throw ValidationError("loop needs --oracle <file> or --interactive");
        feedback = std::make_unique<OracleFeedback>(ground_truth(load_annotations(*a.oracle)));
    }

    std::vector<RoundReport> reports;
    try {
        if (a.baseline) {
            reports = run_baseline(pool, model, opts, *feedback, a.rounds);
            for (const auto& r : reports) on_report(r);
        } else {
            reports = run_experiment(pool, model, opts, *feedback, a.rounds, on_report);
        }
    } catch (...) {
        if (server) {
            server->stop();
            server_thread.join();
        }
        throw;
    }
    if (server) {
        server->stop();
        server_thread.join();
    }
    std::cout << format_round_table(reports);
    if (a.out_dir && !a.baseline) {
        save_annotations(*a.out_dir / "final_labels.jsonl", to_records(pool.labeled, "pool"));
        save_checkpoint(*a.out_dir / "model.ckpt", {model.params(), cfg, model.standardizer()});
    }
    return 0;
}

void write_csv_points(const fs::path& file, const std::vector<BookVector>& books, const ClusterModel& m) {
    auto out = io::open_out(file);
    out << "book_id,cluster,ACT,ASP,SUB,SCE,MOM,NON\n";
    for (const auto& b : books) {
        out << b.book_id << ',' << m.assignments.at(b.book_id);
        for (double v : b.v) out << ',' << v;
        out << '\n';
    }
}

int cmd_cluster(const fs::path& labels_file, std::size_t k, std::uint64_t seed, int restarts,
                const std::optional<fs::path>& out, const std::optional<fs::path>& csv,
                const std::optional<std::string>& annotator) {
    auto books = book_vectors(load_labels(labels_file, annotator));
    KMeansOptions opt;
    opt.restarts = restarts;
    auto m = cluster_books(books, k, seed, opt);
    if (out) io::open_out(*out) << to_json(m).dump(2) << '\n';
    if (csv) write_csv_points(*csv, books, m);
    std::cout << "k " << m.k << ", inertia " << fmt(m.inertia, 6) << "\n\ncentroids\n" << std::setw(8) << "cluster";
    for (auto l : kAllLabels) std::cout << std::setw(8) << code3(l);
    std::cout << '\n';
    for (std::size_t c = 0; c < m.k; ++c) {
        std::cout << std::setw(8) << c;
        for (double v : m.centroids[c]) std::cout << std::setw(8) << fmt(v, 3);
        std::cout << '\n';
    }
    std::cout << "\nassignments\n";
    for (const auto& [b, c] : m.assignments) std::cout << "  " << b << ' ' << c << '\n';
    return 0;
}

int cmd_elbow(const fs::path& labels_file, std::size_t kmin, std::size_t kmax, std::uint64_t seed, double threshold,
              int restarts, const std::optional<fs::path>& csv, const std::optional<std::string>& annotator) {
    auto books = book_vectors(load_labels(labels_file, annotator));
    auto pts = canonical_points(books);
    KMeansOptions opt;
    opt.restarts = restarts;
    auto rep = elbow<kNumLabels>(pts, kmin, std::min(kmax, pts.size()), seed, threshold, opt);
    if (csv) {
        auto out = io::open_out(*csv);
        out << "k,distortion,inertia\n";
        for (const auto& p : rep.curve) out << p.k << ',' << p.distortion << ',' << p.inertia << '\n';
    }
    std::cout << std::setw(4) << "k" << std::setw(14) << "distortion" << std::setw(14) << "inertia" << '\n';
    for (const auto& p : rep.curve)
        std::cout << std::setw(4) << p.k << std::setw(14) << fmt(p.distortion, 6) << std::setw(14) << fmt(p.inertia, 6)
                  << '\n';
    std::cout << "chosen k " << rep.chosen_k << " (relative drop threshold " << rep.threshold << ")\n";
    return 0;
}

int cmd_intersect(const fs::path& model_file, const std::string& groups_spec, const std::optional<fs::path>& corpus,
                  bool as_json) {
    auto m = cluster_model_from_json(json::parse(io::read_file(model_file)));
    auto t = intersect(m, load_groups(groups_spec, corpus));
    if (as_json) {
        for (std::size_t i = 0; i < t.groups.size(); ++i)
            std::cout << json{{"group", std::string(group_name(t.groups[i]))}, {"cells", t.cells[i]}, {"counts", t.counts[i]}}
                             .dump()
                      << '\n';
        return 0;
    }
    std::cout << std::left << std::setw(12) << "group";
    for (std::size_t c = 0; c < t.k; ++c) std::cout << std::right << std::setw(10) << ("cluster" + std::to_string(c));
    std::cout << '\n';
    for (std::size_t i = 0; i < t.groups.size(); ++i) {
        std::cout << std::left << std::setw(12) << group_name(t.groups[i]);
        for (double v : t.cells[i]) std::cout << std::right << std::setw(10) << fmt(v, 2);
        std::cout << '\n';
    }
    return 0;
}

int cmd_mine(const fs::path& labels_file, const std::string& groups_spec, const std::optional<fs::path>& corpus_dir,
             const std::string& lengths, std::size_t topk, std::size_t max_gap, bool as_json,
             const std::optional<std::string>& annotator) {
    auto labels = load_labels(labels_file, annotator);
    std::vector<PageSequence> seqs;
    if (corpus_dir) seqs = page_sequences(load_corpus(*corpus_dir), labels);
    else seqs = page_sequences(labels);
    MiningOptions opt;
    opt.lengths.clear();
    for (const auto& s : split_csv(lengths)) {
        auto n = std::stoul(s);
        if (n == 0) throw ValidationError("--lengths entries must be positive");
        opt.lengths.push_back(n);
    }
    opt.top_k = topk;
    opt.max_gap = max_gap;
    auto rep = mine(seqs, load_groups(groups_spec, corpus_dir), opt);
    if (as_json) {
        for (const auto& row : to_json(rep)) std::cout << row.dump() << '\n';
        return 0;
    }
    std::cout << format_mining_table(rep, opt);
    return 0;
}

std::atomic<httplib::Server*> g_server{nullptr};

void on_signal(int) {
    if (auto* s = g_server.load()) s->stop();
}

int cmd_serve(const fs::path& corpus_dir, const std::string& host, int port, const fs::path& log,
              const std::optional<fs::path>& images) {
    auto c = load_corpus(corpus_dir);
    SessionStore store(log, &c);
    AnnotationService service(store, &c, images ? *images : corpus_dir);
    httplib::Server srv;
    service.mount(srv);
    int bound = port;
    if (port == 0) bound = srv.bind_to_any_port(host);
    else if (!srv.bind_to_port(host, port)) bound = -1;
    if (bound <= 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    g_server = &srv;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on " << host << ":" << bound << std::endl;
    srv.listen_after_bind();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Comic panel transition analysis"};
    app.require_subcommand(1);
    bool as_json = false;
    std::optional<std::string> annotator;

    // corpus
    auto* corpus = app.add_subcommand("corpus", "Validate or summarise a corpus manifest");
    corpus->require_subcommand(1);
    fs::path corpus_dir;
    auto* validate = corpus->add_subcommand("validate", "Load and validate a manifest");
    validate->add_option("dir", corpus_dir)->required();
    auto* stats = corpus->add_subcommand("stats", "Label distribution and pair counts");
    stats->add_option("dir", corpus_dir)->required();
    stats->add_option("--annotator", annotator, "Only this annotator's records");
    stats->add_flag("--json", as_json, "Machine-readable records");

    // agree
    auto* agree = app.add_subcommand("agree", "Cohen's kappa between annotators");
    fs::path agree_src;
    std::string raters;
    bool all_pairs = false;
    agree->add_option("source", agree_src, "Corpus directory or annotation file")->required();
    agree->add_option("--raters", raters, "Two annotator ids, comma separated");
    agree->add_flag("--all-pairs", all_pairs, "Every annotator pair");
    agree->add_flag("--json", as_json);

    // features
    auto* features = app.add_subcommand("features", "Panel descriptor files");
    features->require_subcommand(1);
    auto* fcheck = features->add_subcommand("check", "Validate a descriptor file");
    fs::path feat_file;
    std::optional<fs::path> feat_corpus;
    fcheck->add_option("file", feat_file)->required();
    fcheck->add_option("--corpus", feat_corpus, "Also check coverage of this corpus's pairs");

    // train / predict
    auto* train_cmd = app.add_subcommand("train", "Train the classifier on ground truth");
    fs::path out_file;
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed_opt;
    train_cmd->add_option("--corpus", corpus_dir)->required();
    train_cmd->add_option("--features", feat_file)->required();
    train_cmd->add_option("--config", config, "TrainConfig JSON");
    train_cmd->add_option("--out", out_file)->required();
    train_cmd->add_option("--seed", seed_opt);
    train_cmd->add_option("--annotator", annotator);

    auto* predict = app.add_subcommand("predict", "Predict labels for pairs");
    fs::path model_file, pairs_file;
    predict->add_option("--model", model_file)->required();
    predict->add_option("--pairs", pairs_file)->required();
    predict->add_option("--features", feat_file)->required();

    // loop
    auto* loop = app.add_subcommand("loop", "Iterative feedback training");
    LoopArgs la;
    loop->add_option("--corpus", la.corpus)->required();
    loop->add_option("--features", la.features)->required();
    loop->add_option("--oracle", la.oracle, "Feedback labels file");
    loop->add_option("--config", la.config);
    loop->add_option("--rounds", la.rounds)->check(CLI::NonNegativeNumber);
    loop->add_option("--seed", la.seed);
    loop->add_option("--batch", la.batch, "Feedback batch size")->check(CLI::PositiveNumber);
    loop->add_option("--out", la.out_dir, "Directory for rounds.jsonl, final labels and model");
    loop->add_option("--annotator", la.annotator, "Ground truth from this annotator only");
    loop->add_flag("--adopt-corrections", la.adopt, "Mispredicted pairs enter with the feedback label");
    loop->add_flag("--cold-start", la.cold, "Re-initialise the model every round");
    loop->add_flag("--baseline", la.baseline, "No-feedback baseline on a fixed split");
    loop->add_flag("--interactive", la.interactive, "Collect feedback through the annotation service");
    loop->add_option("--port", la.port);
    loop->add_option("--host", la.host);
    loop->add_option("--log", la.log, "Session log (interactive)");
    loop->add_option("--feedback-annotator", la.feedback_annotator);

    // clustering
    std::uint64_t seed = 0;
    int restarts = 10;
    std::optional<fs::path> csv, out_opt;
    fs::path labels_file;
    auto* cluster = app.add_subcommand("cluster", "k-means over per-book transition vectors");
    std::size_t k = 4;
    cluster->add_option("--labels", labels_file)->required();
    cluster->add_option("--k", k)->check(CLI::PositiveNumber);
    cluster->add_option("--seed", seed);
    cluster->add_option("--restarts", restarts)->check(CLI::PositiveNumber);
    cluster->add_option("--out", out_opt, "Write the model as JSON");
    cluster->add_option("--csv", csv, "Per-book coordinates and cluster");
    cluster->add_option("--annotator", annotator);

    auto* elbow_cmd = app.add_subcommand("elbow", "Distortion and inertia against k");
    std::size_t kmin = 1, kmax = 10;
    double threshold = 0.10;
    elbow_cmd->add_option("--labels", labels_file)->required();
    elbow_cmd->add_option("--kmin", kmin)->check(CLI::PositiveNumber);
    elbow_cmd->add_option("--kmax", kmax)->check(CLI::PositiveNumber);
    elbow_cmd->add_option("--threshold", threshold);
    elbow_cmd->add_option("--seed", seed);
    elbow_cmd->add_option("--restarts", restarts)->check(CLI::PositiveNumber);
    elbow_cmd->add_option("--csv", csv);
    elbow_cmd->add_option("--annotator", annotator);

    auto* intersect_cmd = app.add_subcommand("intersect", "Cluster / genre-group intersection");
    std::string groups = "default";
    std::optional<fs::path> corpus_opt;
    intersect_cmd->add_option("--model", model_file)->required();
    intersect_cmd->add_option("--groups", groups, "'default' or a JSON file book_id -> group");
    intersect_cmd->add_option("--corpus", corpus_opt);
    intersect_cmd->add_flag("--json", as_json);

    auto* mine_cmd = app.add_subcommand("mine", "Frequent transition sequences per genre group");
    std::string lengths = "1,2,3,4";
    std::size_t topk = 4, max_gap = 0;
    mine_cmd->add_option("--labels", labels_file)->required();
    mine_cmd->add_option("--groups", groups);
    mine_cmd->add_option("--corpus", corpus_opt);
    mine_cmd->add_option("--lengths", lengths);
    mine_cmd->add_option("--topk", topk)->check(CLI::PositiveNumber);
    mine_cmd->add_option("--max-gap", max_gap);
    mine_cmd->add_flag("--json", as_json);
    mine_cmd->add_option("--annotator", annotator);

    auto* serve = app.add_subcommand("serve", "Annotation HTTP service");
    std::string host = "127.0.0.1";
    int port = 8080;
    fs::path log = "sessions.jsonl";
    std::optional<fs::path> images;
    serve->add_option("--corpus", corpus_dir)->required();
    serve->add_option("--port", port, "0 picks a free port");
    serve->add_option("--host", host);
    serve->add_option("--log", log);
    serve->add_option("--images", images, "Root for relative image_refs (default: corpus dir)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) return cmd_corpus_validate(corpus_dir);
        if (*stats) return cmd_corpus_stats(corpus_dir, annotator, as_json);
        if (*agree) return cmd_agree(agree_src, raters, all_pairs, as_json);
        if (*fcheck) return cmd_features_check(feat_file, feat_corpus);
        if (*train_cmd) return cmd_train(corpus_dir, feat_file, config, out_file, annotator, seed_opt);
        if (*predict) return cmd_predict(model_file, pairs_file, feat_file);
        if (*loop) return cmd_loop(la);
        if (*cluster) return cmd_cluster(labels_file, k, seed, restarts, out_opt, csv, annotator);
        if (*elbow_cmd) return cmd_elbow(labels_file, kmin, kmax, seed, threshold, restarts, csv, annotator);
        if (*intersect_cmd) return cmd_intersect(model_file, groups, corpus_opt, as_json);
        if (*mine_cmd) return cmd_mine(labels_file, groups, corpus_opt, lengths, topk, max_gap, as_json, annotator);
        if (*serve) return cmd_serve(corpus_dir, host, port, log, images);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
