#pragma once

// Annotation sessions backed by an append-only JSONL log. The log is the
// source of truth: every state change is appended (and flushed to disk)
// before it is acknowledged, and the in-memory state is rebuilt by replaying
// the log on start-up.
//
// Log records:
//   {"type":"session_created","session_id",...,"pairs":[...]}
//   {"type":"label","session_id","annotator_id","pair":{...},"label":"ACT"}
//   {"type":"session_abandoned","session_id"}
//
// "label" records carry the AnnotationRecord fields, so the log can be read
// back as annotations (see export_annotations).

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "panelscope/corpus.hpp"
#include "panelscope/error.hpp"
#include "panelscope/feedback_loop.hpp"
#include "panelscope/log.hpp"

namespace panelscope {

enum class SessionMode { GroundTruth, RoundFeedback };

inline std::string to_string(SessionMode m) {
    return m == SessionMode::GroundTruth ? "ground_truth" : "round_feedback";
}

inline SessionMode parse_session_mode(std::string_view s) {
    if (s == "ground_truth") return SessionMode::GroundTruth;
    if (s == "round_feedback") return SessionMode::RoundFeedback;
    throw ValidationError("mode must be 'ground_truth' or 'round_feedback', got '" + std::string(s) + "'");
}

struct Session {
    std::string session_id;
    std::string annotator_id;
    SessionMode mode = SessionMode::GroundTruth;
    std::optional<int> round_index;
    std::vector<PanelPair> task_queue;
    std::map<PanelPair, TransitionLabel> completed;
    bool abandoned = false;

    bool complete() const { return completed.size() == task_queue.size(); }

    // First pending task in queue order.
    std::optional<PanelPair> next() const {
        for (const auto& p : task_queue)
            if (!completed.count(p)) return p;
        return std::nullopt;
    }

    bool operator==(const Session&) const = default;
};

struct Progress {
    std::size_t completed = 0;
    std::size_t total = 0;
    bool complete = false;
    bool abandoned = false;
};

inline json to_json(const Progress& p) {
    return {{"completed", p.completed}, {"total", p.total}, {"complete", p.complete}, {"abandoned", p.abandoned}};
}

namespace detail {

// Append-only file; each record is written with a single write(2) on an
// O_APPEND descriptor and synced before returning.
class AppendLog {
public:
    explicit AppendLog(const std::filesystem::path& path) : path_(path) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (fd_ < 0) throw Error("cannot open log " + path.string());
    }
    AppendLog(const AppendLog&) = delete;
    AppendLog& operator=(const AppendLog&) = delete;
    ~AppendLog() {
        if (fd_ >= 0) ::close(fd_);
    }

    void append(const json& rec) {
        std::string line = rec.dump() + "\n";
        const char* p = line.data();
        std::size_t left = line.size();
        while (left > 0) {
            auto n = ::write(fd_, p, left);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw Error("write to log " + path_.string() + " failed");
            }
            p += n;
            left -= static_cast<std::size_t>(n);
        }
        if (::fdatasync(fd_) != 0) throw Error("fdatasync on log " + path_.string() + " failed");
    }

private:
    std::filesystem::path path_;
    int fd_ = -1;
};

}  // namespace detail

class SessionStore {
public:
    // Replays `log_path` if it exists. A trailing partial line (torn write)
    // is ignored with a warning; any other malformed line is an error.
    explicit SessionStore(const std::filesystem::path& log_path, const Corpus* corpus = nullptr)
        : corpus_(corpus) {
        if (std::filesystem::exists(log_path)) replay(log_path);
        log_ = std::make_unique<detail::AppendLog>(log_path);
    }

    struct Created {
        std::string session_id;
        std::vector<std::string> warnings;
    };

    Created create(const std::string& annotator_id, std::span<const PanelPair> pairs, SessionMode mode,
                   std::optional<int> round_index = std::nullopt) {
        if (annotator_id.empty()) throw ValidationError("annotator_id must be non-empty");
        if (pairs.empty()) throw ValidationError("a session needs at least one pair");
        Created out;
        std::vector<PanelPair> queue;
        std::set<PanelPair> seen;
        for (const auto& p : pairs) {
            if (corpus_ && !corpus_->has_pair(p)) throw ValidationError("unknown pair " + p.key());
            if (!seen.insert(p).second) {
                out.warnings.push_back("duplicate pair " + p.key() + " dropped");
                continue;
            }
            queue.push_back(p);
        }
        for (const auto& w : out.warnings) log::warn(w);

        std::lock_guard lock(mu_);
        Session s{"s" + std::to_string(next_id_), annotator_id, mode, round_index, std::move(queue), {}, false};
        json pj = json::array();
        for (const auto& p : s.task_queue) pj.push_back(to_json(p));
        json rec = {{"type", "session_created"}, {"session_id", s.session_id}, {"annotator_id", annotator_id},
                    {"mode", to_string(mode)}, {"pairs", pj}};
        rec["round_index"] = round_index ? json(*round_index) : json(nullptr);
        log_->append(rec);
        ++next_id_;
        out.session_id = s.session_id;
        sessions_.emplace(s.session_id, std::move(s));
        return out;
    }

    Session get(const std::string& id) const {
        std::lock_guard lock(mu_);
        return find(id);
    }

    std::vector<Session> sessions() const {
        std::lock_guard lock(mu_);
        std::vector<Session> out;
        for (const auto& [_, s] : sessions_) out.push_back(s);
        return out;
    }

    std::optional<PanelPair> next(const std::string& id) const {
        std::lock_guard lock(mu_);
        return find(id).next();
    }

    Progress progress(const std::string& id) const {
        std::lock_guard lock(mu_);
        return progress_of(find(id));
    }

    // Records a label for a pending task. The record is durable before this
    // returns.
    Progress submit(const std::string& id, const PanelPair& pair, TransitionLabel label) {
        std::unique_lock lock(mu_);
        auto& s = find(id);
        if (s.abandoned) throw ConflictError("session " + id + " was abandoned");
        if (std::find(s.task_queue.begin(), s.task_queue.end(), pair) == s.task_queue.end())
            throw ConflictError("pair " + pair.key() + " is not a task of session " + id);
        if (s.completed.count(pair)) throw ConflictError("pair " + pair.key() + " is already labeled in session " + id);
        log_->append({{"type", "label"}, {"session_id", id}, {"annotator_id", s.annotator_id},
                      {"pair", to_json(pair)}, {"label", std::string(code3(label))}});
        s.completed.emplace(pair, label);
        auto p = progress_of(s);
        lock.unlock();
        cv_.notify_all();
        return p;
    }

    void abandon(const std::string& id) {
        std::unique_lock lock(mu_);
        auto& s = find(id);
        if (s.complete()) throw ConflictError("session " + id + " is already complete");
        if (!s.abandoned) {
            log_->append({{"type", "session_abandoned"}, {"session_id", id}});
            s.abandoned = true;
        }
        lock.unlock();
        cv_.notify_all();
    }

    // Blocks until the session is complete or abandoned; returns the final
    // state. `poll` bounds how long a missed notification can delay the
    // wake-up.
    Session wait(const std::string& id, std::chrono::milliseconds poll = std::chrono::milliseconds(200)) const {
        std::unique_lock lock(mu_);
        for (;;) {
            const auto& s = find(id);
            if (s.complete() || s.abandoned) return s;
            cv_.wait_for(lock, poll);
        }
    }

private:
    const Session& find(const std::string& id) const {
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw NotFoundError("unknown session " + id);
        return it->second;
    }
    Session& find(const std::string& id) {
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw NotFoundError("unknown session " + id);
        return it->second;
    }

    static Progress progress_of(const Session& s) {
        return {s.completed.size(), s.task_queue.size(), s.complete(), s.abandoned};
    }

    void replay(const std::filesystem::path& path) {
        std::string text = io::read_file(path);
        std::size_t pos = 0, lineno = 0;
        while (pos < text.size()) {
            auto nl = text.find('\n', pos);
            ++lineno;
            if (nl == std::string::npos) {
                log::warn(path.string() + ":" + std::to_string(lineno) + ": ignoring incomplete trailing record");
                break;
            }
            std::string line = text.substr(pos, nl - pos);
            pos = nl + 1;
            if (line.empty()) continue;
            try {
                apply(json::parse(line));
            } catch (const json::exception& e) {
                throw ParseError(path.string() + ":" + std::to_string(lineno), e.what());
            }
        }
    }

    void apply(const json& rec) {
        const auto type = rec.at("type").get<std::string>();
        const auto id = rec.at("session_id").get<std::string>();
        if (type == "session_created") {
            Session s;
            s.session_id = id;
            s.annotator_id = rec.at("annotator_id").get<std::string>();
            s.mode = parse_session_mode(rec.at("mode").get<std::string>());
            if (rec.contains("round_index") && !rec.at("round_index").is_null())
                s.round_index = rec.at("round_index").get<int>();
            for (const auto& p : rec.at("pairs")) s.task_queue.push_back(pair_from_json(p));
            if (id.size() > 1 && id[0] == 's') next_id_ = std::max(next_id_, std::stoull(id.substr(1)) + 1);
            sessions_[id] = std::move(s);
        } else if (type == "label") {
            find(id).completed[pair_from_json(rec.at("pair"))] = parse_label(rec.at("label").get<std::string>());
        } else if (type == "session_abandoned") {
            find(id).abandoned = true;
        } else {
            throw ValidationError("unknown log record type '" + type + "'");
        }
    }

    const Corpus* corpus_;
    std::unique_ptr<detail::AppendLog> log_;
    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    std::map<std::string, Session> sessions_;
    unsigned long long next_id_ = 1;
};

// Every label in the log as an AnnotationRecord, in log order.
inline std::vector<AnnotationRecord> export_annotations(const std::filesystem::path& log_path) {
    std::vector<AnnotationRecord> out;
    io::for_each_jsonl(log_path, [&](const json& j, std::size_t) {
        if (j.value("type", std::string()) == "label") out.push_back(annotation_from_json(j));
    });
    return out;
}

// Feedback collected through a served annotation session: the round blocks
// until the annotator finishes the batch. Predictions are never handed to
// the store.
class SessionFeedback : public FeedbackSource {
public:
    SessionFeedback(SessionStore& store, std::string annotator_id,
                    std::function<void(const std::string&)> on_session = {})
        : store_(&store), annotator_(std::move(annotator_id)), on_session_(std::move(on_session)) {}

    std::vector<TransitionLabel> collect(int round_index, std::span<const PanelPair> pairs) override {
        auto created = store_->create(annotator_, pairs, SessionMode::RoundFeedback, round_index);
        if (on_session_) on_session_(created.session_id);
        auto s = store_->wait(created.session_id);
        if (s.abandoned) throw AbortedError("feedback session " + s.session_id + " was abandoned");
        std::vector<TransitionLabel> out;
        out.reserve(pairs.size());
        for (const auto& p : pairs) out.push_back(s.completed.at(p));
        return out;
    }

private:
    SessionStore* store_;
    std::string annotator_;
    std::function<void(const std::string&)> on_session_;
};

}  // namespace panelscope
