#pragma once

// HTTP front end for SessionStore. Bodies are single JSON documents.
//
//   POST   /sessions                      {"annotator_id","pairs":[...],"mode","round_index"?}
//   GET    /sessions                      list with progress
//   GET    /sessions/{id}/next            next pending pair, or completion summary
//   POST   /sessions/{id}/labels          {"pair":{...} | "key":"b:p:i","label":"ACT"}
//   GET    /sessions/{id}/progress
//   DELETE /sessions/{id}                 abandon
//   GET    /pairs/{key}/images            image refs of both panels
//   GET    /pairs/{key}/images/{first|second}
//
// Pairs in requests are either pair objects or key strings ("book:page:first",
// with a trailing '+' for a cross-page pair).

#include <filesystem>
#include <string>
#include <vector>

#include "panelscope/corpus.hpp"
#include "panelscope/error.hpp"
#include "panelscope/session_store.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro that
// collides with Eigen parameter names.
#include <httplib.h>

namespace panelscope {

namespace detail {

inline PanelPair pair_from_request(const json& j) {
    if (j.is_string()) return parse_pair_key(j.get<std::string>());
    return pair_from_json(j);
}

inline int http_status(const std::exception& e) {
    if (dynamic_cast<const NotFoundError*>(&e)) return 404;
    if (dynamic_cast<const ConflictError*>(&e)) return 409;
    if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const json::exception*>(&e))
        return 400;
    return 500;
}

inline void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        reply(res, http_status(e), {{"error", e.what()}});
    }
}

inline std::string content_type_for(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".gif") return "image/gif";
    if (ext == ".webp") return "image/webp";
    return "application/octet-stream";
}

}  // namespace detail

class AnnotationService {
public:
    // `image_root` resolves relative image_refs.
    AnnotationService(SessionStore& store, const Corpus* corpus = nullptr, std::filesystem::path image_root = {})
        : store_(&store), corpus_(corpus), image_root_(std::move(image_root)) {}

    void mount(httplib::Server& srv) {
        using httplib::Request;
        using httplib::Response;

        srv.Post("/sessions", [this](const Request& req, Response& res) {
            detail::guarded(res, [&] {
                auto body = json::parse(req.body);
                std::vector<PanelPair> pairs;
                if (!body.contains("pairs") || !body.at("pairs").is_array())
                    throw ValidationError("'pairs' must be an array");
                for (const auto& p : body.at("pairs")) pairs.push_back(detail::pair_from_request(p));
                auto mode = parse_session_mode(body.value("mode", std::string("ground_truth")));
                std::optional<int> round;
                if (body.contains("round_index") && !body.at("round_index").is_null())
                    round = body.at("round_index").get<int>();
                auto created = store_->create(body.value("annotator_id", std::string()), pairs, mode, round);
                auto s = store_->get(created.session_id);
                detail::reply(res, 201,
                              {{"session_id", created.session_id},
                               {"total", s.task_queue.size()},
                               {"warnings", created.warnings}});
            });
        });

        srv.Get("/sessions", [this](const Request&, Response& res) {
            detail::guarded(res, [&] {
                json out = json::array();
                for (const auto& s : store_->sessions()) out.push_back(summary(s));
                detail::reply(res, 200, out);
            });
        });

        srv.Get(R"(/sessions/([^/]+)/next)", [this](const Request& req, Response& res) {
            detail::guarded(res, [&] {
                auto s = store_->get(req.matches[1]);
                auto next = s.next();
                if (!next) {
                    detail::reply(res, 200, {{"status", "complete"}, {"summary", summary(s)}});
                    return;
                }
                json out = {{"status", s.abandoned ? "abandoned" : "pending"},
                            {"session_id", s.session_id},
                            {"mode", to_string(s.mode)},
                            {"pair", to_json(*next)},
                            {"key", next->key()},
                            {"progress", to_json(progress(s))}};
                auto refs = image_refs(*next);
                out["image_refs"] = refs ? json(*refs) : json(nullptr);
                detail::reply(res, 200, out);
            });
        });

        srv.Post(R"(/sessions/([^/]+)/labels)", [this](const Request& req, Response& res) {
            detail::guarded(res, [&] {
                auto body = json::parse(req.body);
                PanelPair pair;
                if (body.contains("pair")) pair = detail::pair_from_request(body.at("pair"));
                else if (body.contains("key")) pair = parse_pair_key(body.at("key").get<std::string>());
                else throw ValidationError("request needs 'pair' or 'key'");
                if (!body.contains("label") || !body.at("label").is_string())
                    throw ValidationError("'label' must be one of ACT, ASP, SUB, SCE, MOM, NON");
                auto label = parse_label(body.at("label").get<std::string>());
                auto p = store_->submit(req.matches[1], pair, label);
                detail::reply(res, 200, {{"ack", true}, {"progress", to_json(p)}});
            });
        });

        srv.Get(R"(/sessions/([^/]+)/progress)", [this](const Request& req, Response& res) {
            detail::guarded(res, [&] { detail::reply(res, 200, summary(store_->get(req.matches[1]))); });
        });

        srv.Delete(R"(/sessions/([^/]+))", [this](const Request& req, Response& res) {
            detail::guarded(res, [&] {
                store_->abandon(req.matches[1]);
                detail::reply(res, 200, summary(store_->get(req.matches[1])));
            });
        });

        srv.Get(R"(/pairs/([^/]+)/images)", [this](const Request& req, Response& res) {
            detail::guarded(res, [&] {
                auto pair = parse_pair_key(req.matches[1].str());
                auto refs = image_refs(pair);
                if (!refs) throw NotFoundError("no images for pair " + pair.key());
                json urls = json::array({"/pairs/" + pair.key() + "/images/first",
                                         "/pairs/" + pair.key() + "/images/second"});
                detail::reply(res, 200, json{{"key", pair.key()}, {"first", (*refs)[0]}, {"second", (*refs)[1]}, {"urls", urls}});
            });
        });

        srv.Get(R"(/pairs/([^/]+)/images/(first|second))", [this](const Request& req, Response& res) {
            detail::guarded(res, [&] {
                auto pair = parse_pair_key(req.matches[1].str());
                auto refs = image_refs(pair);
                if (!refs) throw NotFoundError("no images for pair " + pair.key());
                std::filesystem::path p = (*refs)[req.matches[2] == "first" ? 0 : 1];
                if (p.is_relative() && !image_root_.empty()) p = image_root_ / p;
                if (!std::filesystem::is_regular_file(p)) throw NotFoundError("image file not found: " + p.string());
                res.status = 200;
                res.set_content(io::read_file(p), detail::content_type_for(p));
            });
        });
    }

private:
    static Progress progress(const Session& s) {
        return {s.completed.size(), s.task_queue.size(), s.complete(), s.abandoned};
    }

    static json summary(const Session& s) {
        json per_label = json::object();
        for (auto l : kAllLabels) per_label[std::string(code3(l))] = 0;
        for (const auto& [_, l] : s.completed) per_label[std::string(code3(l))] = per_label[std::string(code3(l))].get<int>() + 1;
        json out = {{"session_id", s.session_id},
                    {"annotator_id", s.annotator_id},
                    {"mode", to_string(s.mode)},
                    {"completed", s.completed.size()},
                    {"total", s.task_queue.size()},
                    {"complete", s.complete()},
                    {"abandoned", s.abandoned},
                    {"per_label", per_label}};
        out["round_index"] = s.round_index ? json(*s.round_index) : json(nullptr);
        return out;
    }

    std::optional<std::array<std::string, 2>> image_refs(const PanelPair& pair) const {
        if (!corpus_) return std::nullopt;
        auto a = corpus_->find_panel(pair.first_key());
        auto b = corpus_->find_panel(pair.second_key());
        if (!a || !b || !a->image_ref || !b->image_ref) return std::nullopt;
        return std::array<std::string, 2>{*a->image_ref, *b->image_ref};
    }

    SessionStore* store_;
    const Corpus* corpus_;
    std::filesystem::path image_root_;
};

}  // namespace panelscope
