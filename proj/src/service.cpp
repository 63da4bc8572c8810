#include "clinistruct/service.hpp"

#include <charconv>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "clinistruct/common.hpp"
#include "clinistruct/pipeline.hpp"

namespace clinistruct::service {

using nlohmann::json;

namespace {

json snippet_json(const syndict::Snippet& s) {
    return {{"doc_id", s.doc_id}, {"token_index", s.token_index}, {"left", s.left}, {"term", s.term}, {"right", s.right}};
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::NotFound: return 404;
        case ErrorCode::Conflict:
        case ErrorCode::State: return 409;
        case ErrorCode::Io: return 500;
        default: return 400;
    }
}

std::string_view error_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid_argument";
        case ErrorCode::Io: return "io_error";
        case ErrorCode::Parse: return "parse_error";
        case ErrorCode::NotFound: return "not_found";
        case ErrorCode::Conflict: return "conflict";
        case ErrorCode::State: return "state";
    }
    return "internal";
}

std::vector<std::string> string_list(const json& request, const char* key) {
    if (!request.contains(key)) return {};
    const auto& v = request.at(key);
    if (!v.is_array()) throw Error(ErrorCode::InvalidArgument, fmt::format("'{}' must be an array of strings", key));
    std::vector<std::string> out;
    for (const auto& t : v) {
        if (!t.is_string()) throw Error(ErrorCode::InvalidArgument, fmt::format("'{}' must be an array of strings", key));
        out.push_back(t.get<std::string>());
    }
    return out;
}

}  // namespace

Response error_response(int status, std::string_view code, std::string_view message) {
    return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

std::string session_id(const syndict::ConceptEntry& c) {
    std::size_t n = 0;
    for (const auto& e : c.history)
        if (e.value("event", "") == "seed") ++n;
    return fmt::format("{}.{}", c.concept_id, n);
}

ReviewService::ReviewService(std::filesystem::path dictionary_path, embedding::EmbeddingModel model,
                             std::span<const textnorm::NormalizedDocument> corpus, syndict::SuggestOptions opts,
                             std::optional<io::Provenance> prov)
    : path_(std::move(dictionary_path)), model_(std::move(model)), contexts_(corpus), opts_(opts), prov_(std::move(prov)) {
    dict_ = syndict::SynonymDictionary::load(path_);
}

void ReviewService::persist() const {
    dict_.save(path_, prov_ ? prov_->json_header()["_header"] : json(nullptr));
}

json ReviewService::session_json(const syndict::ConceptEntry& c, const std::vector<std::string>& warnings) const {
    json pending = json::array();
    for (const auto& p : c.pending) {
        json snippets = json::array();
        for (const auto& s : p.snippets) snippets.push_back(snippet_json(s));
        pending.push_back({{"token", p.token}, {"similarity", p.similarity}, {"query", p.query}, {"snippets", snippets}});
    }
    json rounds = json::array();
    for (const auto& r : c.session.history)
        rounds.push_back({{"iteration", r.iteration}, {"proposed", r.proposed}, {"accepted", r.accepted}, {"rejected", r.rejected}});
    return {{"session_id", session_id(c)},
            {"concept_id", c.concept_id},
            {"canonical", c.canonical},
            {"iteration", c.session.iteration},
            {"active", c.session.active},
            {"fixpoint", c.session.fixpoint},
            {"pending", pending},
            {"accepted", c.accepted},
            {"rejected", c.rejected},
            {"rounds", rounds},
            {"warnings", warnings}};
}

const syndict::ConceptEntry* ReviewService::resolve(std::string_view id) const {
    auto dot = id.rfind('.');
    if (dot == std::string_view::npos) return nullptr;
    auto concept_id = id.substr(0, dot);
    if (!dict_.contains(concept_id)) return nullptr;
    const auto& c = dict_.at(concept_id);
    if (!c.session.active || session_id(c) != id) return nullptr;
    return &c;
}

Response ReviewService::list_concepts() const {
    std::shared_lock lock(mutex_);
    json list = json::array();
    for (const auto& [id, c] : dict_.concepts())
        list.push_back({{"concept_id", id},
                        {"canonical", c.canonical},
                        {"accepted", c.accepted},
                        {"session_id", c.session.active ? json(session_id(c)) : json(nullptr)},
                        {"fixpoint", c.session.fixpoint}});
    return {200, {{"concepts", list}}};
}

Response ReviewService::create_session(const json& request) {
    if (!request.is_object() || !request.contains("concept_id") || !request["concept_id"].is_string())
        return error_response(400, "invalid_argument", "request needs a string 'concept_id'");
    auto concept_id = request["concept_id"].get<std::string>();
    auto seeds = string_list(request, "seeds");

    std::unique_lock lock(mutex_);
    if (!dict_.contains(concept_id) && seeds.empty())
        return error_response(400, "unknown_concept", fmt::format("unknown concept '{}' and no seeds given", concept_id));
    // Work on a copy so a failure leaves the dictionary untouched.
    auto next = dict_;
    if (next.contains(concept_id)) {
        auto& c = next.at(concept_id);
        if (c.session.active && !c.session.fixpoint)
            return error_response(409, "session_active",
                                  fmt::format("concept '{}' already has an active session '{}'", concept_id, session_id(c)));
        // A session at fixpoint is finished and gives way to the new one.
        if (c.session.active) syndict::close_session(c.session, next);
    }
    std::vector<std::string> warnings;
    auto& session = syndict::seed_concept(next, concept_id, concept_id, seeds);
    syndict::suggest(session, model_, next, opts_, &contexts_, &warnings);
    next.validate();
    dict_ = std::move(next);
    persist();
    return {201, session_json(dict_.at(concept_id), warnings)};
}

Response ReviewService::get_session(std::string_view id) const {
    std::shared_lock lock(mutex_);
    const auto* c = resolve(id);
    if (!c) return error_response(404, "session_not_found", fmt::format("no active session '{}'", id));
    return {200, session_json(*c)};
}

Response ReviewService::post_decisions(std::string_view id, const json& request) {
    if (!request.is_object()) return error_response(400, "invalid_argument", "request body must be an object");
    auto accepts = string_list(request, "accepts");
    auto rejects = string_list(request, "rejects");

    std::unique_lock lock(mutex_);
    const auto* found = resolve(id);
    if (!found) return error_response(404, "session_not_found", fmt::format("no active session '{}'", id));
    {
        syndict::TokenSet pending;
        for (const auto& p : found->pending) pending.insert(p.token);
        for (const auto* list : {&accepts, &rejects})
            for (const auto& t : *list)
                if (!pending.contains(t))
                    return {400, {{"error", {{"code", "not_pending"},
                                             {"message", fmt::format("token '{}' is not pending", t)},
                                             {"token", t}}}}};
    }
    auto next = dict_;
    auto concept_id = found->concept_id;
    auto& session = next.at(concept_id).session;
    std::vector<std::string> warnings;
    syndict::apply_decisions(session, next, syndict::TokenSet(accepts.begin(), accepts.end()),
                             syndict::TokenSet(rejects.begin(), rejects.end()));
    syndict::suggest(session, model_, next, opts_, &contexts_, &warnings);
    next.validate();
    dict_ = std::move(next);
    persist();
    return {200, session_json(dict_.at(concept_id), warnings)};
}

Response ReviewService::contexts(std::string_view term, std::size_t limit) const {
    json list = json::array();
    for (const auto& s : contexts_.snippets(term, limit)) list.push_back(snippet_json(s));
    return {200, {{"term", term}, {"snippets", list}}};
}

Response ReviewService::handle(std::string_view method, std::string_view path,
                               const std::map<std::string, std::string>& query, std::string_view body) {
    try {
        auto parse_body = [&]() {
            try {
                return body.empty() ? json::object() : json::parse(body);
            } catch (const json::exception&) {
                throw Error(ErrorCode::Parse, "request body is not valid JSON");
            }
        };
        constexpr std::string_view sessions = "/v1/sessions";
        constexpr std::string_view decisions = "/decisions";
        if (path == "/v1/concepts") {
            if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
            return list_concepts();
        }
        if (path == "/v1/contexts") {
            if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
            auto term = query.find("term");
            if (term == query.end() || term->second.empty())
                return error_response(400, "invalid_argument", "query parameter 'term' is required");
            std::size_t limit = 10;
            if (auto l = query.find("limit"); l != query.end()) {
                const auto& s = l->second;
                auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), limit);
                if (ec != std::errc() || ptr != s.data() + s.size())
                    return error_response(400, "invalid_argument", fmt::format("bad limit '{}'", s));
            }
            return contexts(term->second, limit);
        }
        if (path == sessions) {
            if (method != "POST") return error_response(405, "method_not_allowed", "use POST");
            return create_session(parse_body());
        }
        if (path.starts_with(sessions) && path.size() > sessions.size() + 1 && path[sessions.size()] == '/') {
            auto rest = path.substr(sessions.size() + 1);
            if (rest.ends_with(decisions)) {
                if (method != "POST") return error_response(405, "method_not_allowed", "use POST");
                return post_decisions(rest.substr(0, rest.size() - decisions.size()), parse_body());
            }
            if (rest.find('/') == std::string_view::npos) {
                if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
                return get_session(rest);
            }
        }
        return error_response(404, "not_found", fmt::format("no route for {} {}", method, path));
    } catch (const Error& e) {
        return error_response(http_status(e.code()), error_code(e.code()), e.what());
    } catch (const std::exception& e) {
        return error_response(500, "internal", e.what());
    }
}

std::unique_ptr<ReviewService> open_review_service(const pipeline::PipelineConfig& cfg) {
    pipeline::Pipeline p(cfg);
    auto need = [](const std::filesystem::path& f) {
        if (!std::filesystem::exists(f))
            throw Error(ErrorCode::NotFound, fmt::format("stage 'serve': missing input '{}'", f.string()));
        return f;
    };
    auto model = embedding::load_binary(need(p.artifact("model.bin")));
    auto corpus = pipeline::read_corpus(need(p.artifact("phrased.jsonl")));
    return std::make_unique<ReviewService>(need(p.artifact("dictionary.json")), std::move(model), corpus,
                                           syndict::SuggestOptions{cfg.review.k, cfg.review.snippets}, cfg.provenance());
}

struct HttpServer::Impl {
    ReviewService& service;
    httplib::Server server;
    std::thread thread;
};

HttpServer::HttpServer(ReviewService& service) : impl_(new Impl{service, {}, {}}) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> query;
        for (const auto& [k, v] : req.params) query.emplace(k, v);
        auto r = impl_->service.handle(req.method, req.path, query, req.body);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json; charset=utf-8");
    };
    auto& s = impl_->server;
    s.Get(R"(/.*)", handler);
    s.Post(R"(/.*)", handler);
    s.Put(R"(/.*)", handler);
    s.Delete(R"(/.*)", handler);
}

HttpServer::~HttpServer() {
    stop();
    wait();
}

int HttpServer::start(const std::string& host, int port) {
    auto& s = impl_->server;
    int bound = port;
    if (port == 0) {
        bound = s.bind_to_any_port(host);
        if (bound < 0) throw Error(ErrorCode::Io, fmt::format("cannot bind {}", host));
    } else if (!s.bind_to_port(host, port)) {
        throw Error(ErrorCode::Io, fmt::format("cannot bind {}:{}", host, port));
    }
    impl_->thread = std::thread([&s] { s.listen_after_bind(); });
    s.wait_until_ready();
    return bound;
}

void HttpServer::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace clinistruct::service
