#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "clinistruct/embedding.hpp"
#include "clinistruct/io.hpp"
#include "clinistruct/lexicon.hpp"
#include "clinistruct/pipeline.hpp"
#include "clinistruct/syndict.hpp"

namespace clinistruct::service {

struct Response {
    int status = 200;
    nlohmann::json body;
};

// Review sessions over a persisted dictionary. A session id is
// "<concept_id>.<n>", n counting the sessions started for the concept; ids of
// replaced sessions stop resolving. Every mutation is written to disk before
// the handler returns.
class ReviewService {
public:
    ReviewService(std::filesystem::path dictionary_path, embedding::EmbeddingModel model,
                  std::span<const textnorm::NormalizedDocument> corpus, syndict::SuggestOptions opts = {},
                  std::optional<io::Provenance> prov = std::nullopt);

    // GET /v1/concepts, POST /v1/sessions, GET /v1/sessions/{id},
    // POST /v1/sessions/{id}/decisions, GET /v1/contexts?term=&limit=
    Response handle(std::string_view method, std::string_view path,
                    const std::map<std::string, std::string>& query, std::string_view body);

    Response list_concepts() const;
    Response create_session(const nlohmann::json& request);
    Response get_session(std::string_view id) const;
    Response post_decisions(std::string_view id, const nlohmann::json& request);
    Response contexts(std::string_view term, std::size_t limit) const;

private:
    nlohmann::json session_json(const syndict::ConceptEntry& c, const std::vector<std::string>& warnings = {}) const;
    const syndict::ConceptEntry* resolve(std::string_view id) const;
    void persist() const;

    std::filesystem::path path_;
    embedding::EmbeddingModel model_;
    syndict::ContextIndex contexts_;
    syndict::SuggestOptions opts_;
    std::optional<io::Provenance> prov_;
    syndict::SynonymDictionary dict_;
    mutable std::shared_mutex mutex_;
};

// Loads dictionary.json, model.bin and phrased.jsonl from the work directory.
std::unique_ptr<ReviewService> open_review_service(const pipeline::PipelineConfig& cfg);

std::string session_id(const syndict::ConceptEntry& c);

Response error_response(int status, std::string_view code, std::string_view message);

// HTTP front end. start() binds (port 0 picks a free port) and serves on a
// background thread; stop() is safe to call from any thread.
class HttpServer {
public:
    explicit HttpServer(ReviewService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    int start(const std::string& host, int port);
    void wait();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace clinistruct::service
