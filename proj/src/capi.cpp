#include "clinistruct/clinistruct.h"

#include <cstdlib>
#include <cstring>
#include <map>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "clinistruct/common.hpp"
#include "clinistruct/embedding.hpp"
#include "clinistruct/lexicon.hpp"
#include "clinistruct/metrics.hpp"
#include "clinistruct/pipeline.hpp"
#include "clinistruct/service.hpp"

using namespace clinistruct;
using nlohmann::json;

struct cs_config {
    pipeline::PipelineConfig cfg;
};

struct cs_pipeline {
    pipeline::Pipeline p;
    std::vector<std::string> warnings;
};

struct cs_model {
    embedding::EmbeddingModel m;
};

struct cs_service {
    std::unique_ptr<service::ReviewService> svc;
    std::unique_ptr<service::HttpServer> http;
};

namespace {

thread_local std::string last_error;

cs_status status_of(ErrorCode c) {
    switch (c) {
        case ErrorCode::InvalidArgument: return CS_ERR_INVALID_ARGUMENT;
        case ErrorCode::Io: return CS_ERR_IO;
        case ErrorCode::Parse: return CS_ERR_PARSE;
        case ErrorCode::NotFound: return CS_ERR_NOT_FOUND;
        case ErrorCode::Conflict: return CS_ERR_CONFLICT;
        case ErrorCode::State: return CS_ERR_STATE;
    }
    return CS_ERR_INTERNAL;
}

template <typename Fn>
cs_status guard(Fn&& fn) {
    try {
        fn();
        last_error.clear();
        return CS_OK;
    } catch (const Error& e) {
        last_error = e.what();
        return status_of(e.code());
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return CS_ERR_INTERNAL;
    } catch (const std::exception& e) {
        last_error = e.what();
        return CS_ERR_INTERNAL;
    } catch (...) {
        last_error = "unknown error";
        return CS_ERR_INTERNAL;
    }
}

char* dup(const std::string& s) {
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void need(const void* p, const char* what) {
    if (!p) throw Error(ErrorCode::InvalidArgument, std::string(what) + " is null");
}

std::string url_decode(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '+') {
            out += ' ';
        } else if (s[i] == '%' && i + 2 < s.size()) {
            out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
            i += 2;
        } else {
            out += s[i];
        }
    }
    return out;
}

}  // namespace

extern "C" {

void cs_string_free(char* s) { std::free(s); }

const char* cs_version(void) { return kVersion.data(); }

const char* cs_status_name(cs_status status) {
    switch (status) {
        case CS_OK: return "ok";
        case CS_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case CS_ERR_IO: return "io_error";
        case CS_ERR_PARSE: return "parse_error";
        case CS_ERR_NOT_FOUND: return "not_found";
        case CS_ERR_CONFLICT: return "conflict";
        case CS_ERR_STATE: return "state";
        case CS_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* cs_last_error(void) { return last_error.c_str(); }

cs_status cs_config_new(cs_config** out) {
    return guard([&] {
        need(out, "out");
        *out = new cs_config{};
    });
}

cs_status cs_config_load(const char* path, cs_config** out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = new cs_config{pipeline::PipelineConfig::load(path)};
    });
}

cs_status cs_config_set(cs_config* cfg, const char* key, const char* value) {
    return guard([&] {
        need(cfg, "config");
        need(key, "key");
        need(value, "value");
        cfg->cfg.set(key, value);
    });
}

cs_status cs_config_apply_env(cs_config* cfg) {
    return guard([&] {
        need(cfg, "config");
        cfg->cfg.apply_env();
    });
}

cs_status cs_config_hash(const cs_config* cfg, char** out) {
    return guard([&] {
        need(cfg, "config");
        need(out, "out");
        *out = dup(cfg->cfg.hash());
    });
}

cs_status cs_config_to_json(const cs_config* cfg, char** out) {
    return guard([&] {
        need(cfg, "config");
        need(out, "out");
        *out = dup(cfg->cfg.to_json().dump(2));
    });
}

void cs_config_free(cs_config* cfg) { delete cfg; }

size_t cs_stage_count(void) { return pipeline::stage_names().size(); }

const char* cs_stage_name(size_t i) {
    const auto& n = pipeline::stage_names();
    return i < n.size() ? n[i].c_str() : nullptr;
}

int cs_is_stage(const char* name) { return name && pipeline::is_stage(name) ? 1 : 0; }

cs_status cs_pipeline_new(const cs_config* cfg, cs_pipeline** out) {
    return guard([&] {
        need(cfg, "config");
        need(out, "out");
        *out = new cs_pipeline{pipeline::Pipeline(cfg->cfg), {}};
    });
}

cs_status cs_pipeline_run(cs_pipeline* p, const char* stage, char** summary) {
    return guard([&] {
        need(p, "pipeline");
        need(stage, "stage");
        p->warnings.clear();
        auto r = std::string_view(stage) == "synth" ? p->p.synth() : p->p.run(stage);
        p->warnings = r.warnings;
        if (summary) *summary = dup(r.summary);
    });
}

cs_status cs_pipeline_warnings(const cs_pipeline* p, char** out) {
    return guard([&] {
        need(p, "pipeline");
        need(out, "out");
        *out = dup(json(p->warnings).dump());
    });
}

cs_status cs_pipeline_review(const cs_pipeline* p, char** out) {
    return guard([&] {
        need(p, "pipeline");
        need(out, "out");
        json list = json::array();
        for (const auto& o : p->p.review_outcomes())
            list.push_back({{"concept_id", o.concept_id},
                            {"iterations", o.iterations},
                            {"fixpoint", o.fixpoint},
                            {"accepted", o.accepted}});
        *out = dup(list.dump());
    });
}

cs_status cs_pipeline_artifact(const cs_pipeline* p, const char* name, char** out) {
    return guard([&] {
        need(p, "pipeline");
        need(name, "name");
        need(out, "out");
        *out = dup(p->p.artifact(name).string());
    });
}

void cs_pipeline_free(cs_pipeline* p) { delete p; }

cs_status cs_model_load(const char* path, cs_model** out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = new cs_model{embedding::load_binary(path)};
    });
}

size_t cs_model_vocab_size(const cs_model* m) { return m ? m->m.vocab_size() : 0; }

size_t cs_model_dim(const cs_model* m) { return m ? m->m.dim() : 0; }

cs_status cs_model_neighbors(const cs_model* m, const char* term, size_t k, char** out) {
    return guard([&] {
        need(m, "model");
        need(term, "term");
        need(out, "out");
        auto r = embedding::nearest_neighbors(m->m, term, k);
        json list = json::array();
        for (const auto& n : r.neighbors) list.push_back({{"token", n.token}, {"similarity", n.similarity}});
        *out = dup(json{{"neighbors", list}, {"warning", r.warning ? json(*r.warning) : json(nullptr)}}.dump());
    });
}

cs_status cs_model_context_probability(const cs_model* m, const char* center, const char* context, double* out) {
    return guard([&] {
        need(m, "model");
        need(center, "center");
        need(context, "context");
        need(out, "out");
        *out = embedding::context_probability(m->m, center, context);
    });
}

void cs_model_free(cs_model* m) { delete m; }

cs_status cs_service_open(const cs_config* cfg, cs_service** out) {
    return guard([&] {
        need(cfg, "config");
        need(out, "out");
        *out = new cs_service{service::open_review_service(cfg->cfg), nullptr};
    });
}

cs_status cs_service_handle(cs_service* s, const char* method, const char* target, const char* body, int* http_status,
                            char** response) {
    return guard([&] {
        need(s, "service");
        need(method, "method");
        need(target, "target");
        need(http_status, "http_status");
        need(response, "response");
        std::string_view t(target);
        std::map<std::string, std::string> query;
        auto q = t.find('?');
        if (q != std::string_view::npos) {
            for (const auto& pair : io::split(t.substr(q + 1), '&')) {
                if (pair.empty()) continue;
                auto eq = pair.find('=');
                if (eq == std::string::npos)
                    query[url_decode(pair)] = "";
                else
                    query[url_decode(std::string_view(pair).substr(0, eq))] = url_decode(std::string_view(pair).substr(eq + 1));
            }
            t = t.substr(0, q);
        }
        auto r = s->svc->handle(method, t, query, body ? body : "");
        *http_status = r.status;
        *response = dup(r.body.dump());
    });
}

cs_status cs_service_listen(cs_service* s, const char* host, int port, int* bound_port) {
    return guard([&] {
        need(s, "service");
        need(host, "host");
        if (s->http) throw Error(ErrorCode::State, "service is already listening");
        s->http = std::make_unique<service::HttpServer>(*s->svc);
        int bound = s->http->start(host, port);
        if (bound_port) *bound_port = bound;
    });
}

cs_status cs_service_wait(cs_service* s) {
    return guard([&] {
        need(s, "service");
        if (s->http) s->http->wait();
    });
}

cs_status cs_service_stop(cs_service* s) {
    return guard([&] {
        need(s, "service");
        if (s->http) s->http->stop();
    });
}

void cs_service_free(cs_service* s) {
    if (!s) return;
    if (s->http) s->http->stop();
    delete s;
}

cs_status cs_edit_distance(const char* a, const char* b, size_t* out) {
    return guard([&] {
        need(a, "a");
        need(b, "b");
        need(out, "out");
        *out = lexicon::edit_distance(a, b);
    });
}

cs_status cs_f1(double precision, double sensitivity, double* out) {
    return guard([&] {
        need(out, "out");
        auto f = metrics::f1_score(precision, sensitivity);
        if (!f) throw Error(ErrorCode::InvalidArgument, "F1 undefined when precision and sensitivity are both zero");
        *out = *f;
    });
}

cs_status cs_cohen_kappa(const uint64_t* counts, size_t n, double* out) {
    return guard([&] {
        need(counts, "counts");
        need(out, "out");
        metrics::ConfusionMatrix cm;
        for (size_t i = 0; i < n; ++i) {
            cm.labels.push_back(std::to_string(i));
            cm.counts.emplace_back(counts + i * n, counts + (i + 1) * n);
        }
        auto k = metrics::cohen_kappa(cm);
        if (!k) throw Error(ErrorCode::InvalidArgument, "kappa undefined for this matrix");
        *out = *k;
    });
}

cs_status cs_report_format(const char* report_csv, char** out) {
    return guard([&] {
        need(report_csv, "report_csv");
        need(out, "out");
        *out = dup(metrics::format_report(metrics::read_report_csv(report_csv)));
    });
}

}  // extern "C"
