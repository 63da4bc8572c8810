#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clinistruct/clinistruct.h"

namespace {

constexpr std::size_t kMaxWarnings = 20;

class Failure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void check(cs_status s) {
    if (s != CS_OK) throw Failure(cs_last_error());
}

std::string take(char* s) {
    std::string out = s ? s : "";
    cs_string_free(s);
    return out;
}

struct Config {
    cs_config* ptr = nullptr;
    ~Config() { cs_config_free(ptr); }
};

struct Pipeline {
    cs_pipeline* ptr = nullptr;
    ~Pipeline() { cs_pipeline_free(ptr); }
};

// Warnings come back as a JSON array of strings; print them one per line.
void print_warnings(cs_pipeline* p) {
    char* raw = nullptr;
    check(cs_pipeline_warnings(p, &raw));
    auto text = take(raw);
    std::vector<std::string> items;
    std::string cur;
    bool in_str = false, esc = false;
    for (char c : text) {
        if (!in_str) {
            if (c == '"') in_str = true;
            continue;
        }
        if (esc) {
            cur += c == 'n' ? '\n' : c == 't' ? '\t' : c;
            esc = false;
        } else if (c == '\\') {
            esc = true;
        } else if (c == '"') {
            items.push_back(cur);
            cur.clear();
            in_str = false;
        } else {
            cur += c;
        }
    }
    for (std::size_t i = 0; i < items.size() && i < kMaxWarnings; ++i) std::cerr << "warning: " << items[i] << '\n';
    if (items.size() > kMaxWarnings) std::cerr << "warning: " << items.size() - kMaxWarnings << " more\n";
}

void run_stage(cs_pipeline* p, const std::string& stage) {
    char* summary = nullptr;
    check(cs_pipeline_run(p, stage.c_str(), &summary));
    std::cout << take(summary) << std::endl;
    print_warnings(p);
}

void print_report(cs_pipeline* p) {
    char* path = nullptr;
    check(cs_pipeline_artifact(p, "report.txt", &path));
    std::ifstream in(take(path));
    std::string line;
    while (std::getline(in, line))
        if (!line.starts_with("#")) std::cout << line << '\n';
}

void serve(cs_config* cfg, const std::string& host, int port) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    cs_service* svc = nullptr;
    check(cs_service_open(cfg, &svc));
    int bound = 0;
    if (cs_service_listen(svc, host.c_str(), port, &bound) != CS_OK) {
        std::string msg = cs_last_error();
        cs_service_free(svc);
        throw Failure(msg);
    }
    std::cout << "serve: review service listening on http://" << host << ':' << bound << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    cs_service_stop(svc);
    cs_service_wait(svc);
    cs_service_free(svc);
    std::cout << "serve: stopped" << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"clinistruct: structured indicators from clinical free text", "clinistruct"};
    app.set_version_flag("--version", std::string("clinistruct ") + cs_version());
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    int threads = 0;
    app.add_option("-c,--config", config_path, "pipeline config file (JSON)")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "override a config value, key=value with a dotted key (repeatable)");
    app.add_option("--threads", threads, "worker threads; 1 is bitwise reproducible")->check(CLI::PositiveNumber);

    const std::vector<std::pair<std::string, std::string>> stage_help = {
        {"ingest", "load the corpus and split sections"},
        {"normalize", "fold accents, tokenize, extract dates and laterality"},
        {"lexstats", "token frequency table"},
        {"typos", "replace rare words by close frequent words"},
        {"phrases", "merge frequent word pairs and triples"},
        {"train", "train the skip-gram embedding"},
        {"suggest", "synonym suggestion and review loop"},
        {"canonicalize", "rewrite accepted synonyms to canonical tokens"},
        {"extract", "apply the extraction rules, one record per source"},
        {"merge", "merge source records per patient"},
        {"evaluate", "score records against the gold table"},
    };
    std::map<std::string, CLI::App*> stages;
    for (const auto& [name, help] : stage_help) stages[name] = app.add_subcommand(name, help);

    bool no_augmented = false;
    stages["evaluate"]->add_flag("--no-augmented-dictionary", no_augmented,
                                 "rerun canonicalize, extract and merge with the seed dictionary and report both parsing ratios");
    app.add_subcommand("synth", "write a synthetic corpus, gold table and manifest");
    auto* pipeline = app.add_subcommand("pipeline", "run every stage from ingest to evaluate");
    bool pipeline_no_augmented = false;
    pipeline->add_flag("--no-augmented-dictionary", pipeline_no_augmented, "canonicalize with the seed dictionary only");
    auto* serve_cmd = app.add_subcommand("serve", "review service over HTTP");
    std::string host = "127.0.0.1";
    int port = 8765;
    serve_cmd->add_option("--host", host, "bind address");
    serve_cmd->add_option("--port", port, "port, 0 for any free port")->check(CLI::Range(0, 65535));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    try {
        Config cfg;
        if (config_path.empty())
            check(cs_config_new(&cfg.ptr));
        else
            check(cs_config_load(config_path.c_str(), &cfg.ptr));
        check(cs_config_apply_env(cfg.ptr));
        for (const auto& o : overrides) {
            auto eq = o.find('=');
            if (eq == std::string::npos) {
                std::cerr << "error: --set expects key=value, got '" << o << "'\n";
                return 2;
            }
            check(cs_config_set(cfg.ptr, o.substr(0, eq).c_str(), o.substr(eq + 1).c_str()));
        }
        if (threads > 0) check(cs_config_set(cfg.ptr, "threads", std::to_string(threads).c_str()));

        auto* sub = app.get_subcommands().front();
        std::string name = sub->get_name();
        if (name == "serve") {
            serve(cfg.ptr, host, port);
            return 0;
        }
        if ((name == "evaluate" && no_augmented) || (name == "pipeline" && pipeline_no_augmented))
            check(cs_config_set(cfg.ptr, "use_augmented_dictionary", "false"));
        if (name == "evaluate" && no_augmented) check(cs_config_set(cfg.ptr, "evaluate.ablation", "true"));

        Pipeline p;
        check(cs_pipeline_new(cfg.ptr, &p.ptr));
        if (name == "synth") {
            run_stage(p.ptr, "synth");
        } else if (name == "pipeline") {
            for (std::size_t i = 0; i < cs_stage_count(); ++i) run_stage(p.ptr, cs_stage_name(i));
            print_report(p.ptr);
        } else if (name == "evaluate" && no_augmented) {
            for (const char* s : {"canonicalize", "extract", "merge", "evaluate"}) run_stage(p.ptr, s);
            print_report(p.ptr);
        } else {
            run_stage(p.ptr, name);
            if (name == "evaluate") print_report(p.ptr);
        }
        return 0;
    } catch (const Failure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
