#include "clinistruct/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <map>
#include <set>

#include <fmt/format.h>

#include "clinistruct/common.hpp"
#include "clinistruct/ingest.hpp"
#include "clinistruct/syndict.hpp"
#include "clinistruct/textnorm.hpp"
#include "parallel.hpp"

namespace clinistruct::pipeline {

using nlohmann::json;

namespace {

constexpr std::string_view kRulesText = R"([sbr_grade]
concept = grade
kind = category
lexicon = 1:I, 2:II, 3:III

[er]
concept = re
kind = category
lexicon = positif:pos, negatif:neg
positive = pos

[pr]
concept = rp
kind = category
lexicon = positif:pos, negatif:neg
positive = pos

[her2]
concept = her2
kind = category
lexicon = positif:pos, negatif:neg
positive = pos

[ki67]
concept = ki67
kind = numeric
unit = %
max = 100

[nodes]
concept = ganglions
kind = numeric
unit = count
max = 100

[tumor_size]
concept = tumeur
kind = numeric
unit = mm
units = mm:1, cm:10
max = 500

[cancer_type]
concept = carcinome
kind = category
lexicon = in situ:in_situ, infiltrant:invasive
positive = invasive

[cancer_subtype]
concept = carcinome
kind = category
lexicon = canalaire:ductal, lobulaire:lobular, mucineux:mucinous, medullaire:medullary

[metastasis]
concept = metastase
kind = presence
cues = pas de, absence de
positive = yes
)";

const std::vector<std::pair<std::string, std::string>> kSeedConcepts = {
    {"carcinome", "carcinome"},     {"chimiotherapie", "chimiotherapie"}, {"ganglions", "ganglions"},
    {"grade", "grade"},             {"her2", "her2"},                     {"ki67", "ki67"},
    {"mastectomie", "mastectomie"}, {"metastase", "metastase"},           {"radiotherapie", "radiotherapie"},
    {"re", "re"},                   {"rp", "rp"},                         {"sterilet", "sterilet"},
    {"tumeur", "tumeur"},
};

// Reads keys from one config object and rejects the ones it never asked for.
class Reader {
public:
    Reader(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw Error(ErrorCode::Parse, fmt::format("config: '{}' must be an object", name_));
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Parse, fmt::format("config: {}.{}: {}", name_, key, e.what()));
        }
    }

    void path(const char* key, fs::path& out) {
        std::string s = out.string();
        get(key, s);
        out = s;
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.contains(k))
                throw Error(ErrorCode::Parse, fmt::format("config: unknown key '{}{}'", name_.empty() ? "" : name_ + ".", k));
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

struct PathKey {
    const char* key;
    fs::path Paths::*member;
};

const std::vector<PathKey>& path_keys() {
    static const std::vector<PathKey> keys = {
        {"corpus", &Paths::corpus},       {"work_dir", &Paths::work_dir},     {"headings", &Paths::headings},
        {"dates", &Paths::dates},         {"laterality", &Paths::laterality}, {"rules", &Paths::rules},
        {"dictionary", &Paths::dictionary}, {"gold", &Paths::gold},           {"manifest", &Paths::manifest},
    };
    return keys;
}

std::string tsv_line(std::initializer_list<std::string_view> fields) {
    std::string out;
    for (auto f : fields) {
        if (!out.empty()) out += '\t';
        out += f;
    }
    return out;
}

std::string full(double v) { return fmt::format("{:.17g}", v); }

json raw_to_json(const ingest::RawDocument& d) {
    json sections = json::array();
    for (const auto& s : d.sections) sections.push_back({{"heading", s.heading}, {"body", s.body}});
    return {{"doc_id", d.doc_id},
            {"patient_id", d.patient_id},
            {"source_type", to_string(d.source_type)},
            {"authored_date", d.authored_date ? json(d.authored_date->iso()) : json(nullptr)},
            {"sections", sections}};
}

ingest::RawDocument raw_from_json(const json& j) {
    ingest::RawDocument d;
    try {
        d.doc_id = j.at("doc_id").get<std::string>();
        d.patient_id = j.at("patient_id").get<std::string>();
        d.source_type = parse_source_type(j.at("source_type").get<std::string>());
        if (!j.at("authored_date").is_null()) d.authored_date = Date::parse_iso(j["authored_date"].get<std::string>());
        for (const auto& s : j.at("sections"))
            d.sections.push_back({s.at("heading").get<std::string>(), s.at("body").get<std::string>()});
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, fmt::format("malformed raw document: {}", e.what()));
    }
    return d;
}

std::size_t token_total(const lexicon::Corpus& corpus) {
    std::size_t n = 0;
    for (const auto& d : corpus) n += d.tokens.size();
    return n;
}

std::map<std::string, std::set<std::string>> planted_variants(const fs::path& manifest) {
    std::map<std::string, std::set<std::string>> out;
    for (const auto& m : io::read_jsonl(manifest))
        if (m.value("kind", "") == "synonym")
            out[m.at("concept").get<std::string>()].insert(m.at("variant").get<std::string>());
    return out;
}

double parsing_ratio(const lexicon::Corpus& corpus, const std::string& concept_id, const syndict::SynonymDictionary& dict) {
    if (corpus.empty()) return 0.0;
    auto docs = extract::search_records(corpus, concept_id, dict);
    return 100.0 * static_cast<double>(docs.size()) / static_cast<double>(corpus.size());
}

std::vector<std::string> indicator_names(std::span<const extract::ExtractionRule> rules) {
    std::vector<std::string> out;
    for (const auto& r : rules) out.push_back(r.indicator);
    return out;
}

std::map<std::string, double> extraction_rates(const lexicon::Corpus& canonical, std::span<const extract::ExtractionRule> rules,
                                               unsigned threads) {
    auto merged = extract::merge_corpus(extract::extract_corpus(canonical, rules, threads));
    std::map<std::string, double> out;
    for (const auto& r : rules) {
        metrics::Column col;
        for (const auto& rec : merged) {
            auto it = rec.fields.find(r.indicator);
            col.push_back(it != rec.fields.end() && it->second ? std::optional<std::string>(it->second->value) : std::nullopt);
        }
        out[r.indicator] = col.empty() ? 0.0 : metrics::extraction_rate(col);
    }
    return out;
}

lexicon::Corpus canonicalized(lexicon::Corpus corpus, const syndict::SynonymDictionary& dict, unsigned threads) {
    syndict::Canonicalizer canon(dict);
    detail::parallel_chunks(corpus.size(), threads, [&](std::size_t b, std::size_t e, unsigned) {
        for (std::size_t i = b; i < e; ++i) canon.rewrite(corpus[i]);
    });
    return corpus;
}

const io::Row kAblationHeader = {"kind", "name", "augmented", "seed_only"};

}  // namespace

lexicon::Corpus read_corpus(const fs::path& p) {
    lexicon::Corpus out;
    for (const auto& j : io::read_jsonl(p)) out.push_back(textnorm::normalized_from_json(j));
    return out;
}

void write_corpus(const lexicon::Corpus& corpus, const fs::path& p, const io::Provenance& prov) {
    io::AtomicFile f(p);
    f.stream() << prov.json_header().dump() << '\n';
    for (const auto& d : corpus) f.stream() << textnorm::to_json(d).dump() << '\n';
    f.commit();
}

std::string_view default_rules_text() { return kRulesText; }

json default_dictionary_json() {
    syndict::SynonymDictionary d;
    for (const auto& [id, canonical] : kSeedConcepts) d.add_concept(id, canonical);
    return d.to_json();
}

std::vector<metrics::IndicatorSpec> indicator_specs(std::span<const extract::ExtractionRule> rules) {
    std::vector<metrics::IndicatorSpec> out;
    for (const auto& r : rules) {
        metrics::IndicatorSpec s;
        s.name = r.indicator;
        if (r.kind == extract::ValueKind::Numeric) {
            s.kind = metrics::IndicatorKind::Numeric;
            s.tolerance = r.tolerance;
        } else {
            s.labels = r.labels();
            if (!r.positive_label.empty()) s.positive_label = r.positive_label;
            s.kappa = !s.positive_label && s.labels.size() > 2;
        }
        out.push_back(std::move(s));
    }
    return out;
}

// ---- config ----

json PipelineConfig::to_json() const {
    json paths_j = {{"corpus_format", paths.corpus_format}};
    for (const auto& k : path_keys()) paths_j[k.key] = (paths.*k.member).string();
    return {
        {"paths", paths_j},
        {"threads", threads},
        {"use_augmented_dictionary", use_augmented_dictionary},
        {"stages", {{"typos", correct_typos}, {"phrases", detect_phrases}}},
        {"typos",
         {{"rare_max", typos.rare_max},
          {"frequent_min", typos.frequent_min},
          {"min_length", typos.min_length},
          {"ratio_threshold", typos.ratio_threshold},
          {"iterate_to_fixpoint", typos.iterate_to_fixpoint}}},
        {"phrases",
         {{"delta", phrases.delta},
          {"threshold_pass1", phrases.threshold_pass1},
          {"threshold_pass2", phrases.threshold_pass2},
          {"scale_by_total", phrases.scale_by_total},
          {"passes", phrases.passes},
          {"max_words", phrases.max_words}}},
        {"embedding",
         {{"window", embedding.window},
          {"dim", embedding.dim},
          {"epochs", embedding.epochs},
          {"learning_rate", embedding.learning_rate},
          {"mode", std::string(embedding::to_string(embedding.mode))},
          {"negatives", embedding.negatives},
          {"seed", embedding.seed},
          {"min_count", embedding.min_count}}},
        {"review",
         {{"k", review.k},
          {"snippets", review.snippets},
          {"max_iterations", review.max_iterations},
          {"oracle_manifest", review.oracle_manifest.string()}}},
        {"synth", synth.to_json()},
        {"evaluate", {{"ablation", evaluate.ablation}}},
    };
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig c;
    Reader top(j, "");
    if (const auto* p = top.child("paths")) {
        Reader r(*p, "paths");
        r.get("corpus_format", c.paths.corpus_format);
        for (const auto& k : path_keys()) r.path(k.key, c.paths.*k.member);
        r.finish();
    }
    top.get("threads", c.threads);
    top.get("use_augmented_dictionary", c.use_augmented_dictionary);
    if (const auto* p = top.child("stages")) {
        Reader r(*p, "stages");
        r.get("typos", c.correct_typos);
        r.get("phrases", c.detect_phrases);
        r.finish();
    }
    if (const auto* p = top.child("typos")) {
        Reader r(*p, "typos");
        r.get("rare_max", c.typos.rare_max);
        r.get("frequent_min", c.typos.frequent_min);
        r.get("min_length", c.typos.min_length);
        r.get("ratio_threshold", c.typos.ratio_threshold);
        r.get("iterate_to_fixpoint", c.typos.iterate_to_fixpoint);
        r.finish();
    }
    if (const auto* p = top.child("phrases")) {
        Reader r(*p, "phrases");
        r.get("delta", c.phrases.delta);
        r.get("threshold_pass1", c.phrases.threshold_pass1);
        r.get("threshold_pass2", c.phrases.threshold_pass2);
        r.get("scale_by_total", c.phrases.scale_by_total);
        r.get("passes", c.phrases.passes);
        r.get("max_words", c.phrases.max_words);
        r.finish();
    }
    if (const auto* p = top.child("embedding")) {
        Reader r(*p, "embedding");
        r.get("window", c.embedding.window);
        r.get("dim", c.embedding.dim);
        r.get("epochs", c.embedding.epochs);
        r.get("learning_rate", c.embedding.learning_rate);
        std::string mode(embedding::to_string(c.embedding.mode));
        r.get("mode", mode);
        c.embedding.mode = embedding::parse_train_mode(mode);
        r.get("negatives", c.embedding.negatives);
        r.get("seed", c.embedding.seed);
        r.get("min_count", c.embedding.min_count);
        r.finish();
    }
    if (const auto* p = top.child("review")) {
        Reader r(*p, "review");
        r.get("k", c.review.k);
        r.get("snippets", c.review.snippets);
        r.get("max_iterations", c.review.max_iterations);
        r.path("oracle_manifest", c.review.oracle_manifest);
        r.finish();
    }
    if (const auto* p = top.child("synth")) c.synth = synthgen::SynthConfig::from_json(*p);
    if (const auto* p = top.child("evaluate")) {
        Reader r(*p, "evaluate");
        r.get("ablation", c.evaluate.ablation);
        r.finish();
    }
    top.finish();
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& p) {
    auto text = io::read_file(p);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, fmt::format("{}: {}", p.string(), e.what()));
    }
    return from_json(j);
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
    auto j = to_json();
    json* node = &j;
    for (const auto& part : io::split(key, '.')) {
        if (!node->is_object() || !node->contains(part))
            throw Error(ErrorCode::InvalidArgument, fmt::format("unknown config key '{}'", key));
        node = &(*node)[part];
    }
    if (node->is_string()) {
        *node = std::string(value);
    } else {
        try {
            *node = json::parse(value);
        } catch (const json::exception&) {
            *node = std::string(value);
        }
    }
    *this = from_json(j);
}

void PipelineConfig::apply_env() {
    auto env = [](std::string name) -> std::optional<std::string> {
        for (auto& ch : name) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        const char* v = std::getenv(("CLINISTRUCT_" + name).c_str());
        if (!v || !*v) return std::nullopt;
        return std::string(v);
    };
    for (const auto& k : path_keys())
        if (auto v = env(k.key)) paths.*k.member = *v;
    if (auto v = env("oracle_manifest")) review.oracle_manifest = *v;
}

void PipelineConfig::validate() const {
    ingest::parse_corpus_format(paths.corpus_format);
    if (paths.work_dir.empty()) throw Error(ErrorCode::InvalidArgument, "config: paths.work_dir is empty");
    if (threads < 1) throw Error(ErrorCode::InvalidArgument, "config: threads must be >= 1");
    typos.validate();
    phrases.validate();
    embedding.validate();
    if (review.k < 1) throw Error(ErrorCode::InvalidArgument, "config: review.k must be >= 1");
    if (review.max_iterations < 1) throw Error(ErrorCode::InvalidArgument, "config: review.max_iterations must be >= 1");
    synth.validate();
}

std::string PipelineConfig::hash() const {
    auto j = to_json();
    j.erase("paths");
    j.erase("threads");
    j["review"].erase("oracle_manifest");
    return hex64(fnv1a64(j.dump()));
}

io::Provenance PipelineConfig::provenance() const { return {std::string(kVersion), hash()}; }

// ---- stages ----

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"ingest",  "normalize",    "lexstats", "typos",
                                                   "phrases", "train",        "suggest",  "canonicalize",
                                                   "extract", "merge",        "evaluate"};
    return names;
}

bool is_stage(std::string_view name) {
    const auto& n = stage_names();
    return std::find(n.begin(), n.end(), name) != n.end();
}

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    prov_ = cfg_.provenance();
}

fs::path Pipeline::artifact(std::string_view name) const { return cfg_.paths.work_dir / std::string(name); }

fs::path Pipeline::require(const fs::path& p) const {
    if (!fs::exists(p))
        throw Error(ErrorCode::NotFound, fmt::format("stage '{}': missing input '{}'", current_, p.string()));
    return p;
}

std::vector<extract::ExtractionRule> Pipeline::rules() const {
    if (cfg_.paths.rules.empty()) return extract::parse_rules(default_rules_text());
    return extract::load_rules(require(cfg_.paths.rules));
}

StageResult Pipeline::run(std::string_view stage) {
    current_ = std::string(stage);
    try {
        if (stage == "ingest") return ingest();
        if (stage == "normalize") return normalize();
        if (stage == "lexstats") return lexstats();
        if (stage == "typos") return typos();
        if (stage == "phrases") return phrases();
        if (stage == "train") return train();
        if (stage == "suggest") return suggest();
        if (stage == "canonicalize") return canonicalize();
        if (stage == "extract") return extract();
        if (stage == "merge") return merge();
        if (stage == "evaluate") return evaluate();
        if (stage == "synth") return synth();
    } catch (const Error& e) {
        std::string msg = e.what();
        if (!msg.starts_with("stage '")) msg = fmt::format("stage '{}': {}", stage, msg);
        throw Error(e.code(), msg);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::Io, fmt::format("stage '{}': {}", stage, e.what()));
    }
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown stage '{}'", stage));
}

std::vector<StageResult> Pipeline::run_all() {
    std::vector<StageResult> out;
    for (const auto& s : stage_names()) out.push_back(run(s));
    return out;
}

StageResult Pipeline::synth() {
    current_ = "synth";
    auto out = synthgen::generate_corpus(cfg_.synth);
    synthgen::write_output(out, {cfg_.paths.corpus, cfg_.paths.gold, cfg_.paths.manifest}, &prov_);
    return {"synth", fmt::format("synth: {} documents, {} patients, {} manifest entries", out.corpus.size(),
                                 out.gold.rows.size(), out.manifest.size()),
            {}};
}

StageResult Pipeline::ingest() {
    auto headings = cfg_.paths.headings.empty() ? ingest::HeadingRules{} : ingest::HeadingRules::load(require(cfg_.paths.headings));
    auto docs = ingest::load_corpus(require(cfg_.paths.corpus), ingest::parse_corpus_format(cfg_.paths.corpus_format), headings);
    std::set<std::string> patients;
    io::AtomicFile f(artifact("raw.jsonl"));
    f.stream() << prov_.json_header().dump() << '\n';
    for (const auto& d : docs) {
        patients.insert(d.patient_id);
        f.stream() << raw_to_json(d).dump() << '\n';
    }
    f.commit();
    return {"ingest", fmt::format("ingest: {} documents, {} patients", docs.size(), patients.size()), {}};
}

StageResult Pipeline::normalize() {
    std::vector<ingest::RawDocument> raw;
    for (const auto& j : io::read_jsonl(require(artifact("raw.jsonl")))) raw.push_back(raw_from_json(j));
    textnorm::NormalizeOptions opts;
    if (!cfg_.paths.dates.empty()) opts.dates = textnorm::DatePatterns::load(require(cfg_.paths.dates));
    if (!cfg_.paths.laterality.empty()) opts.cues = textnorm::LateralityCues::load(require(cfg_.paths.laterality));

    lexicon::Corpus corpus(raw.size());
    std::vector<std::vector<std::string>> warnings(raw.size());
    detail::parallel_chunks(raw.size(), cfg_.threads, [&](std::size_t b, std::size_t e, unsigned) {
        for (std::size_t i = b; i < e; ++i) corpus[i] = textnorm::normalize(raw[i], opts, &warnings[i]);
    });
    StageResult r{"normalize", {}, {}};
    for (std::size_t i = 0; i < raw.size(); ++i)
        for (const auto& w : warnings[i]) r.warnings.push_back(fmt::format("{}: {}", raw[i].doc_id, w));
    write_corpus(corpus, artifact("normalized.jsonl"), prov_);

    std::map<std::string, std::vector<textnorm::NormalizedDocument>> by_patient;
    std::size_t mentions = 0;
    for (const auto& d : corpus) {
        by_patient[d.patient_id].push_back(d);
        mentions += d.date_mentions.size();
    }
    io::AtomicFile t(artifact("timeline.tsv"));
    t.stream() << prov_.comment_line() << '\n' << tsv_line({"patient_id", "date", "doc_id", "token_index"}) << '\n';
    for (const auto& [pid, docs] : by_patient)
        for (const auto& e : textnorm::build_timeline(docs))
            t.stream() << tsv_line({pid, e.date.iso(), e.doc_id, std::to_string(e.token_index)}) << '\n';
    t.commit();
    r.summary = fmt::format("normalize: {} documents, {} tokens, {} date mentions, {} warnings", corpus.size(),
                            token_total(corpus), mentions, r.warnings.size());
    return r;
}

StageResult Pipeline::lexstats() {
    auto corpus = read_corpus(require(artifact("normalized.jsonl")));
    auto stats = lexicon::compute_stats(corpus, cfg_.threads);
    std::vector<std::pair<std::string, std::uint64_t>> rows(stats.unigrams.begin(), stats.unigrams.end());
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    io::AtomicFile f(artifact("lexstats.tsv"));
    f.stream() << prov_.comment_line() << '\n' << tsv_line({"token", "count"}) << '\n';
    for (const auto& [w, c] : rows) f.stream() << tsv_line({w, std::to_string(c)}) << '\n';
    f.commit();
    return {"lexstats",
            fmt::format("lexstats: {} tokens, {} types, {} bigram types", stats.total_tokens, stats.unigrams.size(),
                        stats.bigrams.size()),
            {}};
}

StageResult Pipeline::typos() {
    auto corpus = read_corpus(require(artifact("normalized.jsonl")));
    lexicon::TypoResult result;
    if (cfg_.correct_typos) {
        auto stats = lexicon::compute_stats(corpus, cfg_.threads);
        result = lexicon::correct_typos(std::move(corpus), stats, cfg_.typos, cfg_.threads);
    } else {
        result.corpus = std::move(corpus);
    }
    write_corpus(result.corpus, artifact("corrected.jsonl"), prov_);
    io::AtomicFile f(artifact("substitutions.tsv"));
    f.stream() << prov_.comment_line() << '\n' << tsv_line({"rare_word", "replacement", "distance", "ratio"}) << '\n';
    for (const auto& s : result.substitutions)
        f.stream() << tsv_line({s.rare_word, s.replacement, std::to_string(s.distance), full(s.ratio)}) << '\n';
    f.commit();
    return {"typos",
            cfg_.correct_typos ? fmt::format("typos: {} substitutions", result.substitutions.size())
                               : std::string("typos: disabled, corpus copied"),
            {}};
}

StageResult Pipeline::phrases() {
    auto corpus = read_corpus(require(artifact("corrected.jsonl")));
    lexicon::PhraseResult result;
    if (cfg_.detect_phrases) {
        auto stats = lexicon::compute_stats(corpus, cfg_.threads);
        result = lexicon::detect_phrases(std::move(corpus), stats, cfg_.phrases, cfg_.threads);
    } else {
        result.corpus = std::move(corpus);
    }
    write_corpus(result.corpus, artifact("phrased.jsonl"), prov_);
    io::AtomicFile f(artifact("phrases.tsv"));
    f.stream() << prov_.comment_line() << '\n' << tsv_line({"phrase", "pass", "score"}) << '\n';
    for (const auto& p : result.phrases) f.stream() << tsv_line({p.token, std::to_string(p.pass), full(p.score)}) << '\n';
    f.commit();
    return {"phrases",
            cfg_.detect_phrases ? fmt::format("phrases: {} phrases merged", result.phrases.size())
                                : std::string("phrases: disabled, corpus copied"),
            {}};
}

StageResult Pipeline::train() {
    auto corpus = read_corpus(require(artifact("phrased.jsonl")));
    std::vector<std::vector<std::string>> streams;
    streams.reserve(corpus.size());
    for (auto& d : corpus) streams.push_back(std::move(d.tokens));
    auto tc = cfg_.embedding;
    tc.threads = cfg_.threads;
    embedding::TrainReport report;
    auto model = embedding::train_skip_gram(streams, tc, &report);
    embedding::save_binary(model, artifact("model.bin"), prov_.comment_line());
    io::AtomicFile f(artifact("train_log.tsv"));
    f.stream() << prov_.comment_line() << '\n' << tsv_line({"epoch", "loss"}) << '\n';
    for (std::size_t e = 0; e < report.epoch_loss.size(); ++e)
        f.stream() << tsv_line({std::to_string(e + 1), full(report.epoch_loss[e])}) << '\n';
    f.commit();
    return {"train",
            fmt::format("train: vocabulary {}, dim {}, {} epochs, final loss {:.4f}", model.vocab_size(), model.dim(),
                        report.epoch_loss.size(), report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back()),
            {}};
}

StageResult Pipeline::suggest() {
    auto model = embedding::load_binary(require(artifact("model.bin")));
    auto corpus = read_corpus(require(artifact("phrased.jsonl")));
    auto dict = cfg_.paths.dictionary.empty() ? syndict::SynonymDictionary::from_json(default_dictionary_json())
                                              : syndict::SynonymDictionary::load(require(cfg_.paths.dictionary));
    syndict::ContextIndex contexts(corpus);
    syndict::SuggestOptions opts{cfg_.review.k, cfg_.review.snippets};
    StageResult r{"suggest", {}, {}};
    review_.clear();

    std::vector<std::string> ids;
    for (const auto& [id, c] : dict.concepts()) ids.push_back(id);

    if (cfg_.review.oracle_manifest.empty()) {
        // No reviewer: record one round of suggestions for offline reading and
        // keep the dictionary at its seeds.
        auto scratch = dict;
        io::AtomicFile f(artifact("suggestions.tsv"));
        f.stream() << prov_.comment_line() << '\n' << tsv_line({"concept_id", "token", "similarity", "query"}) << '\n';
        std::size_t total = 0;
        for (const auto& id : ids) {
            auto& c = scratch.at(id);
            auto& session = syndict::seed_concept(scratch, id, c.canonical, c.seeds);
            for (const auto& cand : syndict::suggest(session, model, scratch, opts, nullptr, &r.warnings)) {
                f.stream() << tsv_line({id, cand.token, full(cand.similarity), cand.query}) << '\n';
                ++total;
            }
        }
        f.commit();
        dict.save(artifact("dictionary.json"), prov_.json_header()["_header"]);
        r.summary = fmt::format("suggest: {} concepts, {} candidates written for review, no reviewer configured", ids.size(), total);
        return r;
    }

    auto planted = planted_variants(require(cfg_.review.oracle_manifest));
    io::AtomicFile log(artifact("review.tsv"));
    log.stream() << prov_.comment_line() << '\n'
                 << tsv_line({"concept_id", "iteration", "proposed", "accepted", "rejected"}) << '\n';
    std::size_t accepted_total = 0, fixpoints = 0;
    for (const auto& id : ids) {
        auto seeds = dict.at(id).seeds;
        auto canonical = dict.at(id).canonical;
        auto& session = syndict::seed_concept(dict, id, canonical, seeds);
        syndict::suggest(session, model, dict, opts, &contexts, &r.warnings);
        const auto& truth = planted[id];
        while (!session.fixpoint && session.iteration < cfg_.review.max_iterations) {
            syndict::TokenSet acc, rej;
            for (const auto& cand : dict.at(id).pending) (truth.contains(cand.token) ? acc : rej).insert(cand.token);
            syndict::apply_decisions(session, dict, acc, rej);
            const auto& round = session.history.back();
            log.stream() << tsv_line({id, std::to_string(round.iteration), std::to_string(round.proposed.size()),
                                      std::to_string(round.accepted.size()), std::to_string(round.rejected.size())})
                         << '\n';
            syndict::suggest(session, model, dict, opts, &contexts, &r.warnings);
        }
        ReviewOutcome o{id, session.iteration, session.fixpoint, dict.at(id).accepted.size() - 1};
        if (o.fixpoint) ++fixpoints;
        accepted_total += o.accepted;
        syndict::close_session(session, dict);
        review_.push_back(o);
    }
    log.commit();
    dict.validate();
    dict.save(artifact("dictionary.json"), prov_.json_header()["_header"]);
    r.summary = fmt::format("suggest: {} concepts reviewed, {} reached fixpoint, {} surface forms accepted", ids.size(),
                            fixpoints, accepted_total);
    return r;
}

StageResult Pipeline::canonicalize() {
    auto corpus = read_corpus(require(artifact("phrased.jsonl")));
    auto dict = syndict::SynonymDictionary::load(require(artifact("dictionary.json")));
    auto use = cfg_.use_augmented_dictionary ? dict : dict.seed_only();
    auto out = canonicalized(std::move(corpus), use, cfg_.threads);
    write_corpus(out, artifact("canonical.jsonl"), prov_);
    std::size_t forms = 0;
    for (const auto& [id, c] : use.concepts()) forms += c.accepted.size();
    return {"canonicalize",
            fmt::format("canonicalize: {} documents, {} concepts, {} surface forms ({} dictionary)", out.size(),
                        use.concepts().size(), forms, cfg_.use_augmented_dictionary ? "augmented" : "seed-only"),
            {}};
}

StageResult Pipeline::extract() {
    auto corpus = read_corpus(require(artifact("canonical.jsonl")));
    auto rs = rules();
    auto dict_path = artifact("dictionary.json");
    if (fs::exists(dict_path)) extract::resolve_concepts(rs, syndict::SynonymDictionary::load(dict_path));
    auto records = extract::extract_corpus(corpus, rs, cfg_.threads);
    extract::write_records_csv(records, indicator_names(rs), artifact("records_by_source.csv"), &prov_);
    StageResult r{"extract", {}, {}};
    std::size_t filled = 0;
    for (const auto& rec : records) {
        filled += rec.filled();
        for (const auto& e : rec.errors) r.warnings.push_back(fmt::format("{}: {}: {}", e.doc_id, e.indicator, e.message));
    }
    r.summary = fmt::format("extract: {} source records, {} fields filled, {} field errors", records.size(), filled,
                            r.warnings.size());
    return r;
}

StageResult Pipeline::merge() {
    std::vector<std::string> indicators;
    auto per_source = extract::read_records_csv(require(artifact("records_by_source.csv")), &indicators);
    auto merged = extract::merge_corpus(per_source);
    extract::write_records_csv(merged, indicators, artifact("records.csv"), &prov_);
    std::size_t filled = 0;
    for (const auto& rec : merged) filled += rec.filled();
    return {"merge", fmt::format("merge: {} patients, {} fields filled", merged.size(), filled), {}};
}

StageResult Pipeline::evaluate() {
    auto extracted = io::read_csv(require(artifact("records.csv")));
    auto gold = io::read_csv(require(cfg_.paths.gold));
    auto rs = rules();
    StageResult r{"evaluate", {}, {}};
    std::vector<metrics::IndicatorSpec> specs;
    for (auto& s : indicator_specs(rs)) {
        if (gold.column(s.name) < 0) {
            r.warnings.push_back(fmt::format("indicator '{}' has no gold column, skipped", s.name));
            continue;
        }
        specs.push_back(std::move(s));
    }
    auto report = metrics::evaluate(gold, extracted, specs);
    metrics::write_report_csv(report, artifact("report.csv"), &prov_);
    auto text = metrics::format_report(report);

    std::vector<AblationRow> ablation;
    if (cfg_.evaluate.ablation) {
        auto corpus = read_corpus(require(artifact("phrased.jsonl")));
        auto dict = syndict::SynonymDictionary::load(require(artifact("dictionary.json")));
        auto seed = dict.seed_only();
        auto aug_corpus = canonicalized(corpus, dict, cfg_.threads);
        auto seed_corpus = canonicalized(corpus, seed, cfg_.threads);
        for (const auto& [id, c] : dict.concepts())
            ablation.push_back({"concept", id, parsing_ratio(aug_corpus, id, dict), parsing_ratio(seed_corpus, id, seed)});
        auto aug_rules = rs, seed_rules = rs;
        extract::resolve_concepts(aug_rules, dict);
        extract::resolve_concepts(seed_rules, seed);
        auto er_aug = extraction_rates(aug_corpus, aug_rules, cfg_.threads);
        auto er_seed = extraction_rates(seed_corpus, seed_rules, cfg_.threads);
        for (const auto& rule : rs)
            ablation.push_back({"indicator", rule.indicator, er_aug[rule.indicator], er_seed[rule.indicator]});
        io::AtomicFile f(artifact("ablation.csv"));
        f.stream() << prov_.comment_line() << '\n' << io::csv_join(kAblationHeader) << '\n';
        for (const auto& a : ablation)
            f.stream() << io::csv_join({a.kind, a.name, full(a.augmented), full(a.seed_only)}) << '\n';
        f.commit();
        text += '\n' + format_ablation(ablation);
    }

    io::AtomicFile t(artifact("report.txt"));
    t.stream() << prov_.comment_line() << '\n' << text;
    t.commit();

    double worst = 100.0;
    for (const auto& row : report.rows)
        if (row.agreement) worst = std::min(worst, *row.agreement);
    r.summary = fmt::format("evaluate: {} indicators, {} patients, lowest agreement {:.1f}%", report.rows.size(),
                            gold.rows.size(), metrics::round_half_up(worst, 1));
    return r;
}

std::vector<AblationRow> read_ablation_csv(const fs::path& p) {
    auto t = io::read_csv(p);
    if (t.header != kAblationHeader) throw Error(ErrorCode::Parse, fmt::format("{}: not an ablation table", p.string()));
    std::vector<AblationRow> out;
    for (const auto& row : t.rows) out.push_back({row[0], row[1], std::stod(row[2]), std::stod(row[3])});
    return out;
}

std::string format_ablation(std::span<const AblationRow> rows) {
    std::size_t w = 9;
    for (const auto& r : rows) w = std::max(w, r.name.size());
    std::string out;
    for (const char* kind : {"concept", "indicator"}) {
        bool concept_rows = std::string_view(kind) == "concept";
        out += fmt::format("{:<{}}  {:>9}  {:>9}\n", concept_rows ? "concept" : "indicator", w,
                           concept_rows ? "parsed+" : "ER+", concept_rows ? "parsed" : "ER");
        for (const auto& r : rows)
            if (r.kind == kind)
                out += fmt::format("{:<{}}  {:>9.1f}  {:>9.1f}\n", r.name, w, metrics::round_half_up(r.augmented, 1),
                                   metrics::round_half_up(r.seed_only, 1));
    }
    out += "(+ with suggested synonyms; plain columns use the seed dictionary only)\n";
    return out;
}

}  // namespace clinistruct::pipeline
