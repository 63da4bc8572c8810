#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "clinistruct/embedding.hpp"
#include "clinistruct/extract.hpp"
#include "clinistruct/io.hpp"
#include "clinistruct/lexicon.hpp"
#include "clinistruct/metrics.hpp"
#include "clinistruct/synthgen.hpp"

namespace clinistruct::pipeline {

namespace fs = std::filesystem;

// Empty data paths (headings, dates, laterality, rules, dictionary) select the
// built-in defaults.
struct Paths {
    fs::path corpus = "corpus.jsonl";
    std::string corpus_format = "jsonl";
    fs::path work_dir = "work";
    fs::path headings;
    fs::path dates;
    fs::path laterality;
    fs::path rules;
    fs::path dictionary;
    fs::path gold = "gold.csv";
    fs::path manifest = "manifest.jsonl";
};

struct ReviewConfig {
    std::size_t k = 20;
    std::size_t snippets = 3;
    int max_iterations = 5;
    // Synthetic manifest used as an automatic reviewer. Empty: the suggest
    // stage records one round of pending candidates and accepts nothing.
    fs::path oracle_manifest;
};

struct EvaluateConfig {
    bool ablation = true;
};

struct PipelineConfig {
    Paths paths;
    unsigned threads = 1;
    bool use_augmented_dictionary = true;
    bool correct_typos = true;
    bool detect_phrases = true;
    lexicon::TypoConfig typos;
    lexicon::PhraseConfig phrases;
    embedding::TrainConfig embedding;
    ReviewConfig review;
    synthgen::SynthConfig synth = synthgen::SynthConfig::defaults();
    EvaluateConfig evaluate;

    nlohmann::json to_json() const;
    // Missing keys keep their defaults; unknown keys are a Parse error.
    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig load(const fs::path& p);

    // Dotted key assignment, e.g. set("embedding.dim", "50"). The value is
    // read as JSON when it parses, as a string otherwise.
    void set(std::string_view key, std::string_view value);
    // CLINISTRUCT_<PATH KEY> environment variables override paths.
    void apply_env();
    void validate() const;

    // Hash of everything except paths and the thread count.
    std::string hash() const;
    io::Provenance provenance() const;
};

// Stage order of `run_all`.
const std::vector<std::string>& stage_names();
bool is_stage(std::string_view name);

struct StageResult {
    std::string stage;
    std::string summary;
    std::vector<std::string> warnings;
};

struct ReviewOutcome {
    std::string concept_id;
    int iterations = 0;
    bool fixpoint = false;
    std::size_t accepted = 0;
};

struct AblationRow {
    std::string kind;  // "concept" (parsing ratio) or "indicator" (extraction rate)
    std::string name;
    double augmented = 0.0;
    double seed_only = 0.0;
};

class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg);

    const PipelineConfig& config() const { return cfg_; }
    fs::path artifact(std::string_view name) const;

    // Errors are rethrown with the stage name prefixed. A missing input is
    // reported as NotFound.
    StageResult run(std::string_view stage);
    // ingest through evaluate.
    std::vector<StageResult> run_all();
    StageResult synth();

    // Available after suggest ran in this process.
    const std::vector<ReviewOutcome>& review_outcomes() const { return review_; }

private:
    StageResult ingest();
    StageResult normalize();
    StageResult lexstats();
    StageResult typos();
    StageResult phrases();
    StageResult train();
    StageResult suggest();
    StageResult canonicalize();
    StageResult extract();
    StageResult merge();
    StageResult evaluate();

    fs::path require(const fs::path& p) const;
    std::vector<extract::ExtractionRule> rules() const;

    PipelineConfig cfg_;
    io::Provenance prov_;
    std::string current_;
    std::vector<ReviewOutcome> review_;
};

// Built-in data files, identical to the copies under data/.
std::string_view default_rules_text();
nlohmann::json default_dictionary_json();

// Evaluation specs derived from rules: presence and category rules are
// categorical, Cohen's kappa is reported for multi-class rules without a
// positive label.
std::vector<metrics::IndicatorSpec> indicator_specs(std::span<const extract::ExtractionRule> rules);

// Normalized-document jsonl artifacts.
lexicon::Corpus read_corpus(const fs::path& p);
void write_corpus(const lexicon::Corpus& corpus, const fs::path& p, const io::Provenance& prov);

std::vector<AblationRow> read_ablation_csv(const fs::path& p);
std::string format_ablation(std::span<const AblationRow> rows);

}  // namespace clinistruct::pipeline
