#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clinistruct/io.hpp"

namespace clinistruct::synthgen {

struct PlantedSynonym {
    std::string concept_id;
    std::string canonical;
    std::string variant;
    double rate = 0.0;  // probability that a mention of the concept uses this variant
};

// Free-standing word pair or triple inserted `count` times, one per meeting
// note at most. Words of a planted phrase appear nowhere else.
struct PlantedPhrase {
    std::vector<std::string> tokens;
    std::size_t count = 0;
};

struct Distributions {
    double er_positive = 0.75;
    double pr_positive = 0.65;
    double her2_positive = 0.15;
    double metastasis = 0.10;
    double in_situ = 0.15;
    std::vector<double> grade = {0.2, 0.45, 0.35};                      // I, II, III
    std::vector<double> subtype = {0.6, 0.25, 0.08, 0.07};              // ductal, lobular, mucinous, medullary
    double size_in_cm = 0.3;
    double sterilet = 0.25;
};

struct SynthConfig {
    std::size_t n_patients = 1000;
    double second_note_rate = 0.3;  // earlier meeting note with a different grade
    double hospitalization_rate = 0.7;
    double discharge_rate = 0.6;
    double split_rate = 0.3;  // size, nodes and ki67 moved from the meeting note to a letter
    double biopsy_mention_rate = 0.45;
    std::vector<PlantedSynonym> synonyms;
    std::vector<PlantedPhrase> phrases;   // scored above the thresholds
    std::vector<PlantedPhrase> controls;  // pair count <= delta
    Distributions distributions;
    double typo_rate = 0.004;
    std::size_t short_typos = 20;
    std::uint64_t rare_max = 10;
    std::uint64_t frequent_min = 100;
    std::size_t min_length = 4;
    std::uint64_t seed = 7;

    static SynthConfig defaults();
    void validate() const;
    nlohmann::json to_json() const;
    // Missing keys keep their default values.
    static SynthConfig from_json(const nlohmann::json& j);
};

struct SynthDocument {
    std::string doc_id;
    std::string patient_id;
    std::string source_type;
    std::string authored_date;
    std::string text;
};

struct SynthOutput {
    std::vector<SynthDocument> corpus;
    io::Table gold;
    std::vector<nlohmann::json> manifest;
};

// Deterministic in the seed. Throws InvalidArgument when a planted count does
// not fit the meeting-note budget.
SynthOutput generate_corpus(const SynthConfig& cfg);

struct SynthPaths {
    std::filesystem::path corpus;
    std::filesystem::path gold;
    std::filesystem::path manifest;
};

void write_output(const SynthOutput& out, const SynthPaths& paths, const io::Provenance* prov = nullptr);

// The gold indicator columns, in table order.
const std::vector<std::string>& gold_indicators();

}  // namespace clinistruct::synthgen
