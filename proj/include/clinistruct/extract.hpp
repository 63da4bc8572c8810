#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "clinistruct/common.hpp"
#include "clinistruct/io.hpp"
#include "clinistruct/syndict.hpp"
#include "clinistruct/textnorm.hpp"

namespace clinistruct::extract {

enum class ValueKind { Presence, Numeric, Category };

std::string_view to_string(ValueKind k);
ValueKind parse_value_kind(std::string_view s);

using TokenSeq = std::vector<std::string>;

inline constexpr std::string_view kPresent = "yes";
inline constexpr std::string_view kAbsent = "no";

struct ExtractionRule {
    std::string indicator;
    std::string concept_id;
    std::string token;  // canonical token searched in documents
    ValueKind kind = ValueKind::Presence;
    std::size_t window = 10;  // tokens after the mention

    // numeric
    std::string unit;
    std::map<std::string, double, std::less<>> unit_factors;  // unit token -> factor to `unit`
    std::set<std::string, std::less<>> mismatch_units;        // units that make the value unusable
    double max_value = 1e6;

    // category
    std::vector<std::pair<TokenSeq, std::string>> lexicon;
    std::string negated_label;  // label for a negated mention; empty: negated mentions are skipped

    std::vector<TokenSeq> negation_cues;

    // evaluation
    std::string positive_label;
    double tolerance = 0.0;

    // Every label a category or presence rule can emit.
    std::vector<std::string> labels() const;
    void validate() const;
};

// INI-style rules file, one section per indicator:
//
//   [tumor_size]
//   concept = tumeur
//   kind = numeric
//   window = 10
//   unit = mm
//   units = mm:1, cm:10
//   lexicon = i:I, ii:II          (category: token sequence ':' label)
//   cues = pas de, absence de     (token sequences)
//   negated = neg
//   positive = III
std::vector<ExtractionRule> parse_rules(std::string_view text);
std::vector<ExtractionRule> load_rules(const std::filesystem::path& p);

// Points each rule at its concept's canonical token. Rules whose concept is not
// in the dictionary search for the concept id itself.
void resolve_concepts(std::vector<ExtractionRule>& rules, const syndict::SynonymDictionary& dict);

struct Match {
    std::string value;
    std::size_t token_index = 0;
};

struct FieldError {
    std::string indicator;
    std::string doc_id;
    std::string message;
};

// First mention of the rule's token that yields a value. The value search
// window sees the component words of merged phrase tokens.
std::optional<Match> apply_rule(const textnorm::NormalizedDocument& doc, const ExtractionRule& rule,
                                std::vector<FieldError>* errors = nullptr);

struct FieldValue {
    std::string value;
    std::string doc_id;
    SourceType source_type = SourceType::MeetingNote;
    std::size_t token_index = 0;
    textnorm::Laterality laterality = textnorm::Laterality::Unknown;

    bool operator==(const FieldValue&) const = default;
};

struct StructuredRecord {
    std::string patient_id;
    std::optional<SourceType> source_type;  // empty after merging
    std::map<std::string, std::optional<FieldValue>, std::less<>> fields;
    std::vector<FieldError> errors;

    std::size_t filled() const;
};

// One record per source type present among the patient's documents. Within a
// source, a later authored date overrides an earlier one.
std::vector<StructuredRecord> extract_record(std::span<const textnorm::NormalizedDocument* const> docs,
                                             std::span<const ExtractionRule> rules);

inline const std::vector<SourceType> kDefaultPrecedence = {SourceType::MeetingNote, SourceType::DischargeLetter,
                                                           SourceType::HospitalizationLetter};

StructuredRecord merge_sources(std::span<const StructuredRecord> records,
                               std::span<const SourceType> precedence = kDefaultPrecedence);

// Per-source records for every patient, ordered by (patient_id, source precedence).
std::vector<StructuredRecord> extract_corpus(std::span<const textnorm::NormalizedDocument> corpus,
                                             std::span<const ExtractionRule> rules, unsigned threads = 1);

// Merged record per patient, ordered by patient_id.
std::vector<StructuredRecord> merge_corpus(std::span<const StructuredRecord> per_source,
                                           std::span<const SourceType> precedence = kDefaultPrecedence);

// Documents containing the concept's canonical token.
std::set<std::string> search_records(std::span<const textnorm::NormalizedDocument> corpus,
                                     std::string_view concept_id, const syndict::SynonymDictionary& dict);

// CSV with one row per record: patient_id, source_type, then per indicator the
// value followed by <indicator>__doc, __source, __token and __laterality.
void write_records_csv(std::span<const StructuredRecord> records, std::span<const std::string> indicators,
                       const std::filesystem::path& p, const io::Provenance* prov = nullptr);
std::vector<StructuredRecord> read_records_csv(const std::filesystem::path& p, std::vector<std::string>* indicators = nullptr);

}  // namespace clinistruct::extract
