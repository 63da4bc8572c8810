#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clinistruct/io.hpp"

namespace clinistruct::metrics {

using Column = std::vector<std::optional<std::string>>;

// Rows are gold labels, columns predicted labels. Pairs with a missing side are
// only counted in n_missing_*.
struct ConfusionMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<std::uint64_t>> counts;
    std::uint64_t n_missing_pred = 0;
    std::uint64_t n_missing_gold = 0;

    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::size_t label_index(std::string_view label) const;  // throws NotFound
};

ConfusionMatrix confusion(std::span<const std::optional<std::string>> gold,
                          std::span<const std::optional<std::string>> pred, std::vector<std::string> labels);

// All values in percent; absent when a denominator is zero.
struct Scores {
    std::optional<double> agreement;
    std::optional<double> precision;
    std::optional<double> sensitivity;
    std::optional<double> f1;
};

// P, S and F1 are computed for `positive_label` against all other labels.
Scores scores(const ConfusionMatrix& cm, const std::optional<std::string>& positive_label);

// Harmonic mean of two percentages; absent when both are zero.
std::optional<double> f1_score(double precision, double sensitivity);

// Cohen's kappa as a fraction; absent when the chance agreement is 1 or the grid is empty.
std::optional<double> cohen_kappa(const ConfusionMatrix& cm);

// 100 * filled / all. Throws on an empty column.
double extraction_rate(std::span<const std::optional<std::string>> values);

double round_half_up(double value, int decimals);

enum class IndicatorKind { Categorical, Numeric };

struct IndicatorSpec {
    std::string name;
    IndicatorKind kind = IndicatorKind::Categorical;
    std::vector<std::string> labels;              // categorical
    std::optional<std::string> positive_label;    // binary scores
    bool kappa = false;                           // report Cohen's kappa
    double tolerance = 0.0;                       // numeric: |gold - pred| <= tolerance agrees
};

struct IndicatorReport {
    std::string name;
    std::uint64_t n_records = 0;
    std::uint64_t n_filled = 0;
    std::uint64_t n_paired = 0;
    std::uint64_t n_missing_pred = 0;
    std::uint64_t n_missing_gold = 0;
    std::optional<double> agreement;
    std::optional<double> precision;
    std::optional<double> sensitivity;
    std::optional<double> f1;
    std::optional<double> kappa;  // percent
    double extraction_rate = 0.0;
};

struct EvaluationReport {
    std::vector<IndicatorReport> rows;
    std::vector<std::string> gold_only_patients;       // in gold, never extracted
    std::vector<std::string> extracted_only_patients;  // extracted, absent from gold
};

// gold and extracted tables carry a patient_id column and one column per
// indicator; empty cells are missing values. The extraction rate is taken over
// every extracted patient.
EvaluationReport evaluate(const io::Table& gold, const io::Table& extracted, std::span<const IndicatorSpec> specs);

// Full-precision csv.
void write_report_csv(const EvaluationReport& r, const std::filesystem::path& p, const io::Provenance* prov = nullptr);
EvaluationReport read_report_csv(const std::filesystem::path& p);
// Aligned text table, one decimal, half-up.
std::string format_report(const EvaluationReport& r);

}  // namespace clinistruct::metrics
