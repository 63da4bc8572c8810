#include "clinistruct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "clinistruct/common.hpp"

namespace clinistruct::metrics {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
        for (auto c : row) t += c;
    return t;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
    return t;
}

std::size_t ConfusionMatrix::label_index(std::string_view label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw Error(ErrorCode::NotFound, fmt::format("label '{}' outside the declared set", label));
    return static_cast<std::size_t>(it - labels.begin());
}

ConfusionMatrix confusion(std::span<const std::optional<std::string>> gold,
                          std::span<const std::optional<std::string>> pred, std::vector<std::string> labels) {
    if (gold.size() != pred.size())
        throw Error(ErrorCode::InvalidArgument, fmt::format("columns differ in length ({} vs {})", gold.size(), pred.size()));
    ConfusionMatrix cm;
    cm.labels = std::move(labels);
    cm.counts.assign(cm.labels.size(), std::vector<std::uint64_t>(cm.labels.size(), 0));
    for (std::size_t i = 0; i < gold.size(); ++i) {
        // Labels are checked even when the other side is missing.
        std::optional<std::size_t> g, p;
        if (gold[i]) g = cm.label_index(*gold[i]);
        if (pred[i]) p = cm.label_index(*pred[i]);
        if (!g) ++cm.n_missing_gold;
        if (!p) ++cm.n_missing_pred;
        if (g && p) ++cm.counts[*g][*p];
    }
    return cm;
}

std::optional<double> f1_score(double precision, double sensitivity) {
    if (precision + sensitivity == 0.0) return std::nullopt;
    return 2.0 * precision * sensitivity / (precision + sensitivity);
}

Scores scores(const ConfusionMatrix& cm, const std::optional<std::string>& positive_label) {
    Scores s;
    auto total = cm.total();
    if (total > 0) s.agreement = 100.0 * static_cast<double>(cm.trace()) / static_cast<double>(total);
    if (!positive_label) return s;
    auto k = cm.label_index(*positive_label);
    std::uint64_t tp = cm.counts[k][k], fp = 0, fn = 0;
    for (std::size_t i = 0; i < cm.labels.size(); ++i) {
        if (i == k) continue;
        fp += cm.counts[i][k];
        fn += cm.counts[k][i];
    }
    if (tp + fp > 0) s.precision = 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) s.sensitivity = 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (s.precision && s.sensitivity) s.f1 = f1_score(*s.precision, *s.sensitivity);
    return s;
}

std::optional<double> cohen_kappa(const ConfusionMatrix& cm) {
    auto total = static_cast<double>(cm.total());
    if (total == 0) return std::nullopt;
    double po = static_cast<double>(cm.trace()) / total;
    double pe = 0;
    for (std::size_t i = 0; i < cm.labels.size(); ++i) {
        double row = 0, col = 0;
        for (std::size_t j = 0; j < cm.labels.size(); ++j) {
            row += static_cast<double>(cm.counts[i][j]);
            col += static_cast<double>(cm.counts[j][i]);
        }
        pe += row * col;
    }
    pe /= total * total;
    if (pe >= 1.0) return std::nullopt;
    return (po - pe) / (1.0 - pe);
}

double extraction_rate(std::span<const std::optional<std::string>> values) {
    if (values.empty()) throw Error(ErrorCode::InvalidArgument, "extraction rate of an empty record set");
    auto filled = std::count_if(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
    return 100.0 * static_cast<double>(filled) / static_cast<double>(values.size());
}

double round_half_up(double value, int decimals) {
    double scale = std::pow(10.0, decimals);
    // The epsilon keeps decimal ties such as 84.75 from rounding down when the
    // binary value sits just below the tie.
    return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

namespace {

std::map<std::string, const io::Row*> index_rows(const io::Table& t, std::string_view what) {
    int pid = t.column("patient_id");
    if (pid < 0) throw Error(ErrorCode::Parse, fmt::format("{} table has no patient_id column", what));
    std::map<std::string, const io::Row*> out;
    for (const auto& row : t.rows) {
        const auto& id = row[static_cast<std::size_t>(pid)];
        if (!out.emplace(id, &row).second)
            throw Error(ErrorCode::Conflict, fmt::format("{} table lists patient '{}' twice", what, id));
    }
    return out;
}

std::optional<std::string> cell(const io::Row& row, int col) {
    if (col < 0 || row[static_cast<std::size_t>(col)].empty()) return std::nullopt;
    return row[static_cast<std::size_t>(col)];
}

double to_number(const std::string& s, std::string_view indicator) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::Parse, fmt::format("indicator '{}': '{}' is not a number", indicator, s));
    }
}

}  // namespace

EvaluationReport evaluate(const io::Table& gold, const io::Table& extracted, std::span<const IndicatorSpec> specs) {
    auto gold_rows = index_rows(gold, "gold");
    auto pred_rows = index_rows(extracted, "extracted");
    EvaluationReport report;
    for (const auto& [id, row] : gold_rows)
        if (!pred_rows.contains(id)) report.gold_only_patients.push_back(id);
    for (const auto& [id, row] : pred_rows)
        if (!gold_rows.contains(id)) report.extracted_only_patients.push_back(id);

    for (const auto& spec : specs) {
        int gcol = gold.column(spec.name);
        int pcol = extracted.column(spec.name);
        if (gcol < 0) throw Error(ErrorCode::NotFound, fmt::format("gold table has no column '{}'", spec.name));

        IndicatorReport r;
        r.name = spec.name;
        Column all_pred, g, p;
        for (const auto& [id, row] : pred_rows) {
            all_pred.push_back(cell(*row, pcol));
            auto it = gold_rows.find(id);
            if (it == gold_rows.end()) continue;
            g.push_back(cell(*it->second, gcol));
            p.push_back(all_pred.back());
        }
        r.n_records = all_pred.size();
        r.n_filled = static_cast<std::uint64_t>(std::count_if(all_pred.begin(), all_pred.end(), [](const auto& v) { return v.has_value(); }));
        r.extraction_rate = all_pred.empty() ? 0.0 : extraction_rate(all_pred);

        if (spec.kind == IndicatorKind::Categorical) {
            auto cm = confusion(g, p, spec.labels);
            auto s = scores(cm, spec.positive_label);
            r.n_paired = cm.total();
            r.n_missing_gold = cm.n_missing_gold;
            r.n_missing_pred = cm.n_missing_pred;
            r.agreement = s.agreement;
            r.precision = s.precision;
            r.sensitivity = s.sensitivity;
            r.f1 = s.f1;
            if (spec.kappa)
                if (auto k = cohen_kappa(cm)) r.kappa = 100.0 * *k;
        } else {
            std::uint64_t agree = 0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!g[i]) ++r.n_missing_gold;
                if (!p[i]) ++r.n_missing_pred;
                if (!g[i] || !p[i]) continue;
                ++r.n_paired;
                if (std::abs(to_number(*g[i], spec.name) - to_number(*p[i], spec.name)) <= spec.tolerance) ++agree;
            }
            if (r.n_paired > 0) r.agreement = 100.0 * static_cast<double>(agree) / static_cast<double>(r.n_paired);
        }
        report.rows.push_back(std::move(r));
    }
    return report;
}

namespace {

std::string full(const std::optional<double>& v) { return v ? fmt::format("{:.17g}", *v) : std::string(); }

std::string pretty(const std::optional<double>& v) {
    return v ? fmt::format("{:.1f}", round_half_up(*v, 1)) : std::string("-");
}

std::optional<double> opt(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
}

const io::Row kReportHeader = {"indicator", "n_records", "n_filled", "n_paired", "n_missing_pred", "n_missing_gold",
                               "A",         "P",         "S",        "F1",       "kappa",          "ER"};

}  // namespace

void write_report_csv(const EvaluationReport& r, const std::filesystem::path& p, const io::Provenance* prov) {
    io::AtomicFile f(p);
    auto& os = f.stream();
    if (prov) os << prov->comment_line() << '\n';
    os << io::csv_join(kReportHeader) << '\n';
    for (const auto& row : r.rows)
        os << io::csv_join({row.name, std::to_string(row.n_records), std::to_string(row.n_filled),
                            std::to_string(row.n_paired), std::to_string(row.n_missing_pred),
                            std::to_string(row.n_missing_gold), full(row.agreement), full(row.precision),
                            full(row.sensitivity), full(row.f1), full(row.kappa), full(row.extraction_rate)})
           << '\n';
    f.commit();
}

EvaluationReport read_report_csv(const std::filesystem::path& p) {
    auto t = io::read_csv(p);
    if (t.header != kReportHeader) throw Error(ErrorCode::Parse, fmt::format("{}: not an evaluation report", p.string()));
    EvaluationReport r;
    for (const auto& row : t.rows) {
        IndicatorReport x;
        x.name = row[0];
        x.n_records = std::stoull(row[1]);
        x.n_filled = std::stoull(row[2]);
        x.n_paired = std::stoull(row[3]);
        x.n_missing_pred = std::stoull(row[4]);
        x.n_missing_gold = std::stoull(row[5]);
        x.agreement = opt(row[6]);
        x.precision = opt(row[7]);
        x.sensitivity = opt(row[8]);
        x.f1 = opt(row[9]);
        x.kappa = opt(row[10]);
        x.extraction_rate = std::stod(row[11]);
        r.rows.push_back(std::move(x));
    }
    return r;
}

std::string format_report(const EvaluationReport& r) {
    std::size_t w = 9;
    for (const auto& row : r.rows) w = std::max(w, row.name.size());
    std::string out = fmt::format("{:<{}}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n", "indicator", w, "A", "P", "S",
                                  "F1", "kappa", "ER");
    for (const auto& row : r.rows)
        out += fmt::format("{:<{}}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n", row.name, w, pretty(row.agreement),
                           pretty(row.precision), pretty(row.sensitivity), pretty(row.f1), pretty(row.kappa),
                           pretty(row.extraction_rate));
    if (!r.gold_only_patients.empty())
        out += fmt::format("patients in gold but not extracted: {}\n", r.gold_only_patients.size());
    if (!r.extracted_only_patients.empty())
        out += fmt::format("patients extracted but not in gold: {}\n", r.extracted_only_patients.size());
    return out;
}

}  // namespace clinistruct::metrics
