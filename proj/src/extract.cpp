#include "clinistruct/extract.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "clinistruct/lexicon.hpp"
#include "parallel.hpp"

namespace clinistruct::extract {

std::string_view to_string(ValueKind k) {
    switch (k) {
        case ValueKind::Presence: return "presence";
        case ValueKind::Numeric: return "numeric";
        case ValueKind::Category: return "category";
    }
    return "presence";
}

ValueKind parse_value_kind(std::string_view s) {
    if (s == "presence") return ValueKind::Presence;
    if (s == "numeric") return ValueKind::Numeric;
    if (s == "category") return ValueKind::Category;
    throw Error(ErrorCode::Parse, fmt::format("unknown rule kind '{}'", s));
}

std::vector<std::string> ExtractionRule::labels() const {
    std::vector<std::string> out;
    if (kind == ValueKind::Presence) return {std::string(kAbsent), std::string(kPresent)};
    for (const auto& [seq, label] : lexicon)
        if (std::find(out.begin(), out.end(), label) == out.end()) out.push_back(label);
    if (!negated_label.empty() && std::find(out.begin(), out.end(), negated_label) == out.end())
        out.push_back(negated_label);
    std::sort(out.begin(), out.end());
    return out;
}

void ExtractionRule::validate() const {
    if (indicator.empty()) throw Error(ErrorCode::InvalidArgument, "rule without indicator name");
    if (token.empty()) throw Error(ErrorCode::InvalidArgument, fmt::format("rule '{}': no concept", indicator));
    if (window < 1) throw Error(ErrorCode::InvalidArgument, fmt::format("rule '{}': window must be >= 1", indicator));
    if (kind == ValueKind::Category && lexicon.empty())
        throw Error(ErrorCode::InvalidArgument, fmt::format("rule '{}': category rule needs a lexicon", indicator));
    if (tolerance < 0) throw Error(ErrorCode::InvalidArgument, fmt::format("rule '{}': negative tolerance", indicator));
    if (!positive_label.empty() && kind != ValueKind::Numeric) {
        auto l = labels();
        if (std::find(l.begin(), l.end(), positive_label) == l.end())
            throw Error(ErrorCode::InvalidArgument,
                        fmt::format("rule '{}': positive label '{}' is not a rule label", indicator, positive_label));
    }
}

namespace {

TokenSeq words(std::string_view s) {
    TokenSeq out;
    for (auto& w : io::split(io::trim(s), ' '))
        if (!w.empty()) out.push_back(std::move(w));
    return out;
}

std::vector<std::string> list(std::string_view v) {
    std::vector<std::string> out;
    for (auto& item : io::split(v, ','))
        if (auto t = io::trim(item); !t.empty()) out.push_back(std::move(t));
    return out;
}

std::pair<std::string, std::string> key_value(std::string_view item, std::size_t line) {
    auto colon = item.rfind(':');
    if (colon == std::string_view::npos)
        throw Error(ErrorCode::Parse, fmt::format("rules line {}: expected 'key:value' in '{}'", line, item));
    return {io::trim(item.substr(0, colon)), io::trim(item.substr(colon + 1))};
}

}  // namespace

std::vector<ExtractionRule> parse_rules(std::string_view text) {
    std::vector<ExtractionRule> rules;
    std::size_t line_no = 0;
    for (const auto& raw : io::split(text, '\n')) {
        ++line_no;
        auto line = io::trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw Error(ErrorCode::Parse, fmt::format("rules line {}: unterminated section", line_no));
            ExtractionRule r;
            r.indicator = io::trim(std::string_view(line).substr(1, line.size() - 2));
            for (const auto& other : rules)
                if (other.indicator == r.indicator)
                    throw Error(ErrorCode::Conflict, fmt::format("rules line {}: duplicate rule '{}'", line_no, r.indicator));
            rules.push_back(std::move(r));
            continue;
        }
        if (rules.empty()) throw Error(ErrorCode::Parse, fmt::format("rules line {}: entry outside a section", line_no));
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::Parse, fmt::format("rules line {}: expected 'key = value'", line_no));
        auto key = io::trim(std::string_view(line).substr(0, eq));
        auto value = io::trim(std::string_view(line).substr(eq + 1));
        auto& r = rules.back();
        try {
            if (key == "concept") {
                r.concept_id = value;
            } else if (key == "token") {
                r.token = value;
            } else if (key == "kind") {
                r.kind = parse_value_kind(value);
            } else if (key == "window") {
                r.window = std::stoul(value);
            } else if (key == "unit") {
                r.unit = value;
            } else if (key == "units") {
                for (const auto& item : list(value)) {
                    auto [u, f] = key_value(item, line_no);
                    r.unit_factors[u] = std::stod(f);
                }
            } else if (key == "mismatch_units") {
                for (auto& u : list(value)) r.mismatch_units.insert(std::move(u));
            } else if (key == "max") {
                r.max_value = std::stod(value);
            } else if (key == "lexicon") {
                for (const auto& item : list(value)) {
                    auto [seq, label] = key_value(item, line_no);
                    r.lexicon.emplace_back(words(seq), label);
                }
            } else if (key == "cues") {
                for (const auto& c : list(value)) r.negation_cues.push_back(words(c));
            } else if (key == "negated") {
                r.negated_label = value;
            } else if (key == "positive") {
                r.positive_label = value;
            } else if (key == "tolerance") {
                r.tolerance = std::stod(value);
            } else {
                throw Error(ErrorCode::Parse, fmt::format("rules line {}: unknown key '{}'", line_no, key));
            }
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::Parse, fmt::format("rules line {}: bad value '{}' for '{}'", line_no, value, key));
        }
    }
    for (auto& r : rules) {
        if (r.concept_id.empty()) r.concept_id = r.token;
        if (r.token.empty()) r.token = r.concept_id;
        r.validate();
    }
    return rules;
}

std::vector<ExtractionRule> load_rules(const std::filesystem::path& p) { return parse_rules(io::read_file(p)); }

void resolve_concepts(std::vector<ExtractionRule>& rules, const syndict::SynonymDictionary& dict) {
    for (auto& r : rules)
        if (dict.contains(r.concept_id)) r.token = dict.at(r.concept_id).canonical;
}

namespace {

struct Expanded {
    std::string word;
    std::size_t index;  // position of the originating token
};

std::vector<Expanded> expand(std::span<const std::string> tokens, std::size_t begin, std::size_t end) {
    std::vector<Expanded> out;
    for (std::size_t i = begin; i < end && i < tokens.size(); ++i)
        for (auto& w : io::split(tokens[i], lexicon::kPhraseJoiner))
            if (!w.empty()) out.push_back({std::move(w), i});
    return out;
}

bool matches_at(const std::vector<Expanded>& seq, std::size_t pos, const TokenSeq& pattern) {
    if (pattern.empty() || pos + pattern.size() > seq.size()) return false;
    for (std::size_t k = 0; k < pattern.size(); ++k)
        if (seq[pos + k].word != pattern[k]) return false;
    return true;
}

bool contains_cue(const std::vector<Expanded>& seq, std::span<const TokenSeq> cues) {
    for (std::size_t p = 0; p < seq.size(); ++p)
        for (const auto& c : cues)
            if (matches_at(seq, p, c)) return true;
    return false;
}

// Plain decimal: digits with at most one '.' or ',' separator.
std::optional<double> parse_number(std::string_view t) {
    std::string s(t);
    std::replace(s.begin(), s.end(), ',', '.');
    if (s.empty() || s.front() == '.' || s.back() == '.') return std::nullopt;
    if (std::count(s.begin(), s.end(), '.') > 1) return std::nullopt;
    if (!std::all_of(s.begin(), s.end(), [](char c) { return (c >= '0' && c <= '9') || c == '.'; })) return std::nullopt;
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc::result_out_of_range) return std::numeric_limits<double>::infinity();
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

constexpr std::size_t kNegationLookback = 3;

}  // namespace

std::optional<Match> apply_rule(const textnorm::NormalizedDocument& doc, const ExtractionRule& rule,
                                std::vector<FieldError>* errors) {
    const auto& toks = doc.tokens;
    auto error = [&](std::string msg) {
        if (errors) errors->push_back({rule.indicator, doc.doc_id, std::move(msg)});
    };
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (toks[i] != rule.token) continue;
        auto before = expand(toks, i >= kNegationLookback ? i - kNegationLookback : 0, i);
        bool negated = contains_cue(before, rule.negation_cues);
        auto window = expand(toks, i + 1, i + 1 + rule.window);

        switch (rule.kind) {
            case ValueKind::Presence: {
                if (!negated) negated = contains_cue(window, rule.negation_cues);
                return Match{std::string(negated ? kAbsent : kPresent), i};
            }
            case ValueKind::Category: {
                if (negated) {
                    if (rule.negated_label.empty()) continue;
                    return Match{rule.negated_label, i};
                }
                for (std::size_t p = 0; p < window.size(); ++p)
                    for (const auto& [seq, label] : rule.lexicon)
                        if (matches_at(window, p, seq)) return Match{label, i};
                break;
            }
            case ValueKind::Numeric: {
                for (std::size_t p = 0; p < window.size(); ++p) {
                    auto v = parse_number(window[p].word);
                    if (!v) continue;
                    double factor = 1.0;
                    if (p + 1 < window.size()) {
                        const auto& next = window[p + 1].word;
                        if (rule.mismatch_units.contains(next)) {
                            error(fmt::format("token {}: unit '{}' does not convert to '{}'", i, next, rule.unit));
                            break;
                        }
                        if (auto it = rule.unit_factors.find(next); it != rule.unit_factors.end()) factor = it->second;
                    }
                    double value = *v * factor;
                    if (!std::isfinite(value) || value > rule.max_value) {
                        error(fmt::format("token {}: value {} out of range", i, window[p].word));
                        break;
                    }
                    // 2,2 cm -> 22.000000000000004 mm without this.
                    value = std::round(value * 1e6) / 1e6;
                    return Match{fmt::format("{}", value), i};
                }
                break;
            }
        }
    }
    return std::nullopt;
}

std::size_t StructuredRecord::filled() const {
    return static_cast<std::size_t>(std::count_if(fields.begin(), fields.end(), [](const auto& f) { return f.second.has_value(); }));
}

namespace {

StructuredRecord empty_record(const std::string& patient_id, std::optional<SourceType> source,
                              std::span<const ExtractionRule> rules) {
    StructuredRecord r{patient_id, source, {}, {}};
    for (const auto& rule : rules) r.fields[rule.indicator] = std::nullopt;
    return r;
}

bool earlier(const textnorm::NormalizedDocument* a, const textnorm::NormalizedDocument* b) {
    // Undated documents count as oldest.
    if (a->authored_date != b->authored_date) return a->authored_date < b->authored_date;
    return a->doc_id < b->doc_id;
}

}  // namespace

std::vector<StructuredRecord> extract_record(std::span<const textnorm::NormalizedDocument* const> docs,
                                             std::span<const ExtractionRule> rules) {
    std::vector<StructuredRecord> out;
    if (docs.empty()) return out;
    const auto& patient = docs.front()->patient_id;
    for (auto source : kDefaultPrecedence) {
        std::vector<const textnorm::NormalizedDocument*> group;
        for (const auto* d : docs) {
            if (d->patient_id != patient)
                throw Error(ErrorCode::InvalidArgument,
                            fmt::format("document '{}' belongs to patient '{}', not '{}'", d->doc_id, d->patient_id, patient));
            if (d->source_type == source) group.push_back(d);
        }
        if (group.empty()) continue;
        std::sort(group.begin(), group.end(), earlier);
        auto rec = empty_record(patient, source, rules);
        for (const auto* d : group) {
            for (const auto& rule : rules) {
                if (auto m = apply_rule(*d, rule, &rec.errors))
                    rec.fields[rule.indicator] = FieldValue{m->value, d->doc_id, source, m->token_index, d->laterality};
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

StructuredRecord merge_sources(std::span<const StructuredRecord> records, std::span<const SourceType> precedence) {
    StructuredRecord merged;
    if (records.empty()) return merged;
    merged.patient_id = records.front().patient_id;
    std::vector<const StructuredRecord*> ordered;
    for (auto s : precedence)
        for (const auto& r : records)
            if (r.source_type == s) ordered.push_back(&r);
    for (const auto& r : records) {
        if (r.patient_id != merged.patient_id)
            throw Error(ErrorCode::InvalidArgument, "merge_sources: records of different patients");
        for (const auto& [name, v] : r.fields) merged.fields.try_emplace(name, std::nullopt);
        merged.errors.insert(merged.errors.end(), r.errors.begin(), r.errors.end());
    }
    for (auto& [name, value] : merged.fields) {
        for (const auto* r : ordered) {
            auto it = r->fields.find(name);
            if (it != r->fields.end() && it->second) {
                value = it->second;
                break;
            }
        }
    }
    return merged;
}

std::vector<StructuredRecord> extract_corpus(std::span<const textnorm::NormalizedDocument> corpus,
                                             std::span<const ExtractionRule> rules, unsigned threads) {
    std::map<std::string, std::vector<const textnorm::NormalizedDocument*>> by_patient;
    for (const auto& d : corpus) by_patient[d.patient_id].push_back(&d);
    std::vector<const std::vector<const textnorm::NormalizedDocument*>*> groups;
    for (const auto& [p, docs] : by_patient) groups.push_back(&docs);

    std::vector<std::vector<StructuredRecord>> results(groups.size());
    detail::parallel_chunks(groups.size(), threads, [&](std::size_t b, std::size_t e, unsigned) {
        for (std::size_t i = b; i < e; ++i) results[i] = extract_record(*groups[i], rules);
    });
    std::vector<StructuredRecord> out;
    for (auto& r : results) std::move(r.begin(), r.end(), std::back_inserter(out));
    return out;
}

std::vector<StructuredRecord> merge_corpus(std::span<const StructuredRecord> per_source,
                                           std::span<const SourceType> precedence) {
    std::map<std::string, std::vector<StructuredRecord>> by_patient;
    for (const auto& r : per_source) by_patient[r.patient_id].push_back(r);
    std::vector<StructuredRecord> out;
    for (const auto& [p, recs] : by_patient) out.push_back(merge_sources(recs, precedence));
    return out;
}

std::set<std::string> search_records(std::span<const textnorm::NormalizedDocument> corpus,
                                     std::string_view concept_id, const syndict::SynonymDictionary& dict) {
    const auto& canonical = dict.at(concept_id).canonical;
    std::set<std::string> out;
    for (const auto& d : corpus)
        if (std::find(d.tokens.begin(), d.tokens.end(), canonical) != d.tokens.end()) out.insert(d.doc_id);
    return out;
}

void write_records_csv(std::span<const StructuredRecord> records, std::span<const std::string> indicators,
                       const std::filesystem::path& p, const io::Provenance* prov) {
    io::AtomicFile f(p);
    auto& os = f.stream();
    if (prov) os << prov->comment_line() << '\n';
    io::Row header = {"patient_id", "source_type"};
    for (const auto& ind : indicators)
        for (const char* suffix : {"", "__doc", "__source", "__token", "__laterality"}) header.push_back(ind + suffix);
    os << io::csv_join(header) << '\n';
    for (const auto& r : records) {
        io::Row row = {r.patient_id, r.source_type ? std::string(to_string(*r.source_type)) : std::string()};
        for (const auto& ind : indicators) {
            auto it = r.fields.find(ind);
            if (it == r.fields.end() || !it->second) {
                row.insert(row.end(), 5, std::string());
                continue;
            }
            const auto& v = *it->second;
            row.push_back(v.value);
            row.push_back(v.doc_id);
            row.push_back(std::string(to_string(v.source_type)));
            row.push_back(std::to_string(v.token_index));
            row.push_back(std::string(textnorm::to_string(v.laterality)));
        }
        os << io::csv_join(row) << '\n';
    }
    f.commit();
}

std::vector<StructuredRecord> read_records_csv(const std::filesystem::path& p, std::vector<std::string>* indicators) {
    auto t = io::read_csv(p);
    if (t.header.size() < 2 || t.header[0] != "patient_id" || t.header[1] != "source_type" || (t.header.size() - 2) % 5 != 0)
        throw Error(ErrorCode::Parse, fmt::format("{}: not a records table", p.string()));
    std::vector<std::string> names;
    for (std::size_t c = 2; c < t.header.size(); c += 5) names.push_back(t.header[c]);
    std::vector<StructuredRecord> out;
    for (const auto& row : t.rows) {
        StructuredRecord r;
        r.patient_id = row[0];
        if (!row[1].empty()) r.source_type = parse_source_type(row[1]);
        for (std::size_t k = 0; k < names.size(); ++k) {
            std::size_t c = 2 + 5 * k;
            if (row[c].empty()) {
                r.fields[names[k]] = std::nullopt;
                continue;
            }
            r.fields[names[k]] = FieldValue{row[c], row[c + 1], parse_source_type(row[c + 2]),
                                            static_cast<std::size_t>(std::stoull(row[c + 3])),
                                            textnorm::parse_laterality(row[c + 4])};
        }
        out.push_back(std::move(r));
    }
    if (indicators) *indicators = names;
    return out;
}

}  // namespace clinistruct::extract
