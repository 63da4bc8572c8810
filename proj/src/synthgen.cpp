#include "clinistruct/synthgen.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "clinistruct/common.hpp"

namespace clinistruct::synthgen {

using nlohmann::json;

SynthConfig SynthConfig::defaults() {
    SynthConfig c;
    c.synonyms = {
        {"grade", "grade", "gr", 0.07},
        {"grade", "grade", "g", 0.05},
        {"tumeur", "tumeur", "lesion", 0.10},
        {"carcinome", "carcinome", "adenocarcinome", 0.08},
        {"ganglions", "ganglions", "adenopathies", 0.10},
        {"ki67", "ki67", "mib1", 0.10},
        {"her2", "her2", "cerbb2", 0.08},
        {"re", "re", "ro", 0.08},
        {"rp", "rp", "rpg", 0.08},
        {"mastectomie", "mastectomie", "mammectomie", 0.10},
        {"chimiotherapie", "chimiotherapie", "chimio", 0.12},
        {"radiotherapie", "radiotherapie", "rth", 0.10},
        {"sterilet", "sterilet", "diu", 0.20},
    };
    c.phrases = {{{"antecedents", "familiaux"}, 200}};
    c.controls = {{{"kyste", "simple"}, 30}, {{"microcalcifications", "groupees"}, 40}, {{"mastose", "fibrokystique"}, 25}};
    return c;
}

void SynthConfig::validate() const {
    auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, fmt::format("synth: {} must be in [0, 1]", name));
    };
    if (n_patients < 1) throw Error(ErrorCode::InvalidArgument, "synth: n_patients must be positive");
    prob(second_note_rate, "second_note_rate");
    prob(hospitalization_rate, "hospitalization_rate");
    prob(discharge_rate, "discharge_rate");
    prob(split_rate, "split_rate");
    prob(biopsy_mention_rate, "biopsy_mention_rate");
    prob(typo_rate, "typo_rate");
    const auto& d = distributions;
    for (double p : {d.er_positive, d.pr_positive, d.her2_positive, d.metastasis, d.in_situ, d.size_in_cm, d.sterilet})
        prob(p, "distribution probability");
    if (d.grade.size() != 3 || d.subtype.size() != 4)
        throw Error(ErrorCode::InvalidArgument, "synth: grade needs 3 weights and subtype 4");
    std::map<std::string, double> per_concept;
    for (const auto& s : synonyms) {
        prob(s.rate, "synonym rate");
        if (s.variant.empty() || s.concept_id.empty()) throw Error(ErrorCode::InvalidArgument, "synth: empty synonym");
        per_concept[s.concept_id] += s.rate;
    }
    for (const auto& [c, total] : per_concept)
        if (total >= 1.0) throw Error(ErrorCode::InvalidArgument, fmt::format("synth: variant rates of '{}' sum to >= 1", c));
    std::size_t budget = 0;
    for (const auto* list : {&phrases, &controls})
        for (const auto& p : *list) {
            if (p.tokens.size() < 2 || p.tokens.size() > 3 || p.count == 0)
                throw Error(ErrorCode::InvalidArgument, "synth: phrases need 2-3 tokens and a positive count");
            budget += p.count;
        }
    if (budget > n_patients)
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("synth: {} planted phrase occurrences exceed the {} meeting notes available", budget, n_patients));
    if (rare_max >= frequent_min) throw Error(ErrorCode::InvalidArgument, "synth: rare_max must be < frequent_min");
}

namespace {

json phrases_json(const std::vector<PlantedPhrase>& v) {
    json a = json::array();
    for (const auto& p : v) a.push_back({{"tokens", p.tokens}, {"count", p.count}});
    return a;
}

std::vector<PlantedPhrase> phrases_from(const json& a) {
    std::vector<PlantedPhrase> out;
    for (const auto& p : a) out.push_back({p.at("tokens").get<std::vector<std::string>>(), p.at("count").get<std::size_t>()});
    return out;
}

}  // namespace

json SynthConfig::to_json() const {
    json syn = json::array();
    for (const auto& s : synonyms)
        syn.push_back({{"concept", s.concept_id}, {"canonical", s.canonical}, {"variant", s.variant}, {"rate", s.rate}});
    const auto& d = distributions;
    return {{"n_patients", n_patients},
            {"second_note_rate", second_note_rate},
            {"hospitalization_rate", hospitalization_rate},
            {"discharge_rate", discharge_rate},
            {"split_rate", split_rate},
            {"biopsy_mention_rate", biopsy_mention_rate},
            {"synonyms", syn},
            {"phrases", phrases_json(phrases)},
            {"controls", phrases_json(controls)},
            {"distributions",
             {{"er_positive", d.er_positive},
              {"pr_positive", d.pr_positive},
              {"her2_positive", d.her2_positive},
              {"metastasis", d.metastasis},
              {"in_situ", d.in_situ},
              {"grade", d.grade},
              {"subtype", d.subtype},
              {"size_in_cm", d.size_in_cm},
              {"sterilet", d.sterilet}}},
            {"typo_rate", typo_rate},
            {"short_typos", short_typos},
            {"rare_max", rare_max},
            {"frequent_min", frequent_min},
            {"min_length", min_length},
            {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const json& j) {
    auto c = defaults();
    try {
        c.n_patients = j.value("n_patients", c.n_patients);
        c.second_note_rate = j.value("second_note_rate", c.second_note_rate);
        c.hospitalization_rate = j.value("hospitalization_rate", c.hospitalization_rate);
        c.discharge_rate = j.value("discharge_rate", c.discharge_rate);
        c.split_rate = j.value("split_rate", c.split_rate);
        c.biopsy_mention_rate = j.value("biopsy_mention_rate", c.biopsy_mention_rate);
        if (j.contains("synonyms")) {
            c.synonyms.clear();
            for (const auto& s : j["synonyms"])
                c.synonyms.push_back({s.at("concept").get<std::string>(), s.at("canonical").get<std::string>(),
                                      s.at("variant").get<std::string>(), s.at("rate").get<double>()});
        }
        if (j.contains("phrases")) c.phrases = phrases_from(j["phrases"]);
        if (j.contains("controls")) c.controls = phrases_from(j["controls"]);
        if (j.contains("distributions")) {
            const auto& d = j["distributions"];
            auto& o = c.distributions;
            o.er_positive = d.value("er_positive", o.er_positive);
            o.pr_positive = d.value("pr_positive", o.pr_positive);
            o.her2_positive = d.value("her2_positive", o.her2_positive);
            o.metastasis = d.value("metastasis", o.metastasis);
            o.in_situ = d.value("in_situ", o.in_situ);
            o.grade = d.value("grade", o.grade);
            o.subtype = d.value("subtype", o.subtype);
            o.size_in_cm = d.value("size_in_cm", o.size_in_cm);
            o.sterilet = d.value("sterilet", o.sterilet);
        }
        c.typo_rate = j.value("typo_rate", c.typo_rate);
        c.short_typos = j.value("short_typos", c.short_typos);
        c.rare_max = j.value("rare_max", c.rare_max);
        c.frequent_min = j.value("frequent_min", c.frequent_min);
        c.min_length = j.value("min_length", c.min_length);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, fmt::format("synth config: {}", e.what()));
    }
    c.validate();
    return c;
}

const std::vector<std::string>& gold_indicators() {
    static const std::vector<std::string> v = {"sbr_grade", "er",         "pr",          "her2",           "ki67",
                                               "nodes",     "tumor_size", "cancer_type", "cancer_subtype", "metastasis"};
    return v;
}

namespace {

// Portable draws on top of the raw 64-bit engine; the std distributions are
// implementation-defined and would make the corpus depend on the toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : g_(seed) {}
    double uniform() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }
    bool chance(double p) { return uniform() < p; }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
    int range(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::size_t>(hi - lo + 1))); }
    std::size_t weighted(const std::vector<double>& w) {
        double total = std::accumulate(w.begin(), w.end(), 0.0);
        double x = uniform() * total;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (x < w[i]) return i;
            x -= w[i];
        }
        return w.size() - 1;
    }
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 g_;
};

struct Word {
    std::string norm;     // token after normalization; empty for punctuation
    std::string surface;  // raw text
    std::string concept_id;  // planted concept id when this word is a concept mention
};

using Sentence = std::vector<Word>;

struct Section {
    std::string heading;
    std::vector<Sentence> sentences;
};

struct Doc {
    std::string doc_id;
    std::string patient_id;
    SourceType source = SourceType::MeetingNote;
    Date date;
    std::vector<Section> sections;
};

const std::map<std::string, std::string, std::less<>>& surfaces() {
    static const std::map<std::string, std::string, std::less<>> m = {
        {"metastase", "métastase"},         {"lesion", "lésion"},
        {"reunion", "réunion"},             {"chimiotherapie", "chimiothérapie"},
        {"radiotherapie", "radiothérapie"}, {"sterilet", "stérilet"},
        {"medullaire", "médullaire"},       {"hepatique", "hépatique"},
        {"hospitalisee", "hospitalisée"},   {"adenopathies", "adénopathies"},
        {"adenocarcinome", "adénocarcinome"}, {"antecedents", "antécédents"},
        {"operatoires", "opératoires"},     {"groupees", "groupées"},
        {"evidence", "évidence"},           {"realisation", "réalisation"},
        {"re", "RE"},                       {"rp", "RP"},
        {"her2", "HER2"},                   {"ki67", "Ki67"},
        {"ro", "RO"},                       {"rpg", "RPG"},
        {"cerbb2", "cerbB2"},               {"mib1", "MIB1"},
        {"diu", "DIU"},                     {"sbr", "SBR"},
        {"rth", "RTh"},                     {"a", "à"},
        {"negatif", "négatif"},             {"fevrier", "février"},
        {"aout", "août"},                   {"decembre", "décembre"},
    };
    return m;
}

Word word(std::string_view norm) {
    auto it = surfaces().find(norm);
    return {std::string(norm), it != surfaces().end() ? it->second : std::string(norm), {}};
}

void append(Sentence& s, std::string_view text) {
    std::size_t i = 0;
    while (i < text.size()) {
        auto j = text.find(' ', i);
        if (j == std::string_view::npos) j = text.size();
        if (j > i) s.push_back(word(text.substr(i, j - i)));
        i = j + 1;
    }
}

Sentence sentence(std::string_view text) {
    Sentence s;
    append(s, text);
    return s;
}

constexpr const char* kMonths[] = {"janvier", "fevrier", "mars",      "avril",   "mai",      "juin",
                                   "juillet", "aout",    "septembre", "octobre", "novembre", "decembre"};

Date add_days(const Date& d, int days) {
    using namespace std::chrono;
    sys_days s = year_month_day{year{d.year}, month{static_cast<unsigned>(d.month)}, day{static_cast<unsigned>(d.day)}};
    year_month_day r{s + std::chrono::days{days}};
    return {static_cast<int>(r.year()), static_cast<int>(static_cast<unsigned>(r.month())),
            static_cast<int>(static_cast<unsigned>(r.day()))};
}

struct PatientValues {
    std::size_t grade = 0;
    bool er = false, pr = false, her2 = false;
    int ki67 = 0;
    int nodes = 0, nodes_examined = 0;
    int size_mm = 0;
    bool size_in_cm = false;
    bool in_situ = false;
    std::size_t subtype = 0;
    bool metastasis = false;
    bool sterilet = false;
    int age = 0;
    bool left = true;
    std::size_t surgery = 0;
    std::size_t adjuvant = 0;
};

constexpr const char* kGradeLabels[] = {"I", "II", "III"};
constexpr const char* kSubtypeWords[] = {"canalaire", "lobulaire", "mucineux", "medullaire"};
constexpr const char* kSubtypeLabels[] = {"ductal", "lobular", "mucinous", "medullary"};

class Generator {
public:
    explicit Generator(const SynthConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
        for (const auto& s : cfg.synonyms) variants_[s.concept_id].push_back(&s);
        for (const auto& s : cfg.synonyms) canonical_[s.concept_id] = s.canonical;
    }

    SynthOutput run();

private:
    Word mention(const std::string& id) {
        std::string norm = id;
        if (auto it = canonical_.find(id); it != canonical_.end()) norm = it->second;
        if (auto it = variants_.find(id); it != variants_.end()) {
            double x = rng_.uniform();
            for (const auto* v : it->second) {
                if (x < v->rate) {
                    norm = v->variant;
                    break;
                }
                x -= v->rate;
            }
        }
        auto w = word(norm);
        w.concept_id = id;
        return w;
    }

    Word date_word(const Date& d) {
        std::string surface;
        if (rng_.chance(0.5)) {
            surface = fmt::format("{:02}/{:02}/{:04}", d.day, d.month, d.year);
        } else {
            auto m = surfaces().find(kMonths[d.month - 1]);
            std::string month = m != surfaces().end() ? m->second : kMonths[d.month - 1];
            surface = fmt::format("{} {} {}", d.day == 1 ? "1er" : std::to_string(d.day), month, d.year);
        }
        return {"<date>", surface, {}};
    }

    Sentence tumor(const PatientValues& v) {
        auto s = sentence("mise en evidence de");
        s.push_back(mention("tumeur"));
        append(s, "de");
        if (v.size_in_cm)
            s.push_back({fmt::format("{},{}", v.size_mm / 10, v.size_mm % 10), fmt::format("{},{}", v.size_mm / 10, v.size_mm % 10), {}});
        else
            s.push_back(word(std::to_string(v.size_mm)));
        append(s, v.size_in_cm ? "cm du sein" : "mm du sein");
        append(s, v.left ? "gauche" : "droit");
        return s;
    }

    Sentence carcinoma(const PatientValues& v) {
        auto s = sentence("diagnostic de");
        s.push_back(mention("carcinome"));
        append(s, "de type");
        append(s, kSubtypeWords[v.subtype]);
        append(s, v.in_situ ? "in situ" : "infiltrant");
        return s;
    }

    Sentence grade(std::size_t g) {
        auto s = sentence("score sbr de");
        s.push_back(mention("grade"));
        append(s, std::to_string(g + 1));
        return s;
    }

    Sentence receptors(const PatientValues& v) {
        auto s = sentence("statut de");
        s.push_back(mention("re"));
        append(s, v.er ? "positif et de" : "negatif et de");
        s.push_back(mention("rp"));
        append(s, v.pr ? "positif et de" : "negatif et de");
        s.push_back(mention("her2"));
        append(s, v.her2 ? "positif" : "negatif");
        return s;
    }

    Sentence ki67(const PatientValues& v) {
        auto s = sentence("taux de");
        s.push_back(mention("ki67"));
        append(s, std::to_string(v.ki67));
        s.push_back({"", "%", {}});
        return s;
    }

    Sentence nodes(const PatientValues& v) {
        auto s = sentence("nombre de");
        s.push_back(mention("ganglions"));
        append(s, fmt::format("{} envahis sur {}", v.nodes, v.nodes_examined));
        return s;
    }

    Sentence surgery(const PatientValues& v, std::string_view lead) {
        auto s = sentence(lead);
        switch (v.surgery) {
            case 0:
                s.push_back(mention("mastectomie"));
                append(s, "partielle");
                break;
            case 1:
                s.push_back(mention("mastectomie"));
                append(s, "et de curage axillaire");
                break;
            default:
                append(s, "tumorectomie et de biopsie ganglion sentinelle");
                break;
        }
        return s;
    }

    std::optional<Sentence> adjuvant(const PatientValues& v) {
        auto s = sentence("proposition de");
        switch (v.adjuvant) {
            case 0:
                s.push_back(mention("chimiotherapie"));
                append(s, "et de");
                s.push_back(mention("radiotherapie"));
                append(s, "de consolidation");
                return s;
            case 1:
                s.push_back(mention("radiotherapie"));
                append(s, "et de surveillance");
                return s;
            default:
                return std::nullopt;
        }
    }

    Sentence metastasis(const PatientValues& v) {
        if (!v.metastasis) return sentence(rng_.chance(0.6) ? "pas de metastase" : "absence de metastase");
        return sentence(rng_.chance(0.5) ? "presence de metastase osseuse" : "presence de metastase hepatique");
    }

    Sentence sterilet() {
        auto s = sentence("porteuse de");
        s.push_back(mention("sterilet"));
        append(s, "de type levonorgestrel");
        return s;
    }

    Doc meeting_note(const std::string& pid, const std::string& id, const Date& date, const PatientValues& v,
                     std::size_t grade_index, const std::set<std::string>& omitted, bool with_sterilet,
                     const PlantedPhrase* phrase) {
        Doc d{id, pid, SourceType::MeetingNote, date, {}};
        Section motif{"MOTIF", {}};
        auto s = sentence("reunion de concertation pluridisciplinaire du");
        s.push_back(date_word(date));
        motif.sentences.push_back(std::move(s));
        motif.sentences.push_back(sentence(fmt::format("patiente de {} ans", v.age)));
        if (rng_.chance(cfg_.biopsy_mention_rate)) {
            auto b = sentence("diagnostic sur biopsie du");
            b.push_back(date_word(add_days(date, -rng_.range(10, 40))));
            motif.sentences.push_back(std::move(b));
        }
        if (with_sterilet) motif.sentences.push_back(sterilet());
        if (phrase) {
            auto p = sentence("a noter");
            for (const auto& t : phrase->tokens) p.push_back(word(t));
            motif.sentences.push_back(std::move(p));
        }

        Section histo{"HISTOLOGIE", {}};
        if (!omitted.contains("tumor_size")) histo.sentences.push_back(tumor(v));
        histo.sentences.push_back(carcinoma(v));
        histo.sentences.push_back(grade(grade_index));
        histo.sentences.push_back(receptors(v));
        if (!omitted.contains("ki67")) histo.sentences.push_back(ki67(v));
        if (!omitted.contains("nodes")) histo.sentences.push_back(nodes(v));
        rng_.shuffle(histo.sentences);

        Section concl{"CONCLUSION", {}};
        concl.sentences.push_back(surgery(v, "indication de"));
        if (auto a = adjuvant(v)) concl.sentences.push_back(std::move(*a));
        rng_.shuffle(concl.sentences);
        // Last, so the negation window after the mention stays inside this sentence.
        concl.sentences.push_back(metastasis(v));

        d.sections = {std::move(motif), std::move(histo), std::move(concl)};
        return d;
    }

    void add_split(std::vector<Sentence>& out, const PatientValues& v, const std::set<std::string>& here) {
        if (here.contains("tumor_size")) out.push_back(tumor(v));
        if (here.contains("ki67")) out.push_back(ki67(v));
        if (here.contains("nodes")) out.push_back(nodes(v));
    }

    Doc hospitalization_letter(const std::string& pid, const Date& date, const PatientValues& v,
                               const std::set<std::string>& here) {
        Doc d{pid + "-hl", pid, SourceType::HospitalizationLetter, date, {}};
        Section body{"", {}};
        auto s = sentence("compte rendu d hospitalisation du");
        s[2].surface = "d'";
        s.push_back(date_word(date));
        body.sentences.push_back(std::move(s));
        body.sentences.push_back(surgery(v, "patiente hospitalisee pour realisation de"));
        std::vector<Sentence> facts;
        add_split(facts, v, here);
        if (rng_.chance(0.5)) facts.push_back(receptors(v));
        if (rng_.chance(0.4)) facts.push_back(grade(v.grade));
        rng_.shuffle(facts);
        for (auto& f : facts) body.sentences.push_back(std::move(f));
        body.sentences.push_back(sentence("suites operatoires simples"));
        d.sections = {std::move(body)};
        return d;
    }

    Doc discharge_letter(const std::string& pid, const Date& date, const PatientValues& v,
                         const std::set<std::string>& here, bool with_sterilet) {
        Doc d{pid + "-dl", pid, SourceType::DischargeLetter, date, {}};
        Section body{"", {}};
        auto s = sentence("lettre de sortie du");
        s.push_back(date_word(date));
        body.sentences.push_back(std::move(s));
        std::vector<Sentence> facts;
        add_split(facts, v, here);
        if (auto a = adjuvant(v)) facts.push_back(std::move(*a));
        if (with_sterilet) facts.push_back(sterilet());
        facts.push_back(sentence("bilan d extension negatif"));
        facts.back()[1].surface = "d'";
        rng_.shuffle(facts);
        for (auto& f : facts) body.sentences.push_back(std::move(f));
        d.sections = {std::move(body)};
        return d;
    }

    PatientValues sample_patient() {
        const auto& dist = cfg_.distributions;
        PatientValues v;
        v.grade = rng_.weighted(dist.grade);
        v.er = rng_.chance(dist.er_positive);
        v.pr = rng_.chance(dist.pr_positive);
        v.her2 = rng_.chance(dist.her2_positive);
        v.ki67 = rng_.range(5, 60);
        v.nodes = rng_.chance(0.5) ? 0 : rng_.range(1, 6);
        v.nodes_examined = rng_.range(std::max(v.nodes, 2), 20);
        v.size_in_cm = rng_.chance(dist.size_in_cm);
        v.size_mm = rng_.range(5, 60);
        v.in_situ = rng_.chance(dist.in_situ);
        v.subtype = rng_.weighted(dist.subtype);
        v.metastasis = rng_.chance(dist.metastasis);
        v.sterilet = rng_.chance(dist.sterilet);
        v.age = rng_.range(30, 88);
        v.left = rng_.chance(0.5);
        v.surgery = rng_.weighted({0.35, 0.35, 0.30});
        v.adjuvant = rng_.weighted({0.5, 0.25, 0.25});
        return v;
    }

    void plant_typos(std::vector<Doc>& docs, std::vector<json>& manifest);

    const SynthConfig& cfg_;
    Rng rng_;
    std::map<std::string, std::vector<const PlantedSynonym*>> variants_;
    std::map<std::string, std::string> canonical_;
};

bool alpha(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

// True when a and b differ by exactly one insertion, deletion or substitution.
bool one_edit_apart(std::string_view a, std::string_view b) {
    if (a.size() > b.size()) std::swap(a, b);
    if (b.size() - a.size() > 1) return false;
    std::size_t i = 0;
    while (i < a.size() && a[i] == b[i]) ++i;
    if (a.size() == b.size()) return i < a.size() && a.substr(i + 1) == b.substr(i + 1);
    return a.substr(i) == b.substr(i + 1);
}

template <typename Fn>
void for_each_word(std::vector<Doc>& docs, Fn&& fn) {
    for (auto& d : docs) {
        std::size_t index = 0;
        for (auto& sec : d.sections)
            for (auto& s : sec.sentences)
                for (auto& w : s) {
                    if (w.norm.empty()) continue;
                    fn(d, w, index);
                    ++index;
                }
    }
}

void Generator::plant_typos(std::vector<Doc>& docs, std::vector<json>& manifest) {
    std::map<std::string, std::uint64_t> counts;
    for_each_word(docs, [&](Doc&, Word& w, std::size_t) { ++counts[w.norm]; });

    // Anything near the frequency cut-off can compete as a correction target.
    std::vector<std::string> competitors;
    for (const auto& [w, c] : counts)
        if (static_cast<double>(c) >= 0.8 * static_cast<double>(cfg_.frequent_min)) competitors.push_back(w);
    auto eligible = [&](const std::string& w) {
        auto c = counts[w];
        return alpha(w) && w.size() >= cfg_.min_length &&
               static_cast<double>(c) >= 1.25 * static_cast<double>(cfg_.frequent_min);
    };

    std::map<std::string, std::string> typo_of;      // typo -> original
    std::map<std::string, std::uint64_t> typo_uses;
    std::map<std::string, std::uint64_t> typos_per_word;
    std::uint64_t eligible_tokens = 0, planted = 0;

    auto valid_typo = [&](const std::string& t, const std::string& original) {
        if (t.size() < cfg_.min_length || counts.contains(t)) return false;
        if (auto it = typo_of.find(t); it != typo_of.end() && it->second != original) return false;
        if (typo_uses[t] + 1 >= cfg_.rare_max) return false;
        for (const auto& c : competitors)
            if (c != original && one_edit_apart(t, c)) return false;
        return true;
    };

    for_each_word(docs, [&](Doc& d, Word& w, std::size_t index) {
        if (!eligible(w.norm)) return;
        ++eligible_tokens;
        if (!rng_.chance(cfg_.typo_rate)) return;
        auto original = w.norm;
        if (counts[original] - typos_per_word[original] <= static_cast<std::uint64_t>(1.1 * static_cast<double>(cfg_.frequent_min)))
            return;
        for (int attempt = 0; attempt < 20; ++attempt) {
            std::string t = original;
            auto pos = rng_.below(t.size());
            auto letter = static_cast<char>('a' + rng_.below(26));
            const char* op = "substitute";
            switch (rng_.below(3)) {
                case 0:
                    if (t[pos] == letter) continue;
                    t[pos] = letter;
                    break;
                case 1:
                    t.insert(t.begin() + static_cast<std::ptrdiff_t>(rng_.below(t.size() + 1)), letter);
                    op = "insert";
                    break;
                default:
                    t.erase(pos, 1);
                    op = "delete";
                    break;
            }
            if (!valid_typo(t, original)) continue;
            typo_of[t] = original;
            ++typo_uses[t];
            ++typos_per_word[original];
            ++planted;
            w.norm = t;
            w.surface = t;
            manifest.push_back({{"kind", "typo"}, {"original", original}, {"typo", t}, {"edit", op},
                                {"doc_id", d.doc_id}, {"token_index", index}});
            return;
        }
    });

    // Controls: deletions that leave a word shorter than min_length.
    std::vector<std::pair<Doc*, Word*>> short_sites;
    std::vector<std::size_t> short_index;
    for_each_word(docs, [&](Doc& d, Word& w, std::size_t index) {
        if (alpha(w.norm) && w.norm.size() == cfg_.min_length && counts[w.norm] >= cfg_.frequent_min) {
            short_sites.emplace_back(&d, &w);
            short_index.push_back(index);
        }
    });
    std::vector<std::size_t> order(short_sites.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng_.shuffle(order);
    std::size_t made = 0;
    for (std::size_t k = 0; k < order.size() && made < cfg_.short_typos; ++k) {
        auto [d, w] = short_sites[order[k]];
        auto t = w->norm;
        t.erase(rng_.below(t.size()), 1);
        if (counts.contains(t) || typo_of.contains(t) || typo_uses[t] + 1 >= cfg_.rare_max) continue;
        typo_of[t] = w->norm;
        ++typo_uses[t];
        manifest.push_back({{"kind", "short_typo"}, {"original", w->norm}, {"typo", t}, {"doc_id", d->doc_id},
                            {"token_index", short_index[order[k]]}});
        w->norm = t;
        w->surface = t;
        ++made;
    }

    manifest.push_back({{"kind", "typo_summary"},
                        {"eligible_tokens", eligible_tokens},
                        {"typos", planted},
                        {"typo_rate", cfg_.typo_rate},
                        {"realized_rate", eligible_tokens ? static_cast<double>(planted) / static_cast<double>(eligible_tokens) : 0.0}});
}

std::string render(const Doc& d) {
    std::string out;
    for (const auto& sec : d.sections) {
        if (sec.sentences.empty()) continue;
        if (!out.empty()) out += "\n\n";
        if (!sec.heading.empty()) out += sec.heading + ":\n";
        std::string line;
        for (const auto& s : sec.sentences) {
            if (!line.empty()) line += ' ';
            std::string text;
            for (const auto& w : s) {
                if (!text.empty() && text.back() != '\'') text += ' ';
                text += w.surface;
            }
            if (!text.empty() && text[0] >= 'a' && text[0] <= 'z') text[0] = static_cast<char>(text[0] - 'a' + 'A');
            line += text + '.';
        }
        out += line;
    }
    return out;
}

SynthOutput Generator::run() {
    cfg_.validate();
    SynthOutput out;
    out.gold.header = {"patient_id"};
    for (const auto& i : gold_indicators()) out.gold.header.push_back(i);

    // Planted phrase slots: at most one per patient's final meeting note.
    std::vector<const PlantedPhrase*> phrase_slot(cfg_.n_patients, nullptr);
    {
        std::vector<std::size_t> order(cfg_.n_patients);
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng_.shuffle(order);
        std::size_t k = 0;
        for (const auto* list : {&cfg_.phrases, &cfg_.controls})
            for (const auto& p : *list)
                for (std::size_t c = 0; c < p.count; ++c) phrase_slot[order[k++]] = &p;
    }

    std::vector<Doc> docs;
    const Date first{2005, 1, 1};
    for (std::size_t p = 0; p < cfg_.n_patients; ++p) {
        auto pid = fmt::format("p{:04}", p + 1);
        auto v = sample_patient();
        auto d0 = add_days(first, rng_.range(0, 12 * 365));

        bool has_hl = rng_.chance(cfg_.hospitalization_rate);
        bool has_dl = rng_.chance(cfg_.discharge_rate);
        std::set<std::string> omitted, in_hl, in_dl;
        for (const char* ind : {"tumor_size", "nodes", "ki67"}) {
            if (!rng_.chance(cfg_.split_rate)) continue;
            omitted.insert(ind);
            const char* where = has_dl ? "discharge_letter" : has_hl ? "hospitalization_letter" : "nowhere";
            (has_dl ? in_dl : in_hl).insert(ind);
            out.manifest.push_back({{"kind", "split"}, {"patient_id", pid}, {"indicator", ind}, {"source", where}});
        }
        bool sterilet_note = v.sterilet && (!has_dl || rng_.chance(0.7));
        bool sterilet_letter = v.sterilet && has_dl && (!sterilet_note || rng_.chance(0.5));

        if (rng_.chance(cfg_.second_note_rate)) {
            auto other = (v.grade + 1 + rng_.below(2)) % 3;
            docs.push_back(meeting_note(pid, pid + "-mn1", add_days(d0, -rng_.range(7, 30)), v, other, omitted,
                                        sterilet_note, nullptr));
            out.manifest.push_back({{"kind", "conflict"}, {"patient_id", pid}, {"doc_id", pid + "-mn1"},
                                    {"indicator", "sbr_grade"}, {"value", kGradeLabels[other]}});
        }
        docs.push_back(meeting_note(pid, pid + "-mn2", d0, v, v.grade, omitted, sterilet_note, phrase_slot[p]));
        auto hl_date = add_days(d0, rng_.range(10, 40));
        if (has_hl) docs.push_back(hospitalization_letter(pid, hl_date, v, in_hl));
        if (has_dl) docs.push_back(discharge_letter(pid, add_days(hl_date, rng_.range(3, 15)), v, in_dl, sterilet_letter));

        out.gold.rows.push_back({pid, kGradeLabels[v.grade], v.er ? "pos" : "neg", v.pr ? "pos" : "neg",
                                 v.her2 ? "pos" : "neg", std::to_string(v.ki67), std::to_string(v.nodes),
                                 std::to_string(v.size_mm), v.in_situ ? "in_situ" : "invasive",
                                 kSubtypeLabels[v.subtype], v.metastasis ? "yes" : "no"});
    }

    // Concept mentions, recorded before typos so the intended surface is kept.
    for_each_word(docs, [&](Doc& d, Word& w, std::size_t index) {
        if (w.concept_id.empty()) return;
        out.manifest.push_back({{"kind", "mention"}, {"concept", w.concept_id}, {"surface", w.norm},
                                {"doc_id", d.doc_id}, {"token_index", index}});
    });

    plant_typos(docs, out.manifest);

    // Realized counts over the emitted token streams.
    std::vector<std::vector<std::string>> streams;
    for (auto& d : docs) {
        std::vector<std::string> toks;
        for (const auto& sec : d.sections)
            for (const auto& s : sec.sentences)
                for (const auto& w : s)
                    if (!w.norm.empty()) toks.push_back(w.norm);
        streams.push_back(std::move(toks));
    }
    auto ngram_count = [&](const std::vector<std::string>& g) {
        std::size_t n = 0;
        for (const auto& t : streams)
            for (std::size_t i = 0; i + g.size() <= t.size(); ++i)
                if (std::equal(g.begin(), g.end(), t.begin() + static_cast<std::ptrdiff_t>(i))) ++n;
        return n;
    };
    std::map<std::string, std::size_t> unigram;
    for (const auto& t : streams)
        for (const auto& w : t) ++unigram[w];

    for (const auto& s : cfg_.synonyms)
        out.manifest.push_back({{"kind", "synonym"}, {"concept", s.concept_id}, {"canonical", s.canonical},
                                {"variant", s.variant}, {"count", unigram[s.variant]},
                                {"canonical_count", unigram[s.canonical]}});
    const std::vector<std::vector<std::string>> template_phrases = {
        {"in", "situ"}, {"mastectomie", "partielle"}, {"curage", "axillaire"}, {"ganglion", "sentinelle"},
        {"biopsie", "ganglion", "sentinelle"}};
    for (const auto& g : template_phrases)
        out.manifest.push_back({{"kind", "phrase"}, {"tokens", g}, {"count", ngram_count(g)}, {"origin", "template"}});
    for (const auto& p : cfg_.phrases)
        out.manifest.push_back({{"kind", "phrase"}, {"tokens", p.tokens}, {"count", ngram_count(p.tokens)}, {"origin", "free"}});
    for (const auto& p : cfg_.controls)
        out.manifest.push_back({{"kind", "control_pair"}, {"tokens", p.tokens}, {"count", ngram_count(p.tokens)}});

    for (const auto& d : docs)
        out.corpus.push_back({d.doc_id, d.patient_id, std::string(to_string(d.source)), d.date.iso(), render(d)});
    return out;
}

}  // namespace

SynthOutput generate_corpus(const SynthConfig& cfg) { return Generator(cfg).run(); }

void write_output(const SynthOutput& out, const SynthPaths& paths, const io::Provenance* prov) {
    io::AtomicFile corpus(paths.corpus), gold(paths.gold), manifest(paths.manifest);
    if (prov) {
        corpus.stream() << prov->json_header().dump() << '\n';
        gold.stream() << prov->comment_line() << '\n';
        manifest.stream() << prov->json_header().dump() << '\n';
    }
    for (const auto& d : out.corpus)
        corpus.stream() << json{{"doc_id", d.doc_id},
                                {"patient_id", d.patient_id},
                                {"source_type", d.source_type},
                                {"authored_date", d.authored_date},
                                {"text", d.text}}
                               .dump()
                        << '\n';
    gold.stream() << io::csv_join(out.gold.header) << '\n';
    for (const auto& r : out.gold.rows) gold.stream() << io::csv_join(r) << '\n';
    for (const auto& m : out.manifest) manifest.stream() << m.dump() << '\n';
    corpus.commit();
    gold.commit();
    manifest.commit();
}

}  // namespace clinistruct::synthgen
