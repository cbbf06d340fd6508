#include "textclass/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "textclass/rng.hpp"

namespace textclass::corpus {

int DocumentSet::label_index(const std::string& name) const {
    for (size_t i = 0; i < label_names.size(); ++i)
        if (label_names[i] == name) return static_cast<int>(i);
    return -1;
}

std::vector<int> DocumentSet::label_ids() const {
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        if (!r.label) throw LabelError("record " + std::to_string(r.id) + " has no label");
        int idx = label_index(*r.label);
        if (idx < 0) throw LabelError("label '" + *r.label + "' not in label set");
        out.push_back(idx);
    }
    return out;
}

int CsvTable::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

namespace {

// One record, possibly spanning several physical lines when quoted fields
// contain newlines. Returns false at end of input.
bool parse_record(const std::string& s, size_t& pos, std::vector<std::string>& fields) {
    fields.clear();
    if (pos >= s.size()) return false;
    std::string field;
    bool quoted = false;
    while (pos < s.size()) {
        char c = s[pos];
        if (quoted) {
            if (c == '"') {
                if (pos + 1 < s.size() && s[pos + 1] == '"') {
                    field += '"';
                    pos += 2;
                } else {
                    quoted = false;
                    ++pos;
                }
            } else {
                field += c;
                ++pos;
            }
        } else if (c == '"') {
            if (!field.empty())
                throw ParseError("CSV: quote inside unquoted field at offset " +
                                 std::to_string(pos));
            quoted = true;
            ++pos;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            ++pos;
        } else if (c == '\r' && pos + 1 < s.size() && s[pos + 1] == '\n') {
            pos += 2;
            fields.push_back(std::move(field));
            return true;
        } else if (c == '\n') {
            ++pos;
            fields.push_back(std::move(field));
            return true;
        } else {
            field += c;
            ++pos;
        }
    }
    if (quoted) throw ParseError("CSV: unterminated quoted field");
    fields.push_back(std::move(field));
    return true;
}

std::string quote_field(const std::string& f) {
    bool need = f.find_first_of(",\"\n\r") != std::string::npos;
    if (!need) return f;
    std::string out = "\"";
    for (char c : f) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

int64_t parse_int_field(const std::string& s, const std::string& col) {
    try {
        size_t used = 0;
        int64_t v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError("column " + col + ": '" + s + "' is not an integer");
    }
}

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isspace(c); });
}

void check_invariants(const DocumentSet& set) {
    std::map<int64_t, size_t> seen;
    for (size_t i = 0; i < set.records.size(); ++i) {
        const auto& r = set.records[i];
        auto [it, fresh] = seen.emplace(r.id, i);
        if (!fresh)
            throw SchemaError("duplicate record id " + std::to_string(r.id));
        if (blank(r.text))
            throw SchemaError("record " + std::to_string(r.id) + ": empty text");
    }
}

}  // namespace

CsvTable parse_csv(const std::string& content) {
    CsvTable t;
    size_t pos = 0;
    if (!parse_record(content, pos, t.header))
        throw SchemaError("CSV: empty input, header row required");
    std::vector<std::string> fields;
    size_t line = 1;
    while (parse_record(content, pos, fields)) {
        ++line;
        if (fields.size() == 1 && fields[0].empty() && pos >= content.size()) break;
        if (fields.size() != t.header.size())
            throw ParseError("CSV record " + std::to_string(line) + ": " +
                             std::to_string(fields.size()) + " fields, header has " +
                             std::to_string(t.header.size()));
        t.rows.push_back(fields);
    }
    return t;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

std::string format_csv(const CsvTable& table) {
    std::ostringstream out;
    auto emit = [&out](const std::vector<std::string>& row) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << quote_field(row[i]);
        }
        out << '\n';
    };
    emit(table.header);
    for (const auto& r : table.rows) emit(r);
    return out.str();
}

void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << format_csv(table);
    if (!out) throw IoError("write failed: " + path);
}

DocumentSet load_nhtsa_csv(const std::string& path, const std::string& language) {
    if (language != "en" && language != "de")
        throw ConfigError("NHTSA language must be 'en' or 'de', got '" + language + "'");
    CsvTable t = read_csv(path);
    const std::string text_col = language == "en" ? "SUMMARY_EN" : "SUMMARY_GE";
    for (const char* col : {"SCASEID", "NUMTOTV", "INJSEVA", "INJSEVB"})
        if (t.column(col) < 0) throw SchemaError(std::string("NHTSA: missing column ") + col);
    if (t.column(text_col) < 0) throw SchemaError("NHTSA: missing column " + text_col);

    int c_id = t.column("SCASEID");
    int c_text = t.column(text_col);
    int c_numtotv = t.column("NUMTOTV");
    int c_seva = t.column("INJSEVA");
    int c_sevb = t.column("INJSEVB");
    std::vector<std::pair<std::string, int>> weather;
    for (int i = 1; i <= 8; ++i) {
        std::string name = "WHEATHER" + std::to_string(i);
        int c = t.column(name);
        if (c >= 0) weather.emplace_back(name, c);
    }

    DocumentSet set;
    set.schema = Schema::NHTSA;
    set.label_names = {"1", "2", "3+"};
    set.records.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        DocumentRecord r;
        r.id = parse_int_field(row[c_id], "SCASEID");
        r.text = row[c_text];
        r.language = language;
        r.extra["NUMTOTV"] = parse_int_field(row[c_numtotv], "NUMTOTV");
        r.extra["INJSEVA"] = parse_int_field(row[c_seva], "INJSEVA");
        r.extra["INJSEVB"] = parse_int_field(row[c_sevb], "INJSEVB");
        for (const auto& [name, c] : weather) r.extra[name] = parse_int_field(row[c], name);
        r.label = bucket_numtotv(r.extra["NUMTOTV"]).name;
        set.records.push_back(std::move(r));
    }
    check_invariants(set);
    return set;
}

const std::vector<std::string> kLgpifHazards = {
    "Fire",  "Lightning", "Hail",     "Wind",         "WaterW",
    "WaterNW", "Vehicle", "Vandalism", "Misc"};

DocumentSet load_lgpif_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    int c_text = t.column("DESCRIPTION");
    if (c_text < 0) throw SchemaError("LGPIF: missing column DESCRIPTION");
    std::vector<int> hazard_cols;
    for (const auto& h : kLgpifHazards) {
        int c = t.column(h);
        if (c < 0) throw SchemaError("LGPIF: missing hazard column " + h);
        hazard_cols.push_back(c);
    }
    int c_id = t.column("ID");

    DocumentSet set;
    set.schema = Schema::LGPIF;
    set.label_names = kLgpifHazards;
    set.records.reserve(t.rows.size());
    int64_t next_id = 1;
    size_t line = 1;
    for (const auto& row : t.rows) {
        ++line;
        DocumentRecord r;
        r.id = c_id >= 0 ? parse_int_field(row[c_id], "ID") : next_id;
        ++next_id;
        r.language = "en";

        int hot = -1;
        for (size_t h = 0; h < hazard_cols.size(); ++h) {
            int64_t v = parse_int_field(row[hazard_cols[h]], kLgpifHazards[h]);
            if (v != 0 && v != 1)
                throw SchemaError("LGPIF row " + std::to_string(line) + ": hazard " +
                                  kLgpifHazards[h] + " must be 0 or 1");
            if (v == 1) {
                if (hot >= 0)
                    throw LabelError("LGPIF row " + std::to_string(line) +
                                     ": multiple hazard indicators set");
                hot = static_cast<int>(h);
            }
        }
        if (hot < 0)
            throw LabelError("LGPIF row " + std::to_string(line) + ": no hazard indicator set");
        r.label = kLgpifHazards[hot];

        // Leading "dollars.cents " amount, if present, moves into extra.
        std::string text = row[c_text];
        size_t i = 0;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
        if (i > 0 && i + 2 < text.size() && text[i] == '.' &&
            std::isdigit(static_cast<unsigned char>(text[i + 1])) &&
            std::isdigit(static_cast<unsigned char>(text[i + 2])) &&
            (i + 3 == text.size() || text[i + 3] == ' ')) {
            int64_t dollars = std::stoll(text.substr(0, i));
            int64_t cents = std::stoll(text.substr(i + 1, 2));
            r.extra["AMOUNT_CENTS"] = dollars * 100 + cents;
            size_t start = i + 3;
            while (start < text.size() && text[start] == ' ') ++start;
            text = text.substr(std::min(start, text.size()));
        }
        r.text = text;
        set.records.push_back(std::move(r));
    }
    check_invariants(set);
    return set;
}

ClassLabel bucket_numtotv(int64_t n) {
    if (n < 1) throw DomainError("NUMTOTV must be >= 1, got " + std::to_string(n));
    if (n == 1) return {"1", 0};
    if (n == 2) return {"2", 1};
    return {"3+", 2};
}

std::pair<DocumentSet, DocumentSet> split(const DocumentSet& set, double train_fraction,
                                          uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw DomainError("train_fraction must lie in (0, 1)");
    if (set.records.empty()) throw DomainError("split: empty document set");
    std::vector<size_t> order(set.records.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitMix64 rng(seed);
    shuffle(order, rng);
    size_t n_train = static_cast<size_t>(set.records.size() * train_fraction);

    DocumentSet train, test;
    train.schema = test.schema = set.schema;
    train.label_names = test.label_names = set.label_names;
    for (size_t i = 0; i < order.size(); ++i)
        (i < n_train ? train : test).records.push_back(set.records[order[i]]);
    return {std::move(train), std::move(test)};
}

const std::vector<std::string> kDefaultFillerWords = {
    "the",  "a",    "and",  "then", "with", "near", "very", "also",
    "some", "more", "such", "that", "this", "into", "over", "while"};

DocumentSet gen_synthetic(const SyntheticSpec& spec, size_t n, uint64_t seed) {
    if (spec.classes.size() < 2) throw DomainError("gen_synthetic: need at least 2 classes");
    if (spec.filler_min < 0 || spec.filler_max < spec.filler_min)
        throw ConfigError("gen_synthetic: bad filler range");
    const auto& fillers = spec.filler_words.empty() ? kDefaultFillerWords : spec.filler_words;
    for (const auto& cls : spec.classes) {
        if (cls.templates.empty())
            throw DomainError("gen_synthetic: class '" + cls.label + "' has no templates");
        for (const auto& t : cls.templates) {
            std::istringstream ss(t);
            std::string w;
            while (ss >> w)
                if (w != "*" &&
                    std::find(fillers.begin(), fillers.end(), w) != fillers.end())
                    throw ConfigError("gen_synthetic: template word '" + w +
                                      "' collides with a filler word");
        }
    }

    SplitMix64 rng(seed);
    DocumentSet set;
    set.schema = Schema::GENERIC;
    for (const auto& cls : spec.classes) set.label_names.push_back(cls.label);
    set.records.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const auto& cls = spec.classes[i % spec.classes.size()];
        const auto& tpl = cls.templates[(i / spec.classes.size()) % cls.templates.size()];
        std::ostringstream text;
        std::istringstream ss(tpl);
        std::string w;
        bool first = true;
        while (ss >> w) {
            if (w == "*") {
                int run = spec.filler_min;
                if (spec.filler_max > spec.filler_min)
                    run += static_cast<int>(rng.next_below(
                        static_cast<uint64_t>(spec.filler_max - spec.filler_min + 1)));
                for (int k = 0; k < run; ++k) {
                    if (!first) text << ' ';
                    first = false;
                    text << fillers[rng.next_below(fillers.size())];
                }
            } else {
                if (!first) text << ' ';
                first = false;
                text << w;
            }
        }
        DocumentRecord r;
        r.id = static_cast<int64_t>(i + 1);
        r.text = text.str();
        r.label = cls.label;
        r.language = "en";
        set.records.push_back(std::move(r));
    }
    return set;
}

CsvTable to_csv(const DocumentSet& set) {
    std::vector<std::string> extra_cols;
    for (const auto& r : set.records)
        for (const auto& [k, _] : r.extra)
            if (std::find(extra_cols.begin(), extra_cols.end(), k) == extra_cols.end())
                extra_cols.push_back(k);
    std::sort(extra_cols.begin(), extra_cols.end());

    CsvTable t;
    t.header = {"id", "label", "language", "text"};
    t.header.insert(t.header.end(), extra_cols.begin(), extra_cols.end());
    for (const auto& r : set.records) {
        std::vector<std::string> row = {std::to_string(r.id), r.label.value_or(""),
                                        r.language.value_or(""), r.text};
        for (const auto& c : extra_cols) {
            auto it = r.extra.find(c);
            row.push_back(it == r.extra.end() ? "" : std::to_string(it->second));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

DocumentSet from_csv(const CsvTable& t) {
    for (const char* col : {"id", "label", "language", "text"})
        if (t.column(col) < 0)
            throw SchemaError(std::string("generic corpus: missing column ") + col);
    int c_id = t.column("id"), c_label = t.column("label");
    int c_lang = t.column("language"), c_text = t.column("text");
    std::vector<std::pair<std::string, int>> extra_cols;
    for (size_t i = 0; i < t.header.size(); ++i) {
        int ci = static_cast<int>(i);
        if (ci != c_id && ci != c_label && ci != c_lang && ci != c_text)
            extra_cols.emplace_back(t.header[i], ci);
    }

    DocumentSet set;
    set.schema = Schema::GENERIC;
    for (const auto& row : t.rows) {
        DocumentRecord r;
        r.id = parse_int_field(row[c_id], "id");
        if (!row[c_label].empty()) {
            r.label = row[c_label];
            if (set.label_index(row[c_label]) < 0) set.label_names.push_back(row[c_label]);
        }
        if (!row[c_lang].empty()) r.language = row[c_lang];
        r.text = row[c_text];
        for (const auto& [name, c] : extra_cols)
            if (!row[c].empty()) r.extra[name] = parse_int_field(row[c], name);
        set.records.push_back(std::move(r));
    }
    return set;
}

}  // namespace textclass::corpus
