#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "textclass/errors.hpp"

namespace textclass::corpus {

enum class Schema { NHTSA, LGPIF, GENERIC };

struct DocumentRecord {
    int64_t id = 0;
    std::string text;
    std::optional<std::string> label;
    std::optional<std::string> language;  // "en" / "de"
    std::map<std::string, int64_t> extra;
};

struct DocumentSet {
    std::vector<DocumentRecord> records;
    Schema schema = Schema::GENERIC;
    std::vector<std::string> label_names;

    size_t size() const { return records.size(); }
    // Index of a label name, -1 if absent.
    int label_index(const std::string& name) const;
    // Integer label per record; throws LabelError on a missing or unknown label.
    std::vector<int> label_ids() const;
};

struct ClassLabel {
    std::string name;
    int index = 0;
};

// Minimal RFC-4180 CSV: comma separated, double-quote quoting with ""
// escapes, UTF-8, mandatory header row. LF and CRLF both accepted.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& content);
void write_csv(const std::string& path, const CsvTable& table);
std::string format_csv(const CsvTable& table);

// NHTSA accident reports: SCASEID, NUMTOTV, INJSEVA, INJSEVB and the
// summary column for the requested language are required; WHEATHER1..8
// are picked up when present. Labels are not assigned here; see
// bucket_numtotv and the pipeline label rules.
DocumentSet load_nhtsa_csv(const std::string& path, const std::string& language = "en");

// LGPIF property claims: nine hazard indicator columns, exactly one of
// which must be 1 per row, plus a loss-description column. A leading
// decimal amount in the description is stripped into extra["AMOUNT_CENTS"].
DocumentSet load_lgpif_csv(const std::string& path);

extern const std::vector<std::string> kLgpifHazards;

// Number-of-vehicles label: 1 -> "1", 2 -> "2", n >= 3 -> "3+".
ClassLabel bucket_numtotv(int64_t n);

// Deterministic shuffle split. The shuffle is a Fisher-Yates walk driven by
// a SplitMix64 stream seeded with `seed`; the first floor(n * fraction)
// shuffled records form the training set.
std::pair<DocumentSet, DocumentSet> split(const DocumentSet& set, double train_fraction,
                                          uint64_t seed);

// Synthetic corpus generation. Each class owns one or more templates;
// every "*" in a template expands to a run of seeded filler words drawn
// from a fixed list disjoint from all template words, so the class is
// always recoverable from its keywords.
struct SyntheticClass {
    std::string label;
    std::vector<std::string> templates;
};

struct SyntheticSpec {
    std::vector<SyntheticClass> classes;
    std::vector<std::string> filler_words;  // empty -> built-in list
    int filler_min = 2;
    int filler_max = 4;
};

extern const std::vector<std::string> kDefaultFillerWords;

DocumentSet gen_synthetic(const SyntheticSpec& spec, size_t n, uint64_t seed);

// Round-trips a DocumentSet through the generic CSV layout
// (id,label,language,text + one column per extra field).
CsvTable to_csv(const DocumentSet& set);
DocumentSet from_csv(const CsvTable& table);

}  // namespace textclass::corpus
