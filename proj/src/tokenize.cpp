#include "textclass/tokenize.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace textclass::tokenize {

namespace {

// --- minimal UTF-8 handling, enough for Latin-script corpora ---

// Decodes the codepoint at byte offset i, advancing i. Malformed bytes
// decode as U+FFFD and advance by one so normalization stays total.
uint32_t decode(const std::string& s, size_t& i) {
    unsigned char c = s[i];
    if (c < 0x80) {
        ++i;
        return c;
    }
    int extra;
    uint32_t cp;
    if ((c & 0xE0) == 0xC0) { extra = 1; cp = c & 0x1F; }
    else if ((c & 0xF0) == 0xE0) { extra = 2; cp = c & 0x0F; }
    else if ((c & 0xF8) == 0xF0) { extra = 3; cp = c & 0x07; }
    else { ++i; return 0xFFFD; }
    if (i + extra >= s.size()) { ++i; return 0xFFFD; }
    for (int k = 1; k <= extra; ++k) {
        unsigned char cc = s[i + k];
        if ((cc & 0xC0) != 0x80) { ++i; return 0xFFFD; }
        cp = (cp << 6) | (cc & 0x3F);
    }
    i += extra + 1;
    return cp;
}

void encode(uint32_t cp, std::string& out) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

bool is_space_cp(uint32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f' ||
           cp == 0xA0;
}

bool is_control_cp(uint32_t cp) {
    return cp < 0x20 || cp == 0x7F || (cp >= 0x80 && cp <= 0x9F);
}

uint32_t lower_cp(uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    // Latin-1: À..Þ map +32, except the multiplication sign.
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
    // Latin Extended-A: mostly upper/lower pairs on even/odd codepoints.
    if (cp >= 0x100 && cp <= 0x137) return (cp % 2 == 0) ? cp + 1 : cp;
    if (cp >= 0x139 && cp <= 0x148) return (cp % 2 == 1) ? cp + 1 : cp;
    if (cp >= 0x14A && cp <= 0x177) return (cp % 2 == 0) ? cp + 1 : cp;
    if (cp == 0x178) return 0xFF;  // Ÿ
    if (cp >= 0x179 && cp <= 0x17E) return (cp % 2 == 1) ? cp + 1 : cp;
    return cp;
}

bool is_word_cp(uint32_t cp) {
    if ((cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z'))
        return true;
    if (cp == 0xB5) return true;  // micro sign
    if (cp >= 0xC0 && cp <= 0xFF) return cp != 0xD7 && cp != 0xF7;
    if (cp >= 0x100 && cp <= 0x24F) return true;  // Latin Extended-A/B
    return false;
}

std::vector<std::string> codepoints_of(const std::string& word) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < word.size()) {
        size_t start = i;
        decode(word, i);
        out.push_back(word.substr(start, i - start));
    }
    return out;
}

}  // namespace

std::string normalize(const std::string& text, bool lowercase) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    size_t i = 0;
    while (i < text.size()) {
        uint32_t cp = decode(text, i);
        if (is_space_cp(cp)) {
            pending_space = true;
            continue;
        }
        if (is_control_cp(cp)) continue;
        if (pending_space && !out.empty()) out += ' ';
        pending_space = false;
        encode(lowercase ? lower_cp(cp) : cp, out);
    }
    return out;
}

std::vector<std::string> word_tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    size_t i = 0;
    while (i < text.size()) {
        size_t start = i;
        uint32_t cp = decode(text, i);
        if (is_word_cp(cp)) {
            current += text.substr(start, i - start);
        } else {
            if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
            if (!is_space_cp(cp) && !is_control_cp(cp))
                tokens.push_back(text.substr(start, i - start));
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::vector<std::string> remove_stopwords(const std::vector<std::string>& tokens,
                                          const std::unordered_set<std::string>& stopwords) {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens)
        if (!stopwords.count(t)) out.push_back(t);
    return out;
}

std::unordered_set<std::string> load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open stopword file " + path);
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) words.insert(line);
    }
    return words;
}

const std::vector<std::string>& Vocabulary::special_tokens() {
    static const std::vector<std::string> specials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                                      "[MASK]"};
    return specials;
}

Vocabulary Vocabulary::with_specials() {
    Vocabulary v;
    for (const auto& s : special_tokens()) v.add(s);
    return v;
}

int Vocabulary::add(const std::string& token) {
    auto it = index.find(token);
    if (it != index.end()) return it->second;
    int id = static_cast<int>(tokens.size());
    tokens.push_back(token);
    index.emplace(token, id);
    return id;
}

int Vocabulary::id(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? -1 : it->second;
}

Vocabulary load_vocabulary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file " + path);
    Vocabulary v;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty())
            throw SchemaError("vocabulary line " + std::to_string(line_no) + " is empty");
        if (v.id(line) >= 0)
            throw SchemaError("vocabulary has duplicate token '" + line + "'");
        v.add(line);
        ++line_no;
    }
    const auto& specials = Vocabulary::special_tokens();
    if (v.size() < 6)
        throw SchemaError("vocabulary must hold the 5 specials plus at least one token");
    for (size_t i = 0; i < specials.size(); ++i)
        if (v.tokens[i] != specials[i])
            throw SchemaError("vocabulary line " + std::to_string(i) + " must be " + specials[i]);
    return v;
}

void save_vocabulary(const std::string& path, const Vocabulary& vocab) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& t : vocab.tokens) out << t << '\n';
    if (!out) throw IoError("write failed: " + path);
}

Vocabulary train_wordpiece(const std::vector<std::vector<std::string>>& corpus,
                           size_t target_vocab_size) {
    // Word frequencies over the whole corpus.
    std::map<std::string, int64_t> word_freq;
    for (const auto& doc : corpus)
        for (const auto& w : doc)
            if (!w.empty()) ++word_freq[w];
    if (word_freq.empty()) throw DomainError("train_wordpiece: empty corpus");

    // Alphabet: every character in word-initial and continuation form.
    std::vector<std::string> alphabet;
    for (const auto& [word, _] : word_freq)
        for (const auto& ch : codepoints_of(word)) {
            if (std::find(alphabet.begin(), alphabet.end(), ch) == alphabet.end())
                alphabet.push_back(ch);
        }
    std::sort(alphabet.begin(), alphabet.end());

    Vocabulary vocab = Vocabulary::with_specials();
    for (const auto& ch : alphabet) vocab.add(ch);
    for (const auto& ch : alphabet) vocab.add("##" + ch);
    if (target_vocab_size < vocab.size())
        throw DomainError("train_wordpiece: target " + std::to_string(target_vocab_size) +
                          " below specials+alphabet size " + std::to_string(vocab.size()));

    // Each distinct word as a symbol sequence, weighted by its frequency.
    struct Entry {
        std::vector<std::string> symbols;
        int64_t freq;
    };
    std::vector<Entry> entries;
    for (const auto& [word, freq] : word_freq) {
        Entry e;
        e.freq = freq;
        auto cps = codepoints_of(word);
        for (size_t i = 0; i < cps.size(); ++i)
            e.symbols.push_back(i == 0 ? cps[i] : "##" + cps[i]);
        entries.push_back(std::move(e));
    }

    auto merged_string = [](const std::string& a, const std::string& b) {
        return a + b.substr(2);  // continuation symbols always start "##"
    };

    while (vocab.size() < target_vocab_size) {
        // Count adjacent pairs; overlapping occurrences all count.
        std::map<std::pair<std::string, std::string>, int64_t> pair_freq;
        for (const auto& e : entries)
            for (size_t i = 0; i + 1 < e.symbols.size(); ++i)
                pair_freq[{e.symbols[i], e.symbols[i + 1]}] += e.freq;

        int64_t best_count = 0;
        std::pair<std::string, std::string> best_pair;
        std::string best_merged;
        for (const auto& [p, count] : pair_freq) {
            std::string m = merged_string(p.first, p.second);
            if (count > best_count || (count == best_count && m < best_merged)) {
                best_count = count;
                best_pair = p;
                best_merged = m;
            }
        }
        if (best_count < 2) break;

        vocab.add(best_merged);
        // Left-to-right, non-overlapping replacement in every word.
        for (auto& e : entries) {
            std::vector<std::string> next;
            next.reserve(e.symbols.size());
            size_t i = 0;
            while (i < e.symbols.size()) {
                if (i + 1 < e.symbols.size() && e.symbols[i] == best_pair.first &&
                    e.symbols[i + 1] == best_pair.second) {
                    next.push_back(best_merged);
                    i += 2;
                } else {
                    next.push_back(e.symbols[i]);
                    ++i;
                }
            }
            e.symbols = std::move(next);
        }
    }
    return vocab;
}

TokenSequence wordpiece_encode(const std::string& text, const Vocabulary& vocab, size_t T) {
    if (T < 3) throw DomainError("wordpiece_encode: window must be at least 3");

    std::vector<int> content;
    for (const auto& word : word_tokenize(normalize(text, true))) {
        auto cps = codepoints_of(word);
        std::vector<int> pieces;
        size_t pos = 0;
        while (pos < cps.size()) {
            int found = -1;
            size_t found_len = 0;
            std::string prefix = pos == 0 ? "" : "##";
            // longest match first
            std::string candidate = prefix;
            for (size_t k = pos; k < cps.size(); ++k) candidate += cps[k];
            size_t len = cps.size() - pos;
            while (len >= 1) {
                int id = vocab.id(candidate);
                if (id >= 0) {
                    found = id;
                    found_len = len;
                    break;
                }
                candidate.resize(candidate.size() - cps[pos + len - 1].size());
                --len;
            }
            if (found < 0) {
                pieces.clear();
                pieces.push_back(Vocabulary::kUnk);
                break;
            }
            pieces.push_back(found);
            pos += found_len;
        }
        content.insert(content.end(), pieces.begin(), pieces.end());
    }

    TokenSequence seq;
    seq.window = T;
    seq.ids.reserve(T);
    seq.ids.push_back(Vocabulary::kCls);
    size_t capacity = T - 2;
    for (size_t i = 0; i < content.size() && i < capacity; ++i) seq.ids.push_back(content[i]);
    seq.ids.push_back(Vocabulary::kSep);
    seq.mask.assign(seq.ids.size(), 1);
    while (seq.ids.size() < T) {
        seq.ids.push_back(Vocabulary::kPad);
        seq.mask.push_back(0);
    }
    return seq;
}

std::string wordpiece_decode(const TokenSequence& seq, const Vocabulary& vocab) {
    std::string out;
    for (size_t i = 0; i < seq.ids.size(); ++i) {
        int id = seq.ids[i];
        if (id < 0 || id >= static_cast<int>(vocab.size()))
            throw DomainError("wordpiece_decode: id " + std::to_string(id) + " out of range");
        if (id <= Vocabulary::kMask && id != Vocabulary::kUnk) continue;  // specials
        const std::string& tok = vocab.tokens[id];
        if (tok.rfind("##", 0) == 0) {
            out += tok.substr(2);
        } else {
            if (!out.empty()) out += ' ';
            out += tok;
        }
    }
    return out;
}

std::vector<TokenSequence> chunk(const std::vector<int>& content_ids, size_t W, size_t S) {
    if (W < 3) throw DomainError("chunk: window must be at least 3");
    if (S == 0 || S > W - 2)
        throw DomainError("chunk: stride must satisfy 0 < S <= W-2");

    auto frame = [W](const std::vector<int>& slice) {
        TokenSequence seq;
        seq.window = W;
        seq.ids.push_back(Vocabulary::kCls);
        seq.ids.insert(seq.ids.end(), slice.begin(), slice.end());
        seq.ids.push_back(Vocabulary::kSep);
        seq.mask.assign(seq.ids.size(), 1);
        while (seq.ids.size() < W) {
            seq.ids.push_back(Vocabulary::kPad);
            seq.mask.push_back(0);
        }
        return seq;
    };

    std::vector<TokenSequence> chunks;
    const size_t body = W - 2;
    const size_t n = content_ids.size();
    if (n == 0) {
        chunks.push_back(frame({}));
        return chunks;
    }
    for (size_t start = 0;; start += S) {
        size_t end = std::min(start + body, n);
        chunks.push_back(frame({content_ids.begin() + static_cast<ptrdiff_t>(start),
                                content_ids.begin() + static_cast<ptrdiff_t>(end)}));
        if (start + body >= n) break;
    }
    return chunks;
}

}  // namespace textclass::tokenize
