#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "textclass/errors.hpp"

namespace textclass::tokenize {

// Lowercasing and letter classification cover ASCII plus Latin-1 and the
// Latin Extended-A/B blocks, which is what the English/German corpora need.

// Collapses whitespace runs (incl. NBSP) to single spaces, trims, strips
// control characters, optionally lowercases.
std::string normalize(const std::string& text, bool lowercase);

// Maximal runs of letters/digits become tokens; every other visible
// character is a single-character token.
std::vector<std::string> word_tokenize(const std::string& text);

std::vector<std::string> remove_stopwords(const std::vector<std::string>& tokens,
                                          const std::unordered_set<std::string>& stopwords);

std::unordered_set<std::string> load_stopwords(const std::string& path);

// Porter (1980) stemmer, steps 1a-5b as published (step 2 keeps the
// original ABLI -> ABLE rule and has no LOGI rule). Words of length <= 2
// or containing anything outside a-z are returned unchanged.
std::string porter_stem(const std::string& word);

struct Vocabulary {
    static constexpr int kPad = 0, kUnk = 1, kCls = 2, kSep = 3, kMask = 4;
    static const std::vector<std::string>& special_tokens();

    std::vector<std::string> tokens;  // index == id
    std::unordered_map<std::string, int> index;

    static Vocabulary with_specials();
    int add(const std::string& token);       // idempotent, returns id
    int id(const std::string& token) const;  // -1 when absent
    size_t size() const { return tokens.size(); }
};

Vocabulary load_vocabulary(const std::string& path);
void save_vocabulary(const std::string& path, const Vocabulary& vocab);

struct TokenSequence {
    std::vector<int> ids;
    std::vector<int> mask;  // 1 = real token, 0 = padding
    size_t window = 0;      // capacity T; ids.size() == window
};

// BPE-style trainer over pre-tokenized words: vocabulary starts from the
// specials plus every corpus character in word-initial and "##" form, then
// greedily merges the most frequent adjacent symbol pair (ties broken by
// lexicographically smallest merged string) until `target_vocab_size` is
// reached or no pair occurs at least twice. Alphabet entries are sorted;
// merged tokens follow in merge order.
Vocabulary train_wordpiece(const std::vector<std::vector<std::string>>& corpus,
                           size_t target_vocab_size);

// normalize(lowercase) -> word_tokenize -> greedy longest-match subwords
// ("##" continuations); any unmatched residue turns the whole word into
// [UNK]. Output is [CLS] content [SEP] padded/truncated to window T.
TokenSequence wordpiece_encode(const std::string& text, const Vocabulary& vocab, size_t T);

// Joins "##" pieces back into words, skipping specials. Round-trips
// wordpiece_encode for fully coverable text.
std::string wordpiece_decode(const TokenSequence& seq, const Vocabulary& vocab);

// Splits unpadded content ids into overlapping windows of capacity W;
// chunk k covers content [k*S, k*S + W-2) and each chunk is framed with
// [CLS]/[SEP] and padded. Empty input yields one all-padding chunk.
std::vector<TokenSequence> chunk(const std::vector<int>& content_ids, size_t W, size_t S);

}  // namespace textclass::tokenize
