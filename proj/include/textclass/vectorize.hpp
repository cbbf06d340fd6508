#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "textclass/tensor.hpp"
#include "textclass/tokenize.hpp"

namespace textclass::vectorize {

struct CountVector {
    std::vector<int64_t> counts;
    int64_t total() const;
};

// Inventory of n-grams over vocab-mapped token strings (out-of-vocabulary
// tokens become [UNK] before n-grams form). Keys are space-joined. When
// built straight from a Vocabulary with n=1, indices equal token ids.
struct NgramVocab {
    int n = 1;
    std::vector<std::string> keys;
    std::unordered_map<std::string, int> index;
    size_t size() const { return keys.size(); }
};

NgramVocab unigram_vocab(const tokenize::Vocabulary& vocab);
// Collects every n-gram occurring in the corpus; keys sorted for
// reproducibility.
NgramVocab build_ngram_vocab(const std::vector<std::vector<std::string>>& corpus,
                             const tokenize::Vocabulary& vocab, int n);

// Counts contiguous n-grams of the mapped token sequence; n-grams missing
// from the inventory are skipped (cannot happen for n=1 over unigram_vocab).
CountVector bow(const std::vector<std::string>& tokens, const tokenize::Vocabulary& vocab,
                const NgramVocab& ngrams);
// Unigram convenience: length-V vector aligned with token ids.
CountVector bow(const std::vector<std::string>& tokens, const tokenize::Vocabulary& vocab);

struct IdfWeights {
    std::vector<double> idf;
    int64_t doc_count = 0;
};

// idf_t = ln((1+N)/(1+df_t)) + 1
IdfWeights tfidf_fit(const std::vector<CountVector>& docs);

// x_t * idf_t, L2-normalized; the zero vector stays zero.
std::vector<double> tfidf_transform(const CountVector& x, const IdfWeights& w);

// Mean of the embedding rows selected by ids.
std::vector<double> embed_mean(const std::vector<int>& ids, const Tensor& W);

// Debug dump: nonzero entries as "index:count", ascending, space-separated.
std::string sparse_line(const CountVector& x);
CountVector parse_sparse_line(const std::string& line, size_t dims);

}  // namespace textclass::vectorize
