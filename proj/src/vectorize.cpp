#include "textclass/vectorize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace textclass::vectorize {

namespace {

const std::string& mapped(const std::string& token, const tokenize::Vocabulary& vocab) {
    static const std::string unk = "[UNK]";
    return vocab.id(token) >= 0 ? token : unk;
}

std::vector<std::string> ngram_keys(const std::vector<std::string>& tokens,
                                    const tokenize::Vocabulary& vocab, int n) {
    std::vector<std::string> keys;
    if (n < 1) throw DomainError("n-gram order must be >= 1");
    if (tokens.size() < static_cast<size_t>(n)) return keys;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = mapped(tokens[i], vocab);
        for (int k = 1; k < n; ++k) {
            key += ' ';
            key += mapped(tokens[i + k], vocab);
        }
        keys.push_back(std::move(key));
    }
    return keys;
}

}  // namespace

int64_t CountVector::total() const {
    return std::accumulate(counts.begin(), counts.end(), int64_t{0});
}

NgramVocab unigram_vocab(const tokenize::Vocabulary& vocab) {
    NgramVocab nv;
    nv.n = 1;
    nv.keys = vocab.tokens;
    for (size_t i = 0; i < nv.keys.size(); ++i) nv.index.emplace(nv.keys[i], i);
    return nv;
}

NgramVocab build_ngram_vocab(const std::vector<std::vector<std::string>>& corpus,
                             const tokenize::Vocabulary& vocab, int n) {
    NgramVocab nv;
    nv.n = n;
    for (const auto& doc : corpus)
        for (auto& key : ngram_keys(doc, vocab, n))
            if (!nv.index.count(key)) {
                nv.index.emplace(key, 0);
                nv.keys.push_back(std::move(key));
            }
    std::sort(nv.keys.begin(), nv.keys.end());
    for (size_t i = 0; i < nv.keys.size(); ++i) nv.index[nv.keys[i]] = static_cast<int>(i);
    return nv;
}

CountVector bow(const std::vector<std::string>& tokens, const tokenize::Vocabulary& vocab,
                const NgramVocab& ngrams) {
    CountVector x;
    x.counts.assign(ngrams.size(), 0);
    for (const auto& key : ngram_keys(tokens, vocab, ngrams.n)) {
        auto it = ngrams.index.find(key);
        if (it != ngrams.index.end()) ++x.counts[it->second];
    }
    return x;
}

CountVector bow(const std::vector<std::string>& tokens, const tokenize::Vocabulary& vocab) {
    CountVector x;
    x.counts.assign(vocab.size(), 0);
    for (const auto& t : tokens) {
        int id = vocab.id(t);
        ++x.counts[id >= 0 ? id : tokenize::Vocabulary::kUnk];
    }
    return x;
}

IdfWeights tfidf_fit(const std::vector<CountVector>& docs) {
    if (docs.empty()) throw DomainError("tfidf_fit: empty document list");
    size_t dims = docs[0].counts.size();
    for (const auto& d : docs)
        if (d.counts.size() != dims)
            throw ShapeError("tfidf_fit: inconsistent vector lengths");

    IdfWeights w;
    w.doc_count = static_cast<int64_t>(docs.size());
    w.idf.assign(dims, 0.0);
    for (size_t t = 0; t < dims; ++t) {
        int64_t df = 0;
        for (const auto& d : docs)
            if (d.counts[t] > 0) ++df;
        w.idf[t] = std::log((1.0 + static_cast<double>(w.doc_count)) / (1.0 + df)) + 1.0;
    }
    return w;
}

std::vector<double> tfidf_transform(const CountVector& x, const IdfWeights& w) {
    if (x.counts.size() != w.idf.size())
        throw ShapeError("tfidf_transform: vector length " + std::to_string(x.counts.size()) +
                         " vs idf length " + std::to_string(w.idf.size()));
    std::vector<double> out(x.counts.size());
    double norm_sq = 0.0;
    for (size_t t = 0; t < out.size(); ++t) {
        out[t] = static_cast<double>(x.counts[t]) * w.idf[t];
        norm_sq += out[t] * out[t];
    }
    if (norm_sq > 0.0) {
        double inv = 1.0 / std::sqrt(norm_sq);
        for (auto& v : out) v *= inv;
    }
    return out;
}

std::vector<double> embed_mean(const std::vector<int>& ids, const Tensor& W) {
    if (ids.empty()) throw DomainError("embed_mean: empty token list");
    std::vector<double> out(W.cols(), 0.0);
    for (int id : ids) {
        if (id < 0 || static_cast<size_t>(id) >= W.rows())
            throw DomainError("embed_mean: token id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(W.rows()));
        for (size_t e = 0; e < W.cols(); ++e) out[e] += W.at(id, e);
    }
    double inv = 1.0 / static_cast<double>(ids.size());
    for (auto& v : out) v *= inv;
    return out;
}

std::string sparse_line(const CountVector& x) {
    std::ostringstream out;
    bool first = true;
    for (size_t i = 0; i < x.counts.size(); ++i) {
        if (x.counts[i] == 0) continue;
        if (!first) out << ' ';
        first = false;
        out << i << ':' << x.counts[i];
    }
    return out.str();
}

CountVector parse_sparse_line(const std::string& line, size_t dims) {
    CountVector x;
    x.counts.assign(dims, 0);
    std::istringstream in(line);
    std::string pair;
    while (in >> pair) {
        auto colon = pair.find(':');
        if (colon == std::string::npos)
            throw ParseError("sparse vector: missing ':' in '" + pair + "'");
        size_t idx;
        int64_t count;
        try {
            idx = std::stoul(pair.substr(0, colon));
            count = std::stoll(pair.substr(colon + 1));
        } catch (const std::exception&) {
            throw ParseError("sparse vector: bad pair '" + pair + "'");
        }
        if (idx >= dims)
            throw ParseError("sparse vector: index " + std::to_string(idx) + " >= dims " +
                             std::to_string(dims));
        x.counts[idx] = count;
    }
    return x;
}

}  // namespace textclass::vectorize
