#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "textclass/encoder.hpp"
#include "textclass/tensor.hpp"
#include "textclass/tokenize.hpp"

namespace textclass::unsupervised {

// (u . v) / (|u| |v|). Zero-length input or zero vector -> DomainError.
double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v);

// ---- Zero-shot labeling by sentence similarity ----

// Candidate expressions and their class labels; several expressions may
// share a label. File layout: one "expression<TAB>label" per line.
struct ExpressionMapping {
    struct Entry {
        std::string expression;
        std::string label;
    };
    std::vector<Entry> entries;
};

ExpressionMapping parse_expression_mapping(const std::string& text);
ExpressionMapping load_expression_mapping(const std::string& path);
std::string format_expression_mapping(const ExpressionMapping& mapping);

struct SimilarityResult {
    std::vector<size_t> best;         // winning expression index per document
    std::vector<std::string> labels;  // that expression's label
    Tensor scores;                    // docs x expressions cosine table
};

// Encodes and pools every document and every expression exactly once (cost
// grows with docs + expressions, not their product); each document takes
// the label of its most similar expression, ties to the lowest index.
SimilarityResult similarity_classify(const std::vector<tokenize::TokenSequence>& docs,
                                     const std::vector<tokenize::TokenSequence>& expressions,
                                     const std::vector<std::string>& expression_labels,
                                     const encoder::EncoderModel& model,
                                     encoder::Pooling pooling, bool exclude_specials = false);

// If the winner is the fallback and leads the runner-up by fewer than
// threshold_pp percentage points (scores are probabilities in [0, 1]),
// answer the runner-up instead. Returns the chosen index.
size_t fallback_margin(const std::vector<double>& scores, size_t fallback, double threshold_pp);

// ---- Topic discovery ----

// PCA by a cyclic Jacobi eigensolver on the column-centered Gram matrix.
// Component rows are orthonormal and sign-fixed (largest-magnitude
// coordinate positive); rows beyond the rank of X are zero, so projecting
// onto them yields zero columns. eigenvalues holds all d eigenvalues of
// Xc^T Xc (squared singular values of the centered data), descending.
struct PcaResult {
    Tensor projected;   // n x k
    Tensor components;  // k x d
    std::vector<double> eigenvalues;
    std::vector<double> mean;  // subtracted column means
};

PcaResult pca_reduce(const Tensor& X, size_t k);

// Classic density clustering, Euclidean metric, -1 = outlier. A point is
// core when its eps-ball (itself included) holds >= min_pts points.
// Clusters grow breadth-first from the lowest-index unvisited core point,
// neighbors queued in ascending index, so results are deterministic and
// shared border points join the earlier cluster.
std::vector<int> dbscan(const Tensor& X, double eps, size_t min_pts);

// Ascending non-outlier cluster ids present in `cluster_ids`.
std::vector<int> distinct_clusters(const std::vector<int>& cluster_ids);

// Word counts over the concatenated documents of each cluster: one row per
// entry of `clusters`, one column per vocab word. Words outside the vocab
// and documents outside the listed clusters are ignored.
Tensor cluster_term_counts(const std::vector<std::vector<std::string>>& doc_words,
                           const std::vector<int>& cluster_ids,
                           const std::vector<int>& clusters,
                           const std::vector<std::string>& vocab);

// Class-based TF-IDF: W[t,c] = tf[t,c] * ln(1 + A / f_t) with f_t the
// total count of t over all clusters and A the average word count per
// cluster. Terms absent everywhere score zero.
Tensor ctfidf(const Tensor& tf);

// Greedy maximal marginal relevance: relevance is the min-max-normalized
// score (all-equal scores normalize to 1), redundancy the highest cosine
// against anything already selected (zero embeddings count as cosine 0).
// Picks argmax of lambda * relevance - (1 - lambda) * redundancy, k times.
std::vector<size_t> mmr_select(const std::vector<double>& scores, const Tensor& embeddings,
                               size_t k, double lambda);

// Majority label per cluster (ties to the lowest label index). labels[i]
// = -1 marks an unlabeled document. A non-outlier cluster without any
// labeled document -> MappingError; the outlier group -1 is mapped too
// when it has labeled members and silently omitted when it does not.
std::map<int, int> map_clusters(const std::vector<int>& cluster_ids,
                                const std::vector<int>& labels);

struct TopicParams {
    size_t pca_k = 10;
    double eps = 0.0;           // explicit DBSCAN radius when > 0
    double eps_quantile = 0.1;  // else this quantile of pairwise distances
    size_t min_pts = 5;
    double mmr_lambda = 0.7;
    size_t top_k = 10;  // words per topic

    void validate() const;  // ConfigError on out-of-range values
};

struct TopicModel {
    std::vector<int> cluster_ids;  // per document, -1 = outlier
    std::vector<int> clusters;     // ascending non-outlier ids (row order below)
    std::vector<std::string> vocab;
    Tensor scores;                               // clusters x vocab c-TF-IDF
    std::vector<std::vector<size_t>> top_words;  // vocab indices per cluster
    std::map<int, int> label_map;                // cluster -> label, may be empty
    double eps = 0.0;                            // radius actually used
};

// Sorted distinct words over all documents.
std::vector<std::string> build_word_vocab(const std::vector<std::vector<std::string>>& doc_words);

// PCA -> DBSCAN -> c-TF-IDF -> MMR. pca_k is clamped to min(n, d); MMR
// candidates are the words that occur in the cluster. Pass labels (-1 =
// unlabeled) to fill label_map. Fully deterministic for fixed inputs.
TopicModel topic_pipeline(const Tensor& doc_embeddings,
                          const std::vector<std::vector<std::string>>& doc_words,
                          const std::vector<std::string>& vocab, const Tensor& word_embeddings,
                          const TopicParams& params, const std::vector<int>* labels = nullptr);

// "cluster,rank,word,score" rows, rank 1-based in MMR order.
std::string topic_report_csv(const TopicModel& model);

// "cluster<TAB>label" lines with labels spelled via `classes`.
std::string format_cluster_map(const std::map<int, int>& label_map,
                               const std::vector<std::string>& classes);
std::map<int, int> parse_cluster_map(const std::string& text,
                                     const std::vector<std::string>& classes);

}  // namespace textclass::unsupervised
