#include "textclass/unsupervised.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "textclass/checkpoint.hpp"
#include "textclass/corpus.hpp"
#include "textclass/errors.hpp"
#include "textclass/kernels.hpp"

namespace textclass::unsupervised {

double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.empty() || u.size() != v.size())
        throw ShapeError("cosine: vector sizes " + std::to_string(u.size()) + " vs " +
                         std::to_string(v.size()));
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) throw DomainError("cosine: zero vector");
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

namespace {

std::vector<double> tensor_row(const Tensor& t, size_t r) {
    std::vector<double> out(t.cols());
    for (size_t c = 0; c < t.cols(); ++c) out[c] = t.at(r, c);
    return out;
}

// Cosine that tolerates zero rows (treated as dissimilar to everything).
double safe_row_cosine(const Tensor& t, size_t a, size_t b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t c = 0; c < t.cols(); ++c) {
        dot += t.at(a, c) * t.at(b, c);
        na += t.at(a, c) * t.at(a, c);
        nb += t.at(b, c) * t.at(b, c);
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace

ExpressionMapping parse_expression_mapping(const std::string& text) {
    ExpressionMapping mapping;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
            throw ParseError("expression mapping line " + std::to_string(lineno) +
                             ": expected \"expression<TAB>label\"");
        mapping.entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return mapping;
}

ExpressionMapping load_expression_mapping(const std::string& path) {
    return parse_expression_mapping(checkpoint::read_text_file(path));
}

std::string format_expression_mapping(const ExpressionMapping& mapping) {
    std::string out;
    for (const auto& e : mapping.entries) out += e.expression + "\t" + e.label + "\n";
    return out;
}

SimilarityResult similarity_classify(const std::vector<tokenize::TokenSequence>& docs,
                                     const std::vector<tokenize::TokenSequence>& expressions,
                                     const std::vector<std::string>& expression_labels,
                                     const encoder::EncoderModel& model, encoder::Pooling pooling,
                                     bool exclude_specials) {
    if (expressions.empty()) throw DomainError("similarity: no candidate expressions");
    if (expressions.size() != expression_labels.size())
        throw ShapeError("similarity: " + std::to_string(expressions.size()) +
                         " expressions vs " + std::to_string(expression_labels.size()) +
                         " labels");

    Tensor doc_emb = encoder::embed_pooled(docs, model, pooling, exclude_specials);
    Tensor expr_emb = encoder::embed_pooled(expressions, model, pooling, exclude_specials);

    SimilarityResult result;
    result.scores = Tensor(docs.size(), expressions.size());
    for (size_t i = 0; i < docs.size(); ++i) {
        auto u = tensor_row(doc_emb, i);
        for (size_t j = 0; j < expressions.size(); ++j)
            result.scores.at(i, j) = cosine_similarity(u, tensor_row(expr_emb, j));
        size_t best = 0;
        for (size_t j = 1; j < expressions.size(); ++j)
            if (result.scores.at(i, j) > result.scores.at(i, best)) best = j;
        result.best.push_back(best);
        result.labels.push_back(expression_labels[best]);
    }
    return result;
}

size_t fallback_margin(const std::vector<double>& scores, size_t fallback,
                       double threshold_pp) {
    if (scores.size() < 2) throw DomainError("fallback margin: need at least two scores");
    if (fallback >= scores.size())
        throw DomainError("fallback margin: fallback index " + std::to_string(fallback) +
                          " out of range");
    size_t top = 0;
    for (size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[top]) top = i;
    if (top != fallback) return top;

    size_t second = top == 0 ? 1 : 0;
    for (size_t i = 0; i < scores.size(); ++i)
        if (i != top && scores[i] > scores[second]) second = i;
    double margin_pp = (scores[top] - scores[second]) * 100.0;
    return margin_pp < threshold_pp ? second : fallback;
}

namespace {

// Cyclic Jacobi for a symmetric matrix: returns eigenvalues (diagonal of
// the rotated matrix) with eigenvectors as columns of V.
void jacobi_eigen(Tensor a, Tensor& v, std::vector<double>& lambda) {
    size_t d = a.rows();
    v = Tensor(d, d);
    for (size_t i = 0; i < d; ++i) v.at(i, i) = 1.0;

    double scale = 0.0;
    for (size_t i = 0; i < d; ++i) scale = std::max(scale, std::fabs(a.at(i, i)));
    scale = std::max(scale, 1e-300);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (size_t p = 0; p < d; ++p)
            for (size_t q = p + 1; q < d; ++q) off += a.at(p, q) * a.at(p, q);
        if (off <= 1e-28 * scale * scale) break;

        for (size_t p = 0; p + 1 < d; ++p) {
            for (size_t q = p + 1; q < d; ++q) {
                double apq = a.at(p, q);
                if (std::fabs(apq) <= 1e-300) continue;
                double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;

                double app = a.at(p, p), aqq = a.at(q, q);
                a.at(p, p) = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                a.at(q, q) = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                a.at(p, q) = a.at(q, p) = 0.0;
                for (size_t i = 0; i < d; ++i) {
                    if (i == p || i == q) continue;
                    double aip = a.at(i, p), aiq = a.at(i, q);
                    a.at(i, p) = a.at(p, i) = c * aip - s * aiq;
                    a.at(i, q) = a.at(q, i) = s * aip + c * aiq;
                }
                for (size_t i = 0; i < d; ++i) {
                    double vip = v.at(i, p), viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    lambda.resize(d);
    for (size_t i = 0; i < d; ++i) lambda[i] = a.at(i, i);
}

}  // namespace

PcaResult pca_reduce(const Tensor& x, size_t k) {
    size_t n = x.rows(), d = x.cols();
    if (n == 0 || d == 0) throw DomainError("pca: empty input");
    if (k == 0 || k > std::min(n, d))
        throw DomainError("pca: k=" + std::to_string(k) + " outside 1..min(" +
                          std::to_string(n) + "," + std::to_string(d) + ")");
    if (!x.all_finite()) throw NumericError("pca: non-finite input");

    PcaResult result;
    result.mean.assign(d, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) result.mean[j] += x.at(i, j);
    for (size_t j = 0; j < d; ++j) result.mean[j] /= static_cast<double>(n);

    Tensor centered(n, d);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) centered.at(i, j) = x.at(i, j) - result.mean[j];

    Tensor v;
    std::vector<double> lambda;
    jacobi_eigen(kernels::matmul_tn(centered, centered), v, lambda);

    std::vector<size_t> order(d);
    std::iota(order.begin(), order.end(), size_t(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return lambda[a] > lambda[b]; });

    result.eigenvalues.resize(d);
    for (size_t i = 0; i < d; ++i) result.eigenvalues[i] = std::max(lambda[order[i]], 0.0);

    // Directions whose variance is numerically zero are dropped to zero
    // rows so that rank-deficient inputs project deterministically.
    double lam_max = result.eigenvalues.empty() ? 0.0 : result.eigenvalues[0];
    result.components = Tensor(k, d);
    for (size_t r = 0; r < k; ++r) {
        if (result.eigenvalues[r] <= 1e-12 * lam_max) continue;
        size_t col = order[r];
        size_t pivot = 0;
        for (size_t j = 1; j < d; ++j)
            if (std::fabs(v.at(j, col)) > std::fabs(v.at(pivot, col))) pivot = j;
        double sign = v.at(pivot, col) < 0.0 ? -1.0 : 1.0;
        for (size_t j = 0; j < d; ++j) result.components.at(r, j) = sign * v.at(j, col);
    }

    result.projected = kernels::matmul_nt(centered, result.components);
    return result;
}

std::vector<int> dbscan(const Tensor& x, double eps, size_t min_pts) {
    if (eps <= 0.0) throw DomainError("dbscan: eps must be positive");
    if (min_pts < 1) throw DomainError("dbscan: min_pts must be at least 1");
    size_t n = x.rows();
    double eps2 = eps * eps;

    auto neighbors = [&](size_t i) {
        std::vector<size_t> out;
        for (size_t j = 0; j < n; ++j) {
            double dist2 = 0.0;
            for (size_t c = 0; c < x.cols(); ++c) {
                double diff = x.at(i, c) - x.at(j, c);
                dist2 += diff * diff;
            }
            if (dist2 <= eps2) out.push_back(j);
        }
        return out;
    };

    constexpr int kUnvisited = -2;
    std::vector<int> labels(n, kUnvisited);
    int cluster = 0;
    for (size_t i = 0; i < n; ++i) {
        if (labels[i] != kUnvisited) continue;
        auto seed = neighbors(i);
        if (seed.size() < min_pts) {
            labels[i] = -1;
            continue;
        }
        labels[i] = cluster;
        std::deque<size_t> queue(seed.begin(), seed.end());
        while (!queue.empty()) {
            size_t j = queue.front();
            queue.pop_front();
            if (labels[j] == -1) labels[j] = cluster;  // border point
            if (labels[j] != kUnvisited) continue;
            labels[j] = cluster;
            auto reach = neighbors(j);
            if (reach.size() >= min_pts) queue.insert(queue.end(), reach.begin(), reach.end());
        }
        ++cluster;
    }
    return labels;
}

std::vector<int> distinct_clusters(const std::vector<int>& cluster_ids) {
    std::set<int> seen;
    for (int id : cluster_ids)
        if (id >= 0) seen.insert(id);
    return {seen.begin(), seen.end()};
}

Tensor cluster_term_counts(const std::vector<std::vector<std::string>>& doc_words,
                           const std::vector<int>& cluster_ids,
                           const std::vector<int>& clusters,
                           const std::vector<std::string>& vocab) {
    if (doc_words.size() != cluster_ids.size())
        throw ShapeError("term counts: " + std::to_string(doc_words.size()) + " documents vs " +
                         std::to_string(cluster_ids.size()) + " cluster ids");
    if (vocab.empty()) throw DomainError("term counts: empty vocabulary");

    std::unordered_map<std::string, size_t> col;
    for (size_t j = 0; j < vocab.size(); ++j)
        if (!col.emplace(vocab[j], j).second)
            throw DomainError("term counts: duplicate vocabulary word \"" + vocab[j] + "\"");
    std::unordered_map<int, size_t> row;
    for (size_t r = 0; r < clusters.size(); ++r) row.emplace(clusters[r], r);

    Tensor tf(clusters.size(), vocab.size());
    for (size_t i = 0; i < doc_words.size(); ++i) {
        auto r = row.find(cluster_ids[i]);
        if (r == row.end()) continue;
        for (const auto& word : doc_words[i]) {
            auto c = col.find(word);
            if (c != col.end()) tf.at(r->second, c->second) += 1.0;
        }
    }
    return tf;
}

Tensor ctfidf(const Tensor& tf) {
    if (tf.rows() == 0) throw DomainError("c-tf-idf: no clusters");
    if (tf.cols() == 0) throw DomainError("c-tf-idf: empty vocabulary");

    double total = 0.0;
    for (size_t i = 0; i < tf.size(); ++i) {
        if (tf[i] < 0.0) throw DomainError("c-tf-idf: negative count");
        total += tf[i];
    }
    double avg_per_cluster = total / static_cast<double>(tf.rows());

    Tensor scores(tf.rows(), tf.cols());
    for (size_t t = 0; t < tf.cols(); ++t) {
        double f = 0.0;
        for (size_t c = 0; c < tf.rows(); ++c) f += tf.at(c, t);
        if (f == 0.0) continue;
        double idf = std::log(1.0 + avg_per_cluster / f);
        for (size_t c = 0; c < tf.rows(); ++c) scores.at(c, t) = tf.at(c, t) * idf;
    }
    return scores;
}

std::vector<size_t> mmr_select(const std::vector<double>& scores, const Tensor& embeddings,
                               size_t k, double lambda) {
    size_t n = scores.size();
    if (embeddings.rows() != n)
        throw ShapeError("mmr: " + std::to_string(n) + " scores vs " +
                         std::to_string(embeddings.rows()) + " embeddings");
    if (k > n) throw DomainError("mmr: k=" + std::to_string(k) + " exceeds " +
                                 std::to_string(n) + " candidates");
    if (lambda < 0.0 || lambda > 1.0) throw DomainError("mmr: lambda outside [0, 1]");
    if (k == 0) return {};

    double lo = *std::min_element(scores.begin(), scores.end());
    double hi = *std::max_element(scores.begin(), scores.end());
    std::vector<double> rel(n, 1.0);
    if (hi > lo)
        for (size_t i = 0; i < n; ++i) rel[i] = (scores[i] - lo) / (hi - lo);

    std::vector<size_t> picked;
    std::vector<bool> used(n, false);
    while (picked.size() < k) {
        size_t best = n;
        double best_val = -std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            double redundancy = 0.0;
            for (size_t s : picked)
                redundancy = std::max(redundancy, safe_row_cosine(embeddings, i, s));
            double val = picked.empty() ? rel[i] : lambda * rel[i] - (1.0 - lambda) * redundancy;
            if (val > best_val) {
                best_val = val;
                best = i;
            }
        }
        picked.push_back(best);
        used[best] = true;
    }
    return picked;
}

std::map<int, int> map_clusters(const std::vector<int>& cluster_ids,
                                const std::vector<int>& labels) {
    if (cluster_ids.size() != labels.size())
        throw ShapeError("cluster map: " + std::to_string(cluster_ids.size()) +
                         " cluster ids vs " + std::to_string(labels.size()) + " labels");

    std::map<int, std::map<int, size_t>> tally;
    for (int id : cluster_ids) tally[id];  // record every cluster, labeled or not
    for (size_t i = 0; i < cluster_ids.size(); ++i)
        if (labels[i] >= 0) ++tally[cluster_ids[i]][labels[i]];

    std::map<int, int> mapping;
    for (const auto& [cid, counts] : tally) {
        if (counts.empty()) {
            if (cid == -1) continue;  // unlabeled outliers simply stay unmapped
            throw MappingError("cluster map: cluster " + std::to_string(cid) +
                               " has no labeled documents");
        }
        int best_label = counts.begin()->first;
        size_t best_count = counts.begin()->second;
        for (const auto& [label, count] : counts)
            if (count > best_count) {
                best_label = label;
                best_count = count;
            }
        mapping[cid] = best_label;
    }
    return mapping;
}

void TopicParams::validate() const {
    if (pca_k == 0) throw ConfigError("topics: pca_k must be positive");
    if (eps < 0.0) throw ConfigError("topics: eps must not be negative");
    if (eps_quantile < 0.0 || eps_quantile > 1.0)
        throw ConfigError("topics: eps_quantile outside [0, 1]");
    if (min_pts < 1) throw ConfigError("topics: min_pts must be at least 1");
    if (mmr_lambda < 0.0 || mmr_lambda > 1.0)
        throw ConfigError("topics: mmr_lambda outside [0, 1]");
    if (top_k == 0) throw ConfigError("topics: top_k must be positive");
}

std::vector<std::string> build_word_vocab(const std::vector<std::vector<std::string>>& doc_words) {
    std::set<std::string> seen;
    for (const auto& doc : doc_words) seen.insert(doc.begin(), doc.end());
    return {seen.begin(), seen.end()};
}

TopicModel topic_pipeline(const Tensor& doc_embeddings,
                          const std::vector<std::vector<std::string>>& doc_words,
                          const std::vector<std::string>& vocab, const Tensor& word_embeddings,
                          const TopicParams& params, const std::vector<int>* labels) {
    params.validate();
    size_t n = doc_embeddings.rows();
    if (n < 2) throw DomainError("topics: need at least two documents");
    if (doc_words.size() != n)
        throw ShapeError("topics: " + std::to_string(n) + " embeddings vs " +
                         std::to_string(doc_words.size()) + " token lists");
    if (word_embeddings.rows() != vocab.size())
        throw ShapeError("topics: " + std::to_string(vocab.size()) + " vocab words vs " +
                         std::to_string(word_embeddings.rows()) + " word embeddings");
    if (labels && labels->size() != n)
        throw ShapeError("topics: label list does not match document count");

    size_t k = std::min(params.pca_k, std::min(n, doc_embeddings.cols()));
    PcaResult pca = pca_reduce(doc_embeddings, k);

    double eps = params.eps;
    if (eps <= 0.0) {
        std::vector<double> dists;
        dists.reserve(n * (n - 1) / 2);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i + 1; j < n; ++j) {
                double d2 = 0.0;
                for (size_t c = 0; c < pca.projected.cols(); ++c) {
                    double diff = pca.projected.at(i, c) - pca.projected.at(j, c);
                    d2 += diff * diff;
                }
                dists.push_back(std::sqrt(d2));
            }
        std::sort(dists.begin(), dists.end());
        eps = dists[static_cast<size_t>(params.eps_quantile *
                                        static_cast<double>(dists.size() - 1))];
        if (eps <= 0.0) eps = 1e-12;  // duplicate points still cluster together
    }

    TopicModel model;
    model.eps = eps;
    model.cluster_ids = dbscan(pca.projected, eps, params.min_pts);
    model.clusters = distinct_clusters(model.cluster_ids);
    if (model.clusters.empty())
        throw DomainError("topics: clustering produced only outliers; relax eps or min_pts");

    model.vocab = vocab;
    Tensor tf = cluster_term_counts(doc_words, model.cluster_ids, model.clusters, vocab);
    model.scores = ctfidf(tf);

    for (size_t r = 0; r < model.clusters.size(); ++r) {
        std::vector<size_t> candidates;
        for (size_t t = 0; t < vocab.size(); ++t)
            if (tf.at(r, t) > 0.0) candidates.push_back(t);

        std::vector<double> cand_scores(candidates.size());
        Tensor cand_emb(candidates.size(), word_embeddings.cols());
        for (size_t i = 0; i < candidates.size(); ++i) {
            cand_scores[i] = model.scores.at(r, candidates[i]);
            for (size_t c = 0; c < word_embeddings.cols(); ++c)
                cand_emb.at(i, c) = word_embeddings.at(candidates[i], c);
        }

        auto picked = mmr_select(cand_scores, cand_emb,
                                 std::min(params.top_k, candidates.size()), params.mmr_lambda);
        std::vector<size_t> words;
        for (size_t i : picked) words.push_back(candidates[i]);
        model.top_words.push_back(std::move(words));
    }

    if (labels) model.label_map = map_clusters(model.cluster_ids, *labels);
    return model;
}

std::string topic_report_csv(const TopicModel& model) {
    corpus::CsvTable table;
    table.header = {"cluster", "rank", "word", "score"};
    for (size_t r = 0; r < model.clusters.size(); ++r) {
        const auto& words = model.top_words.at(r);
        for (size_t rank = 0; rank < words.size(); ++rank)
            table.rows.push_back({std::to_string(model.clusters[r]),
                                  std::to_string(rank + 1), model.vocab.at(words[rank]),
                                  fmt("%.9g", model.scores.at(r, words[rank]))});
    }
    return corpus::format_csv(table);
}

std::string format_cluster_map(const std::map<int, int>& label_map,
                               const std::vector<std::string>& classes) {
    std::string out;
    for (const auto& [cid, label] : label_map) {
        if (label < 0 || static_cast<size_t>(label) >= classes.size())
            throw LabelError("cluster map: label index " + std::to_string(label) +
                             " outside class list");
        out += std::to_string(cid) + "\t" + classes[static_cast<size_t>(label)] + "\n";
    }
    return out;
}

std::map<int, int> parse_cluster_map(const std::string& text,
                                     const std::vector<std::string>& classes) {
    std::map<int, int> mapping;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("cluster map line " + std::to_string(lineno) +
                             ": expected \"cluster<TAB>label\"");
        int cid = 0;
        try {
            size_t used = 0;
            cid = std::stoi(line.substr(0, tab), &used);
            if (used != tab) throw std::invalid_argument("trailing junk");
        } catch (const std::exception&) {
            throw ParseError("cluster map line " + std::to_string(lineno) +
                             ": bad cluster id \"" + line.substr(0, tab) + "\"");
        }
        std::string name = line.substr(tab + 1);
        auto it = std::find(classes.begin(), classes.end(), name);
        if (it == classes.end())
            throw LabelError("cluster map line " + std::to_string(lineno) +
                             ": unknown label \"" + name + "\"");
        mapping[cid] = static_cast<int>(it - classes.begin());
    }
    return mapping;
}

}  // namespace textclass::unsupervised
