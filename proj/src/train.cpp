#include "textclass/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "textclass/errors.hpp"
#include "textclass/kernels.hpp"
#include "textclass/rng.hpp"

namespace textclass::train {

using autodiff::Graph;
using autodiff::NodeRef;

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train config: epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("train config: batch size must be at least 1");
    if (!(lr > 0.0)) throw ConfigError("train config: learning rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigError("train config: betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("train config: epsilon must be positive");
    if (p_mask < 0.0 || p_mask > 1.0)
        throw ConfigError("train config: p_mask must lie in [0, 1]");
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size())
        throw ShapeError("adam: " + std::to_string(params.size()) + " parameters vs " +
                         std::to_string(grads.size()) + " gradients");
    if (m_.empty()) {
        for (const Tensor* p : params) {
            m_.emplace_back(p->rows(), p->cols());
            v_.emplace_back(p->rows(), p->cols());
        }
    }
    if (m_.size() != params.size()) throw ShapeError("adam: parameter list changed size");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        check_same_shape(p, g, "adam");
        check_same_shape(p, m_[i], "adam");
        for (size_t k = 0; k < p.size(); ++k) {
            double gk = g[k];
            m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * gk;
            v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * gk * gk;
            double mhat = m_[i][k] / bc1;
            double vhat = v_[i][k] / bc2;
            p[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

namespace {

void softmax_rows_inplace(Tensor& t) {
    for (size_t i = 0; i < t.rows(); ++i) {
        double mx = t.at(i, 0);
        for (size_t j = 1; j < t.cols(); ++j) mx = std::max(mx, t.at(i, j));
        double sum = 0.0;
        for (size_t j = 0; j < t.cols(); ++j) {
            t.at(i, j) = std::exp(t.at(i, j) - mx);
            sum += t.at(i, j);
        }
        for (size_t j = 0; j < t.cols(); ++j) t.at(i, j) /= sum;
    }
}

void log_line(std::ostream* log, size_t epoch, size_t batch, double loss) {
    if (!log) return;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g\n", epoch, batch, loss);
    *log << buf;
}

std::vector<size_t> epoch_order(size_t n, SplitMix64& rng) {
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(order, rng);
    return order;
}

NodeRef mean_of(Graph& g, const std::vector<NodeRef>& losses) {
    NodeRef total = losses[0];
    for (size_t i = 1; i < losses.size(); ++i) total = g.add(total, losses[i]);
    return g.scale(total, 1.0 / static_cast<double>(losses.size()));
}

}  // namespace

LogRegModel train_logreg(const Tensor& features, const std::vector<int>& labels,
                         double l2_lambda, const TrainConfig& config,
                         const std::vector<std::string>& classes, std::ostream* log) {
    config.validate();
    const size_t n = features.rows();
    const size_t d = features.cols();
    if (d == 0) throw DomainError("train_logreg: features have zero width");
    if (n == 0) throw DomainError("train_logreg: no training rows");
    if (labels.size() != n)
        throw ShapeError("train_logreg: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    if (l2_lambda < 0.0) throw DomainError("train_logreg: negative l2_lambda");

    size_t K = classes.size();
    for (int y : labels) {
        if (y < 0) throw DomainError("train_logreg: negative label");
        K = std::max(K, static_cast<size_t>(y) + 1);
    }
    if (K < 2) throw DomainError("train_logreg: need at least two classes");
    if (!classes.empty() && classes.size() != K)
        throw DomainError("train_logreg: labels exceed the provided class list");
    if (n < K)
        throw DomainError("train_logreg: fewer rows (" + std::to_string(n) + ") than classes (" +
                          std::to_string(K) + ")");

    Tensor onehot(n, K);
    for (size_t i = 0; i < n; ++i) onehot.at(i, labels[i]) = 1.0;

    LogRegModel model;
    model.weights = Tensor(d, K);
    model.bias = Tensor(1, K);
    model.l2_lambda = l2_lambda;
    if (classes.empty())
        for (size_t k = 0; k < K; ++k) model.classes.push_back(std::to_string(k));
    else
        model.classes = classes;

    Adam adam(config);
    for (size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        Tensor probs = kernels::matmul(features, model.weights);
        for (size_t i = 0; i < n; ++i)
            for (size_t k = 0; k < K; ++k) probs.at(i, k) += model.bias.at(0, k);
        softmax_rows_inplace(probs);

        double loss = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double p = probs.at(i, labels[i]);
            loss -= std::log(p < 1e-15 ? 1e-15 : p);
        }
        loss /= static_cast<double>(n);
        for (double w : model.weights.vec()) loss += l2_lambda * w * w;

        Tensor diff = probs;  // (P - Y) / n
        for (size_t i = 0; i < n; ++i)
            for (size_t k = 0; k < K; ++k)
                diff.at(i, k) = (diff.at(i, k) - onehot.at(i, k)) / static_cast<double>(n);
        Tensor grad_w = kernels::matmul_tn(features, diff);
        for (size_t idx = 0; idx < grad_w.size(); ++idx)
            grad_w[idx] += 2.0 * l2_lambda * model.weights[idx];
        Tensor grad_b(1, K);
        for (size_t i = 0; i < n; ++i)
            for (size_t k = 0; k < K; ++k) grad_b.at(0, k) += diff.at(i, k);

        double gmax = 0.0;
        for (double v : grad_w.vec()) gmax = std::max(gmax, std::abs(v));
        for (double v : grad_b.vec()) gmax = std::max(gmax, std::abs(v));
        log_line(log, epoch, 1, loss);
        if (gmax < 1e-6) break;
        adam.step({&model.weights, &model.bias}, {&grad_w, &grad_b});
    }
    return model;
}

Tensor predict_logreg(const LogRegModel& model, const Tensor& features) {
    if (features.cols() != model.weights.rows())
        throw ShapeError("predict_logreg: feature width " + std::to_string(features.cols()) +
                         " does not match model width " + std::to_string(model.weights.rows()));
    Tensor probs = kernels::matmul(features, model.weights);
    for (size_t i = 0; i < probs.rows(); ++i)
        for (size_t k = 0; k < probs.cols(); ++k) probs.at(i, k) += model.bias.at(0, k);
    softmax_rows_inplace(probs);
    return probs;
}

MaskedSequence mlm_prepare(const tokenize::TokenSequence& seq, double p_mask, uint64_t seed) {
    if (p_mask < 0.0 || p_mask > 1.0)
        throw ConfigError("mlm_prepare: p_mask must lie in [0, 1]");
    MaskedSequence out;
    out.seq = seq;
    SplitMix64 rng(seed);
    // One draw per eligible position, walked left to right.
    for (size_t i = 0; i < seq.ids.size(); ++i) {
        bool eligible = seq.mask[i] != 0 && seq.ids[i] > tokenize::Vocabulary::kMask;
        if (!eligible) continue;
        if (rng.next_bernoulli(p_mask)) {
            out.positions.push_back(static_cast<int>(i));
            out.targets.push_back(seq.ids[i]);
            out.seq.ids[i] = tokenize::Vocabulary::kMask;
        }
    }
    return out;
}

encoder::EncoderModel train_mlm(const encoder::EncoderModel& model,
                                const std::vector<tokenize::TokenSequence>& corpus,
                                const TrainConfig& config, std::ostream* log) {
    config.validate();
    if (corpus.empty()) throw DomainError("train_mlm: empty corpus");

    encoder::EncoderModel out = model;
    std::vector<Tensor*> masters = encoder::parameter_tensors(out);
    Adam adam(config);
    SplitMix64 rng(config.seed);

    for (size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<size_t> order = epoch_order(corpus.size(), rng);
        size_t batch_no = 0;
        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            ++batch_no;
            size_t stop = std::min(order.size(), start + config.batch_size);
            Graph g;
            encoder::EncoderNodes nodes = encoder::register_params(g, out, true);
            std::vector<NodeRef> losses;
            for (size_t i = start; i < stop; ++i) {
                uint64_t ex_seed = rng.next_u64();
                MaskedSequence ms = mlm_prepare(corpus[order[i]], config.p_mask, ex_seed);
                if (ms.positions.empty()) continue;
                encoder::ForwardNodes f =
                    encode_nodes(g, nodes, out.config, ms.seq.ids, ms.seq.mask);
                NodeRef rows = g.take_rows(f.Z, ms.positions);
                NodeRef logits = g.matmul_nt(rows, nodes.W_emb);  // tied output head
                losses.push_back(g.cross_entropy_probs(g.softmax_rows(logits), ms.targets));
            }
            if (losses.empty()) continue;  // nothing was masked: vacuous objective
            NodeRef loss = mean_of(g, losses);
            g.backward(loss);

            std::vector<NodeRef> node_list = nodes.all();
            std::vector<const Tensor*> grads;
            for (NodeRef nref : node_list) grads.push_back(&nref->grad);
            adam.step(masters, grads);
            log_line(log, epoch, batch_no, loss->value.at(0, 0));
        }
    }
    return out;
}

SequenceClassifier train_task(const SequenceClassifier& classifier,
                              const std::vector<tokenize::TokenSequence>& seqs,
                              const std::vector<int>& labels, const TrainConfig& config,
                              std::ostream* log) {
    config.validate();
    if (seqs.empty()) throw DomainError("train_task: no training sequences");
    if (seqs.size() != labels.size())
        throw ShapeError("train_task: " + std::to_string(seqs.size()) + " sequences vs " +
                         std::to_string(labels.size()) + " labels");
    const size_t K = classifier.classes.size();
    if (K < 2) throw DomainError("train_task: classifier needs at least two classes");
    if (classifier.head_w.rows() != classifier.enc.config.E || classifier.head_w.cols() != K ||
        classifier.head_b.rows() != 1 || classifier.head_b.cols() != K)
        throw ShapeError("train_task: head shapes do not match encoder width / class count");
    for (int y : labels)
        if (y < 0 || static_cast<size_t>(y) >= K)
            throw DomainError("train_task: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(K) + ")");

    SequenceClassifier out = classifier;
    std::vector<Tensor*> masters;
    if (!config.freeze_encoder) masters = encoder::parameter_tensors(out.enc);
    masters.push_back(&out.head_w);
    masters.push_back(&out.head_b);

    Adam adam(config);
    SplitMix64 rng(config.seed);
    for (size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<size_t> order = epoch_order(seqs.size(), rng);
        size_t batch_no = 0;
        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            ++batch_no;
            size_t stop = std::min(order.size(), start + config.batch_size);
            Graph g;
            encoder::EncoderNodes nodes =
                encoder::register_params(g, out.enc, !config.freeze_encoder);
            NodeRef w = g.leaf(out.head_w, true);
            NodeRef b = g.leaf(out.head_b, true);
            std::vector<NodeRef> losses;
            for (size_t i = start; i < stop; ++i) {
                const tokenize::TokenSequence& seq = seqs[order[i]];
                encoder::ForwardNodes f = encode_nodes(g, nodes, out.enc.config, seq.ids,
                                                       seq.mask);
                NodeRef pooled = pool_nodes(g, f.Z, seq.ids, seq.mask, out.pooling,
                                            out.exclude_specials);
                NodeRef logits = g.add_bias_row(g.matmul(pooled, w), b);
                losses.push_back(g.cross_entropy_probs(g.softmax_rows(logits),
                                                       {labels[order[i]]}));
            }
            NodeRef loss = mean_of(g, losses);
            g.backward(loss);

            std::vector<const Tensor*> grads;
            if (!config.freeze_encoder)
                for (NodeRef nref : nodes.all()) grads.push_back(&nref->grad);
            grads.push_back(&w->grad);
            grads.push_back(&b->grad);
            adam.step(masters, grads);
            log_line(log, epoch, batch_no, loss->value.at(0, 0));
        }
    }
    return out;
}

Tensor predict_probs(const SequenceClassifier& classifier, const tokenize::TokenSequence& seq) {
    Graph g;
    encoder::EncoderNodes nodes = encoder::register_params(g, classifier.enc, false);
    encoder::ForwardNodes f = encode_nodes(g, nodes, classifier.enc.config, seq.ids, seq.mask);
    NodeRef pooled = pool_nodes(g, f.Z, seq.ids, seq.mask, classifier.pooling,
                                classifier.exclude_specials);
    NodeRef logits = g.add_bias_row(g.matmul(pooled, g.constant(classifier.head_w)),
                                    g.constant(classifier.head_b));
    Tensor probs = logits->value;
    softmax_rows_inplace(probs);
    return probs;
}

Combine parse_combine(const std::string& name) {
    if (name == "or") return Combine::kOr;
    if (name == "mean") return Combine::kMean;
    throw ConfigError("combine: expected \"or\" or \"mean\", got \"" + name + "\"");
}

LongPrediction predict_long(const SequenceClassifier& classifier,
                            const std::vector<int>& content_ids, size_t window, size_t stride,
                            Combine combine) {
    const size_t K = classifier.classes.size();
    if (combine == Combine::kOr && K != 2)
        throw DomainError("predict_long: OR combination needs a binary task, got " +
                          std::to_string(K) + " classes");
    if (window > classifier.enc.config.T_max)
        throw DomainError("predict_long: window " + std::to_string(window) + " exceeds T_max " +
                          std::to_string(classifier.enc.config.T_max));

    std::vector<tokenize::TokenSequence> chunks = tokenize::chunk(content_ids, window, stride);
    LongPrediction out;
    out.chunk_probs = Tensor(chunks.size(), K);
    for (size_t c = 0; c < chunks.size(); ++c) {
        Tensor p = predict_probs(classifier, chunks[c]);
        for (size_t k = 0; k < K; ++k) out.chunk_probs.at(c, k) = p.at(0, k);
    }

    if (combine == Combine::kOr) {
        out.label = 0;
        for (size_t c = 0; c < chunks.size(); ++c)
            if (out.chunk_probs.at(c, 1) >= 0.5) out.label = 1;
    } else {
        std::vector<double> mean(K, 0.0);
        for (size_t c = 0; c < chunks.size(); ++c)
            for (size_t k = 0; k < K; ++k) mean[k] += out.chunk_probs.at(c, k);
        size_t best = 0;
        for (size_t k = 1; k < K; ++k)
            if (mean[k] > mean[best]) best = k;
        out.label = static_cast<int>(best);
    }
    return out;
}

}  // namespace textclass::train
