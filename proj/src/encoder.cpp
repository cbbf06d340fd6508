#include "textclass/encoder.hpp"

#include <cmath>
#include <limits>

#include "textclass/errors.hpp"
#include "textclass/rng.hpp"

namespace textclass::encoder {

using autodiff::Graph;
using autodiff::NodeRef;

void EncoderConfig::validate() const {
    if (V == 0 || E == 0 || H == 0 || d_K == 0 || F == 0)
        throw ConfigError("encoder config: V, E, H, d_K and F must all be positive");
    if (T_max < 3) throw ConfigError("encoder config: T_max must be at least 3");
    if (positional && E % 2 != 0)
        throw ConfigError("encoder config: positional encoding needs an even width, got E=" +
                          std::to_string(E));
}

namespace {

Tensor glorot(size_t rows, size_t cols, SplitMix64& rng) {
    double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Tensor t(rows, cols);
    for (auto& v : t.vec()) v = rng.next_symmetric(a);
    return t;
}

// Additive score bias: 0 over real key columns, -inf over padding, shared
// by every query row.
Tensor attention_bias(const std::vector<int>& mask) {
    const double ninf = -std::numeric_limits<double>::infinity();
    Tensor bias(mask.size(), mask.size());
    for (size_t i = 0; i < mask.size(); ++i)
        for (size_t j = 0; j < mask.size(); ++j)
            if (mask[j] == 0) bias.at(i, j) = ninf;
    return bias;
}

struct AttentionNodes {
    NodeRef Y1;
    std::vector<NodeRef> A;
};

AttentionNodes attention_nodes(Graph& g, NodeRef X, const std::vector<NodeRef>& Wq,
                               const std::vector<NodeRef>& Wk, const std::vector<NodeRef>& Wv,
                               NodeRef Wo, const std::vector<int>& mask) {
    if (Wq.empty() || Wq.size() != Wk.size() || Wq.size() != Wv.size())
        throw ShapeError("multi_head_attention: per-head weight lists disagree");
    if (mask.size() != X->value.rows())
        throw ShapeError("multi_head_attention: mask length " + std::to_string(mask.size()) +
                         " for input " + X->value.shape_str());
    bool any = false;
    for (int v : mask) any = any || v != 0;
    if (!any) throw DomainError("multi_head_attention: every position is masked");

    NodeRef bias = g.constant(attention_bias(mask));
    AttentionNodes out;
    std::vector<NodeRef> heads;
    for (size_t h = 0; h < Wq.size(); ++h) {
        NodeRef Q = g.matmul(X, Wq[h]);
        NodeRef K = g.matmul(X, Wk[h]);
        NodeRef V = g.matmul(X, Wv[h]);
        double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(Wq[h]->value.cols()));
        NodeRef scores = g.add(g.scale(g.matmul_nt(Q, K), inv_sqrt), bias);
        NodeRef A = g.softmax_rows(scores);
        heads.push_back(g.matmul(A, V));
        out.A.push_back(A);
    }
    out.Y1 = g.matmul(g.concat_cols(heads), Wo);
    return out;
}

struct LayerOut {
    NodeRef Z;
    std::vector<NodeRef> A;
};

LayerOut layer_nodes(Graph& g, NodeRef X, const LayerNodes& p, const std::vector<int>& mask) {
    AttentionNodes att = attention_nodes(g, X, p.Wq, p.Wk, p.Wv, p.Wo, mask);
    NodeRef Y2 = g.layer_norm_rows(g.add(X, att.Y1), p.ln1_gamma, p.ln1_beta);
    NodeRef hidden = g.relu(g.add_bias_row(g.matmul(Y2, p.W1), p.b1));
    NodeRef Y3 = g.add_bias_row(g.matmul(hidden, p.W2), p.b2);
    return {g.layer_norm_rows(g.add(Y2, Y3), p.ln2_gamma, p.ln2_beta), std::move(att.A)};
}

LayerNodes register_layer(Graph& g, const LayerParams& p, bool trainable) {
    LayerNodes n;
    for (const Tensor& w : p.Wq) n.Wq.push_back(g.leaf(w, trainable));
    for (const Tensor& w : p.Wk) n.Wk.push_back(g.leaf(w, trainable));
    for (const Tensor& w : p.Wv) n.Wv.push_back(g.leaf(w, trainable));
    n.Wo = g.leaf(p.Wo, trainable);
    n.W1 = g.leaf(p.W1, trainable);
    n.b1 = g.leaf(p.b1, trainable);
    n.W2 = g.leaf(p.W2, trainable);
    n.b2 = g.leaf(p.b2, trainable);
    n.ln1_gamma = g.leaf(p.ln1_gamma, trainable);
    n.ln1_beta = g.leaf(p.ln1_beta, trainable);
    n.ln2_gamma = g.leaf(p.ln2_gamma, trainable);
    n.ln2_beta = g.leaf(p.ln2_beta, trainable);
    return n;
}

}  // namespace

EncoderModel init_encoder(const EncoderConfig& config, uint64_t seed) {
    config.validate();
    SplitMix64 rng(seed);
    EncoderModel m;
    m.config = config;
    m.W_emb = glorot(config.V, config.E, rng);
    for (size_t l = 0; l < config.L; ++l) {
        LayerParams p;
        for (size_t h = 0; h < config.H; ++h) {
            p.Wq.push_back(glorot(config.E, config.d_K, rng));
            p.Wk.push_back(glorot(config.E, config.d_K, rng));
            p.Wv.push_back(glorot(config.E, config.d_K, rng));
        }
        p.Wo = glorot(config.H * config.d_K, config.E, rng);
        p.W1 = glorot(config.E, config.F, rng);
        p.W2 = glorot(config.F, config.E, rng);
        p.b1 = Tensor(1, config.F);
        p.b2 = Tensor(1, config.E);
        p.ln1_gamma = Tensor(1, config.E, 1.0);
        p.ln1_beta = Tensor(1, config.E);
        p.ln2_gamma = Tensor(1, config.E, 1.0);
        p.ln2_beta = Tensor(1, config.E);
        m.layers.push_back(std::move(p));
    }
    return m;
}

Tensor positional_encoding(size_t T, size_t E) {
    if (E % 2 != 0)
        throw ConfigError("positional_encoding: width must be even, got " + std::to_string(E));
    Tensor pe(T, E);
    for (size_t pos = 0; pos < T; ++pos)
        for (size_t i = 0; 2 * i < E; ++i) {
            double angle = static_cast<double>(pos) /
                           std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(E));
            pe.at(pos, 2 * i) = std::sin(angle);
            pe.at(pos, 2 * i + 1) = std::cos(angle);
        }
    return pe;
}

Pooling parse_pooling(const std::string& name) {
    if (name == "cls") return Pooling::kCls;
    if (name == "mean") return Pooling::kMean;
    throw ConfigError("pooling: expected \"cls\" or \"mean\", got \"" + name + "\"");
}

std::string pooling_name(Pooling p) { return p == Pooling::kCls ? "cls" : "mean"; }

std::vector<autodiff::NodeRef> EncoderNodes::all() const {
    std::vector<NodeRef> out{W_emb};
    for (const LayerNodes& l : layers) {
        out.insert(out.end(), l.Wq.begin(), l.Wq.end());
        out.insert(out.end(), l.Wk.begin(), l.Wk.end());
        out.insert(out.end(), l.Wv.begin(), l.Wv.end());
        out.insert(out.end(), {l.Wo, l.W1, l.b1, l.W2, l.b2, l.ln1_gamma, l.ln1_beta,
                               l.ln2_gamma, l.ln2_beta});
    }
    return out;
}

EncoderNodes register_params(Graph& g, const EncoderModel& model, bool trainable) {
    EncoderNodes n;
    n.W_emb = g.leaf(model.W_emb, trainable);
    for (const LayerParams& p : model.layers) n.layers.push_back(register_layer(g, p, trainable));
    return n;
}

std::vector<Tensor*> parameter_tensors(EncoderModel& model) {
    std::vector<Tensor*> out{&model.W_emb};
    for (LayerParams& p : model.layers) {
        for (Tensor& w : p.Wq) out.push_back(&w);
        for (Tensor& w : p.Wk) out.push_back(&w);
        for (Tensor& w : p.Wv) out.push_back(&w);
        out.insert(out.end(), {&p.Wo, &p.W1, &p.b1, &p.W2, &p.b2, &p.ln1_gamma, &p.ln1_beta,
                               &p.ln2_gamma, &p.ln2_beta});
    }
    return out;
}

void read_back(const EncoderNodes& nodes, EncoderModel& model) {
    model.W_emb = nodes.W_emb->value;
    for (size_t l = 0; l < model.layers.size(); ++l) {
        LayerParams& p = model.layers[l];
        const LayerNodes& n = nodes.layers[l];
        for (size_t h = 0; h < p.Wq.size(); ++h) {
            p.Wq[h] = n.Wq[h]->value;
            p.Wk[h] = n.Wk[h]->value;
            p.Wv[h] = n.Wv[h]->value;
        }
        p.Wo = n.Wo->value;
        p.W1 = n.W1->value;
        p.b1 = n.b1->value;
        p.W2 = n.W2->value;
        p.b2 = n.b2->value;
        p.ln1_gamma = n.ln1_gamma->value;
        p.ln1_beta = n.ln1_beta->value;
        p.ln2_gamma = n.ln2_gamma->value;
        p.ln2_beta = n.ln2_beta->value;
    }
}

ForwardNodes encode_nodes(Graph& g, const EncoderNodes& params, const EncoderConfig& config,
                          const std::vector<int>& ids, const std::vector<int>& mask) {
    if (ids.size() != mask.size())
        throw ShapeError("encode: " + std::to_string(ids.size()) + " ids vs " +
                         std::to_string(mask.size()) + " mask entries");
    if (ids.empty()) throw DomainError("encode: empty sequence");
    if (ids.size() > config.T_max)
        throw DomainError("encode: sequence length " + std::to_string(ids.size()) +
                          " exceeds T_max " + std::to_string(config.T_max));
    for (int id : ids)
        if (id < 0 || static_cast<size_t>(id) >= config.V)
            throw DomainError("encode: token id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(config.V));

    return encode_embedded_nodes(g, params, config, g.embedding_gather(params.W_emb, ids),
                                 mask);
}

ForwardNodes encode_embedded_nodes(Graph& g, const EncoderNodes& params,
                                   const EncoderConfig& config, NodeRef X0,
                                   const std::vector<int>& mask) {
    if (X0->value.rows() != mask.size() || X0->value.cols() != config.E)
        throw ShapeError("encode: embedded input " + X0->value.shape_str() +
                         " does not match mask length " + std::to_string(mask.size()) +
                         " and width " + std::to_string(config.E));
    NodeRef X = X0;
    if (config.positional)
        X = g.add(X, g.constant(positional_encoding(mask.size(), config.E)));

    ForwardNodes out;
    for (const LayerNodes& layer : params.layers) {
        LayerOut lo = layer_nodes(g, X, layer, mask);
        X = lo.Z;
        out.attentions.push_back(std::move(lo.A));
    }
    out.Z = X;
    return out;
}

std::vector<int> pooling_mask(const std::vector<int>& ids, const std::vector<int>& mask,
                              bool exclude_specials) {
    std::vector<int> eff(mask.size(), 0);
    for (size_t i = 0; i < mask.size(); ++i) {
        bool keep = mask[i] != 0;
        if (keep && exclude_specials) {
            int id = ids[i];
            keep = id != tokenize::Vocabulary::kCls && id != tokenize::Vocabulary::kSep &&
                   id != tokenize::Vocabulary::kMask;
        }
        eff[i] = keep ? 1 : 0;
    }
    return eff;
}

NodeRef pool_nodes(Graph& g, NodeRef Z, const std::vector<int>& ids,
                   const std::vector<int>& mask, Pooling strategy, bool exclude_specials) {
    bool any = false;
    for (int v : mask) any = any || v != 0;
    if (!any) throw DomainError("pool: every position is masked");
    if (strategy == Pooling::kCls) return g.take_rows(Z, {0});
    std::vector<int> eff = pooling_mask(ids, mask, exclude_specials);
    return g.masked_mean_rows(Z, eff);  // DomainError if nothing survives
}

std::pair<Tensor, std::vector<Tensor>> multi_head_attention(
    const Tensor& X, const std::vector<Tensor>& Wq, const std::vector<Tensor>& Wk,
    const std::vector<Tensor>& Wv, const Tensor& Wo, const std::vector<int>& mask) {
    Graph g;
    std::vector<NodeRef> q, k, v;
    for (const Tensor& t : Wq) q.push_back(g.constant(t));
    for (const Tensor& t : Wk) k.push_back(g.constant(t));
    for (const Tensor& t : Wv) v.push_back(g.constant(t));
    AttentionNodes att = attention_nodes(g, g.constant(X), q, k, v, g.constant(Wo), mask);
    std::vector<Tensor> attentions;
    for (NodeRef a : att.A) attentions.push_back(a->value);
    return {att.Y1->value, std::move(attentions)};
}

Tensor encoder_layer(const Tensor& X, const LayerParams& params, const std::vector<int>& mask,
                     std::vector<Tensor>* attentions_out) {
    Graph g;
    LayerNodes n = register_layer(g, params, false);
    LayerOut lo = layer_nodes(g, g.constant(X), n, mask);
    if (attentions_out) {
        attentions_out->clear();
        for (NodeRef a : lo.A) attentions_out->push_back(a->value);
    }
    return lo.Z->value;
}

EncodedSequence encode(const tokenize::TokenSequence& seq, const EncoderModel& model) {
    Graph g;
    EncoderNodes params = register_params(g, model, false);
    ForwardNodes f = encode_nodes(g, params, model.config, seq.ids, seq.mask);
    EncodedSequence out;
    out.Z = f.Z->value;
    for (const auto& layer : f.attentions) {
        std::vector<Tensor> heads;
        for (NodeRef a : layer) heads.push_back(a->value);
        out.attentions.push_back(std::move(heads));
    }
    out.ids = seq.ids;
    out.mask = seq.mask;
    return out;
}

Tensor pool(const EncodedSequence& enc, Pooling strategy, bool exclude_specials) {
    Graph g;
    return pool_nodes(g, g.constant(enc.Z), enc.ids, enc.mask, strategy, exclude_specials)
        ->value;
}

Tensor embed_pooled(const std::vector<tokenize::TokenSequence>& seqs, const EncoderModel& model,
                    Pooling strategy, bool exclude_specials) {
    Tensor out(seqs.size(), model.config.E);
    for (size_t i = 0; i < seqs.size(); ++i) {
        Tensor row = pool(encode(seqs[i], model), strategy, exclude_specials);
        for (size_t e = 0; e < out.cols(); ++e) out.at(i, e) = row.at(0, e);
    }
    return out;
}

}  // namespace textclass::encoder
