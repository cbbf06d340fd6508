#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "textclass/autodiff.hpp"
#include "textclass/tensor.hpp"
#include "textclass/tokenize.hpp"

namespace textclass::encoder {

// Transformer encoder: token embeddings + sinusoidal positional encoding,
// multi-head self-attention with additive -inf padding masks, residual +
// layer norm, per-position feed-forward, stacked L times. Attention
// projections carry no bias; the FFN does.

struct EncoderConfig {
    size_t V = 0;      // vocabulary size
    size_t E = 32;     // model width
    size_t H = 4;      // attention heads
    size_t d_K = 8;    // per-head width
    size_t L = 2;      // layers
    size_t T_max = 64; // maximum sequence length
    size_t F = 64;     // FFN hidden width
    bool positional = true;

    void validate() const;  // ConfigError on odd E, T_max < 3, zero dims
};

struct LayerParams {
    std::vector<Tensor> Wq, Wk, Wv;  // per head, E x d_K
    Tensor Wo;                       // (H*d_K) x E
    Tensor W1, b1;                   // E x F, 1 x F
    Tensor W2, b2;                   // F x E, 1 x E
    Tensor ln1_gamma, ln1_beta;      // 1 x E
    Tensor ln2_gamma, ln2_beta;      // 1 x E
};

struct EncoderModel {
    EncoderConfig config;
    Tensor W_emb;  // V x E
    std::vector<LayerParams> layers;
};

// Seeded Glorot-uniform init, bound sqrt(6 / (fan_in + fan_out)). Draw
// order (fixed for reproducibility): W_emb row-major, then per layer: per
// head Wq, Wk, Wv; Wo; W1; W2. Biases start at zero, layer norms at
// gamma=1 / beta=0.
EncoderModel init_encoder(const EncoderConfig& config, uint64_t seed);

// PE[pos, 2i] = sin(pos / 10000^(2i/E)), PE[pos, 2i+1] = cos(same angle).
Tensor positional_encoding(size_t T, size_t E);

enum class Pooling { kCls, kMean };
Pooling parse_pooling(const std::string& name);  // "cls" | "mean"
std::string pooling_name(Pooling p);

struct EncodedSequence {
    Tensor Z;  // T x E
    std::vector<std::vector<Tensor>> attentions;  // [layer][head], each T x T
    std::vector<int> ids;
    std::vector<int> mask;
};

// Plain-tensor forward passes (inference). These run the same graph code
// used for training, so the two can never drift apart.
std::pair<Tensor, std::vector<Tensor>> multi_head_attention(
    const Tensor& X, const std::vector<Tensor>& Wq, const std::vector<Tensor>& Wk,
    const std::vector<Tensor>& Wv, const Tensor& Wo, const std::vector<int>& mask);
Tensor encoder_layer(const Tensor& X, const LayerParams& params, const std::vector<int>& mask,
                     std::vector<Tensor>* attentions_out = nullptr);
EncodedSequence encode(const tokenize::TokenSequence& seq, const EncoderModel& model);

// Pooling. MEAN averages rows with mask 1; the exclude_specials flag also
// drops [CLS]/[SEP]/[MASK] rows ([UNK] stands in for a real word and is
// kept). CLS returns row 0.
Tensor pool(const EncodedSequence& enc, Pooling strategy, bool exclude_specials = false);
std::vector<int> pooling_mask(const std::vector<int>& ids, const std::vector<int>& mask,
                              bool exclude_specials);

// Encodes and pools a batch: one row per sequence.
Tensor embed_pooled(const std::vector<tokenize::TokenSequence>& seqs, const EncoderModel& model,
                    Pooling strategy, bool exclude_specials = false);

// ---- Differentiable forward (training) ----

struct LayerNodes {
    std::vector<autodiff::NodeRef> Wq, Wk, Wv;
    autodiff::NodeRef Wo, W1, b1, W2, b2;
    autodiff::NodeRef ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

struct EncoderNodes {
    autodiff::NodeRef W_emb;
    std::vector<LayerNodes> layers;

    std::vector<autodiff::NodeRef> all() const;  // flat parameter list, fixed order
};

// Registers every model tensor as a graph leaf (trainable or constant).
EncoderNodes register_params(autodiff::Graph& g, const EncoderModel& model, bool trainable);

// Pointers to the model's tensors in the same order as EncoderNodes::all().
std::vector<Tensor*> parameter_tensors(EncoderModel& model);

// Copies current node values back into the model (after an update step).
void read_back(const EncoderNodes& nodes, EncoderModel& model);

struct ForwardNodes {
    autodiff::NodeRef Z;
    std::vector<std::vector<autodiff::NodeRef>> attentions;  // softmax nodes
};

ForwardNodes encode_nodes(autodiff::Graph& g, const EncoderNodes& params,
                          const EncoderConfig& config, const std::vector<int>& ids,
                          const std::vector<int>& mask);

// Same forward but starting from an already-embedded T x E input (the
// positional encoding is still added here). Used for attribution, where
// the path of integration lives in embedding space.
ForwardNodes encode_embedded_nodes(autodiff::Graph& g, const EncoderNodes& params,
                                   const EncoderConfig& config, autodiff::NodeRef X0,
                                   const std::vector<int>& mask);

autodiff::NodeRef pool_nodes(autodiff::Graph& g, autodiff::NodeRef Z,
                             const std::vector<int>& ids, const std::vector<int>& mask,
                             Pooling strategy, bool exclude_specials);

}  // namespace textclass::encoder
