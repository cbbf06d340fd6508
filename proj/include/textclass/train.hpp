#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "textclass/encoder.hpp"
#include "textclass/tensor.hpp"
#include "textclass/tokenize.hpp"

namespace textclass::train {

// All learning lives here: L2 multinomial logistic regression on fixed
// feature vectors, masked-token fine-tuning of the encoder, joint
// encoder+head training, and chunked long-document prediction.

struct TrainConfig {
    size_t epochs = 10;
    size_t batch_size = 16;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    uint64_t seed = 42;
    double p_mask = 0.15;
    bool freeze_encoder = false;

    void validate() const;  // ConfigError on epochs < 1, p_mask outside [0,1], ...
};

struct LogRegModel {
    Tensor weights;  // d x K
    Tensor bias;     // 1 x K
    double l2_lambda = 0.0;
    std::vector<std::string> classes;
};

struct SequenceClassifier {
    encoder::EncoderModel enc;
    encoder::Pooling pooling = encoder::Pooling::kCls;
    bool exclude_specials = false;
    Tensor head_w;  // E x K
    Tensor head_b;  // 1 x K
    std::vector<std::string> classes;
};

// Adam on a fixed list of parameter tensors. Moment buffers are keyed by
// list position, so callers must pass the same ordering every step.
class Adam {
  public:
    Adam(double lr, double beta1, double beta2, double eps)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
    explicit Adam(const TrainConfig& c) : Adam(c.lr, c.beta1, c.beta2, c.eps) {}

    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

  private:
    double lr_, beta1_, beta2_, eps_;
    size_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Full-batch Adam on mean cross-entropy + l2_lambda * ||W||^2 (bias
// unpenalized), from zero init, until the gradient infinity-norm drops
// below 1e-6 or config.epochs steps have run.
LogRegModel train_logreg(const Tensor& features, const std::vector<int>& labels,
                         double l2_lambda, const TrainConfig& config,
                         const std::vector<std::string>& classes = {},
                         std::ostream* log = nullptr);

// softmax(x W + b) per row.
Tensor predict_logreg(const LogRegModel& model, const Tensor& features);

struct MaskedSequence {
    tokenize::TokenSequence seq;      // with [MASK] substitutions applied
    std::vector<int> positions;       // masked positions, ascending
    std::vector<int> targets;         // original ids at those positions
};

// Replaces each eligible (non-special, non-padding) position by [MASK]
// independently with probability p_mask.
MaskedSequence mlm_prepare(const tokenize::TokenSequence& seq, double p_mask, uint64_t seed);

// Masked-token fine-tuning. The V-way output head is the transpose of the
// embedding matrix (tied weights), so the returned encoder carries
// everything that was learned. Batches whose masked-target set is empty
// are skipped.
encoder::EncoderModel train_mlm(const encoder::EncoderModel& model,
                                const std::vector<tokenize::TokenSequence>& corpus,
                                const TrainConfig& config, std::ostream* log = nullptr);

// Joint training of pooling head and (unless config.freeze_encoder)
// encoder on labeled sequences.
SequenceClassifier train_task(const SequenceClassifier& classifier,
                              const std::vector<tokenize::TokenSequence>& seqs,
                              const std::vector<int>& labels, const TrainConfig& config,
                              std::ostream* log = nullptr);

// Class probabilities for one framed sequence.
Tensor predict_probs(const SequenceClassifier& classifier, const tokenize::TokenSequence& seq);

enum class Combine { kOr, kMean };
Combine parse_combine(const std::string& name);  // "or" | "mean"

struct LongPrediction {
    int label = 0;
    Tensor chunk_probs;  // chunks x K
};

// Splits an un-framed content id list into windows (tokenize::chunk),
// classifies each, and combines: OR labels positive (class 1) iff any
// chunk's positive probability reaches 0.5 and requires a binary task;
// MEAN takes the argmax of the averaged probability vector.
LongPrediction predict_long(const SequenceClassifier& classifier,
                            const std::vector<int>& content_ids, size_t window, size_t stride,
                            Combine combine);

}  // namespace textclass::train
