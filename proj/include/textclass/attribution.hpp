#pragma once

#include <functional>
#include <string>
#include <vector>

#include "textclass/tensor.hpp"
#include "textclass/tokenize.hpp"
#include "textclass/train.hpp"

namespace textclass::attribution {

// Integrated gradients with an all-[PAD] baseline (sharing the input's
// attention mask), integrated over the straight line in embedding space
// with the midpoint rule. The attributed output F is the pre-softmax logit
// of the target class; a token's score is the sum of its embedding-level
// attributions, signed.

struct AttributionResult {
    std::vector<double> scores;  // one per input position
    int target = 0;
    double attribution_sum = 0.0;
    double f_x = 0.0;         // logit at the input
    double f_baseline = 0.0;  // logit at the baseline
    size_t steps = 0;
};

// (x - baseline) ∘ mean of grad_at over the midpoints
// baseline + (k-0.5)/m * (x - baseline), k = 1..m. Exposed so the
// quadrature can be validated on closed-form gradients.
Tensor ig_path_integral(const std::function<Tensor(const Tensor&)>& grad_at, const Tensor& x,
                        const Tensor& baseline, size_t m);

AttributionResult integrated_gradients(const train::SequenceClassifier& classifier,
                                       const tokenize::TokenSequence& seq, int target,
                                       size_t m);

struct CompletenessReport {
    bool pass = false;
    double residual = 0.0;  // |attribution_sum - (f_x - f_baseline)|
    double delta = 0.0;     // f_x - f_baseline
};

CompletenessReport completeness_check(const AttributionResult& result, double tol);

struct AttributedDoc {
    std::string doc_id;
    std::vector<std::string> tokens;  // display text, one per scored position
    std::string true_label;
    std::string predicted_label;
    AttributionResult result;
};

// One table row per document; tokens tinted green for positive and red for
// negative scores, opacity proportional to |score| / max |score|.
std::string render_report_html(const std::vector<AttributedDoc>& docs);
void render_report(const std::vector<AttributedDoc>& docs, const std::string& path);

// "doc_id,position,token,score" rows.
std::string attribution_csv(const std::vector<AttributedDoc>& docs);

}  // namespace textclass::attribution
