#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textclass/tensor.hpp"

namespace textclass::metrics {

struct MetricsReport {
    double log_loss = 0.0;  // natural log, mean over samples
    double brier = 0.0;     // sum-over-classes convention, in [0, 2]
    double accuracy = 0.0;
    std::vector<std::vector<int64_t>> confusion;  // rows = actual, cols = predicted
    size_t samples = 0;
};

// probs: n x K rows summing to 1 (checked to 1e-9); labels in [0, K).
// Hard predictions by argmax, lowest index wins ties. Probabilities are
// clamped at 1e-15 inside the log.
MetricsReport evaluate(const Tensor& probs, const std::vector<int>& labels);

// Constant-probability baseline: emits the training class frequencies.
struct DummyClassifier {
    std::vector<double> probs;
    int hard = 0;  // most frequent class, lowest index on ties
};

DummyClassifier dummy_fit(const std::vector<int>& labels, int K);
Tensor dummy_predict(const DummyClassifier& model, size_t n);

double confusion_accuracy(const std::vector<std::vector<int64_t>>& confusion);

// CSV metrics line followed by the confusion matrix block.
std::string format_report(const MetricsReport& report);

}  // namespace textclass::metrics
