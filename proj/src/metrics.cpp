#include "textclass/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "textclass/errors.hpp"

namespace textclass::metrics {

namespace {

int argmax_row(const Tensor& probs, size_t i) {
    int best = 0;
    for (size_t k = 1; k < probs.cols(); ++k)
        if (probs.at(i, k) > probs.at(i, best)) best = static_cast<int>(k);
    return best;
}

}  // namespace

MetricsReport evaluate(const Tensor& probs, const std::vector<int>& labels) {
    const size_t n = probs.rows();
    const size_t K = probs.cols();
    if (n == 0 || K == 0) throw DomainError("evaluate: empty probability matrix");
    if (labels.size() != n)
        throw DomainError("evaluate: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(n) + " prediction rows");

    MetricsReport r;
    r.samples = n;
    r.confusion.assign(K, std::vector<int64_t>(K, 0));
    double ll = 0.0, brier = 0.0;
    int64_t correct = 0;
    for (size_t i = 0; i < n; ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<size_t>(y) >= K)
            throw DomainError("evaluate: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(K) + ") at row " + std::to_string(i));
        double row_sum = 0.0;
        for (size_t k = 0; k < K; ++k) row_sum += probs.at(i, k);
        if (std::abs(row_sum - 1.0) > 1e-9)
            throw DomainError("evaluate: probability row " + std::to_string(i) + " sums to " +
                              std::to_string(row_sum));

        double p_true = probs.at(i, y);
        ll -= std::log(p_true < 1e-15 ? 1e-15 : p_true);
        for (size_t k = 0; k < K; ++k) {
            double d = probs.at(i, k) - (static_cast<size_t>(y) == k ? 1.0 : 0.0);
            brier += d * d;
        }
        int pred = argmax_row(probs, i);
        ++r.confusion[y][pred];
        if (pred == y) ++correct;
    }
    r.log_loss = ll / static_cast<double>(n);
    r.brier = brier / static_cast<double>(n);
    r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return r;
}

DummyClassifier dummy_fit(const std::vector<int>& labels, int K) {
    if (labels.empty()) throw DomainError("dummy_fit: empty label list");
    if (K < 1) throw DomainError("dummy_fit: class count must be positive");
    DummyClassifier m;
    m.probs.assign(K, 0.0);
    for (int y : labels) {
        if (y < 0 || y >= K)
            throw DomainError("dummy_fit: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(K) + ")");
        m.probs[y] += 1.0;
    }
    for (auto& p : m.probs) p /= static_cast<double>(labels.size());
    m.hard = 0;
    for (int k = 1; k < K; ++k)
        if (m.probs[k] > m.probs[m.hard]) m.hard = k;
    return m;
}

Tensor dummy_predict(const DummyClassifier& model, size_t n) {
    Tensor out(n, model.probs.size());
    for (size_t i = 0; i < n; ++i)
        for (size_t k = 0; k < model.probs.size(); ++k) out.at(i, k) = model.probs[k];
    return out;
}

double confusion_accuracy(const std::vector<std::vector<int64_t>>& confusion) {
    int64_t total = 0, trace = 0;
    for (size_t i = 0; i < confusion.size(); ++i) {
        if (confusion[i].size() != confusion.size())
            throw ShapeError("confusion_accuracy: matrix is not square");
        for (size_t j = 0; j < confusion[i].size(); ++j) {
            if (confusion[i][j] < 0)
                throw DomainError("confusion_accuracy: negative count");
            total += confusion[i][j];
            if (i == j) trace += confusion[i][j];
        }
    }
    if (total == 0) throw DomainError("confusion_accuracy: all-zero matrix");
    return static_cast<double>(trace) / static_cast<double>(total);
}

std::string format_report(const MetricsReport& report) {
    std::ostringstream out;
    char line[128];
    std::snprintf(line, sizeof line, "log_loss,brier,accuracy\n%.6f,%.6f,%.6f\n",
                  report.log_loss, report.brier, report.accuracy);
    out << line;
    out << "confusion,rows=actual,cols=predicted\n";
    for (const auto& row : report.confusion) {
        for (size_t j = 0; j < row.size(); ++j) {
            if (j) out << ',';
            out << row[j];
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace textclass::metrics
