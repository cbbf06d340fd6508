#include "textclass/attribution.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "textclass/autodiff.hpp"
#include "textclass/checkpoint.hpp"
#include "textclass/corpus.hpp"
#include "textclass/encoder.hpp"
#include "textclass/errors.hpp"

namespace textclass::attribution {

Tensor ig_path_integral(const std::function<Tensor(const Tensor&)>& grad_at, const Tensor& x,
                        const Tensor& baseline, size_t m) {
    if (m < 1) throw DomainError("integrated gradients: need at least one step");
    if (!x.same_shape(baseline))
        throw ShapeError("integrated gradients: input " + x.shape_str() + " vs baseline " +
                         baseline.shape_str());

    Tensor acc(x.rows(), x.cols());
    Tensor point(x.rows(), x.cols());
    for (size_t k = 1; k <= m; ++k) {
        double alpha = (static_cast<double>(k) - 0.5) / static_cast<double>(m);
        for (size_t i = 0; i < point.size(); ++i)
            point[i] = baseline[i] + alpha * (x[i] - baseline[i]);
        Tensor grad = grad_at(point);
        if (!grad.same_shape(x))
            throw ShapeError("integrated gradients: gradient shape " + grad.shape_str() +
                             " does not match input " + x.shape_str());
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += grad[i];
    }

    Tensor out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = (x[i] - baseline[i]) * acc[i] / static_cast<double>(m);
    return out;
}

namespace {

// Pre-softmax logit of the target class, evaluated at an arbitrary point in
// embedding space; optionally its gradient with respect to that point.
double target_logit(const train::SequenceClassifier& classifier,
                    const tokenize::TokenSequence& seq, const Tensor& onehot,
                    const Tensor& point, Tensor* grad_out) {
    autodiff::Graph g;
    auto params = encoder::register_params(g, classifier.enc, false);
    auto x0 = g.leaf(point, grad_out != nullptr);
    auto fwd = encoder::encode_embedded_nodes(g, params, classifier.enc.config, x0, seq.mask);
    auto pooled = encoder::pool_nodes(g, fwd.Z, seq.ids, seq.mask, classifier.pooling,
                                      classifier.exclude_specials);
    auto logits = g.add_bias_row(g.matmul(pooled, g.constant(classifier.head_w)),
                                 g.constant(classifier.head_b));
    auto f = g.sum(g.multiply(logits, g.constant(onehot)));
    if (grad_out) {
        g.backward(f);
        *grad_out = x0->grad;
    }
    return f->value.at(0, 0);
}

}  // namespace

AttributionResult integrated_gradients(const train::SequenceClassifier& classifier,
                                       const tokenize::TokenSequence& seq, int target,
                                       size_t m) {
    const auto& cfg = classifier.enc.config;
    size_t k_classes = classifier.head_w.cols();
    if (classifier.head_w.rows() != cfg.E)
        throw ShapeError("attribution: head " + classifier.head_w.shape_str() +
                         " does not match width " + std::to_string(cfg.E));
    if (target < 0 || static_cast<size_t>(target) >= k_classes)
        throw DomainError("attribution: target class " + std::to_string(target) +
                          " out of range for " + std::to_string(k_classes) + " classes");
    if (m < 1) throw DomainError("attribution: need at least one step");
    if (seq.ids.size() != seq.mask.size())
        throw ShapeError("attribution: ids/mask length mismatch");
    size_t T = seq.ids.size();
    if (T == 0) throw DomainError("attribution: empty sequence");
    if (T > cfg.T_max)
        throw DomainError("attribution: sequence length " + std::to_string(T) + " exceeds " +
                          std::to_string(cfg.T_max));

    // The path runs from an all-[PAD] baseline (same mask) to the input's
    // embedding rows; the positional encoding is applied inside the forward
    // pass, identically at every point, so it never contributes to x - x'.
    Tensor x(T, cfg.E), baseline(T, cfg.E);
    for (size_t t = 0; t < T; ++t) {
        int id = seq.ids[t];
        if (id < 0 || static_cast<size_t>(id) >= cfg.V)
            throw DomainError("attribution: token id " + std::to_string(id) +
                              " outside vocabulary");
        for (size_t e = 0; e < cfg.E; ++e) {
            x.at(t, e) = classifier.enc.W_emb.at(static_cast<size_t>(id), e);
            baseline.at(t, e) = classifier.enc.W_emb.at(tokenize::Vocabulary::kPad, e);
        }
    }

    Tensor onehot(1, k_classes);
    onehot.at(0, static_cast<size_t>(target)) = 1.0;

    AttributionResult result;
    result.target = target;
    result.steps = m;
    result.f_x = target_logit(classifier, seq, onehot, x, nullptr);
    result.f_baseline = target_logit(classifier, seq, onehot, baseline, nullptr);

    Tensor ig = ig_path_integral(
        [&](const Tensor& point) {
            Tensor grad;
            target_logit(classifier, seq, onehot, point, &grad);
            return grad;
        },
        x, baseline, m);

    result.scores.assign(T, 0.0);
    for (size_t t = 0; t < T; ++t) {
        double s = 0.0;
        for (size_t e = 0; e < cfg.E; ++e) s += ig.at(t, e);
        result.scores[t] = s;
        result.attribution_sum += s;
    }
    return result;
}

CompletenessReport completeness_check(const AttributionResult& result, double tol) {
    if (tol < 0.0) throw DomainError("completeness: negative tolerance");
    CompletenessReport report;
    report.delta = result.f_x - result.f_baseline;
    report.residual = std::fabs(result.attribution_sum - report.delta);
    report.pass = report.residual <= tol * std::fabs(report.delta) + 1e-9;
    return report;
}

namespace {

std::string escape_html(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

void check_doc(const AttributedDoc& doc) {
    if (doc.tokens.size() != doc.result.scores.size())
        throw ShapeError("attribution report: document " + doc.doc_id + " has " +
                         std::to_string(doc.tokens.size()) + " tokens but " +
                         std::to_string(doc.result.scores.size()) + " scores");
}

}  // namespace

std::string render_report_html(const std::vector<AttributedDoc>& docs) {
    std::string html;
    html +=
        "<!DOCTYPE html>\n"
        "<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Attribution report</title>\n"
        "<style>\n"
        "body { font-family: sans-serif; margin: 2em; }\n"
        "table { border-collapse: collapse; }\n"
        "th, td { border: 1px solid #999; padding: 4px 8px; text-align: left; }\n"
        "td.text { max-width: 60em; }\n"
        ".legend span { padding: 2px 6px; margin-right: 6px; }\n"
        "</style>\n</head>\n<body>\n"
        "<h1>Attribution report</h1>\n"
        "<p class=\"legend\">"
        "<span style=\"background-color: rgba(178,34,34,0.600)\">Negative</span>"
        "<span>Neutral</span>"
        "<span style=\"background-color: rgba(0,128,0,0.600)\">Positive</span>"
        "</p>\n"
        "<table>\n<tr><th>id</th><th>true</th><th>predicted</th><th>sum</th>"
        "<th>text</th></tr>\n";

    for (const auto& doc : docs) {
        check_doc(doc);
        double max_abs = 0.0;
        for (double s : doc.result.scores) max_abs = std::max(max_abs, std::fabs(s));

        html += "<tr><td>" + escape_html(doc.doc_id) + "</td><td>" +
                escape_html(doc.true_label) + "</td><td>" + escape_html(doc.predicted_label) +
                "</td><td>" + fmt("%.6g", doc.result.attribution_sum) +
                "</td><td class=\"text\">";
        for (size_t i = 0; i < doc.tokens.size(); ++i) {
            if (i > 0) html += ' ';
            double s = doc.result.scores[i];
            if (max_abs == 0.0 || s == 0.0) {
                html += "<span>" + escape_html(doc.tokens[i]) + "</span>";
                continue;
            }
            const char* color = s > 0.0 ? "0,128,0" : "178,34,34";
            html += "<span style=\"background-color: rgba(" + std::string(color) + "," +
                    fmt("%.3f", std::fabs(s) / max_abs) + ")\">" + escape_html(doc.tokens[i]) +
                    "</span>";
        }
        html += "</td></tr>\n";
    }
    html += "</table>\n</body>\n</html>\n";
    return html;
}

void render_report(const std::vector<AttributedDoc>& docs, const std::string& path) {
    checkpoint::write_text_file(path, render_report_html(docs));
}

std::string attribution_csv(const std::vector<AttributedDoc>& docs) {
    corpus::CsvTable table;
    table.header = {"doc_id", "position", "token", "score"};
    for (const auto& doc : docs) {
        check_doc(doc);
        for (size_t i = 0; i < doc.tokens.size(); ++i)
            table.rows.push_back({doc.doc_id, std::to_string(i), doc.tokens[i],
                                  fmt("%.9g", doc.result.scores[i])});
    }
    return corpus::format_csv(table);
}

}  // namespace textclass::attribution
