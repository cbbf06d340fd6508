#include "textclass/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "textclass/kernels.hpp"

namespace textclass::autodiff {

namespace {

constexpr double kProbClamp = 1e-15;
constexpr double kLnEps = 1e-5;

void accumulate(Tensor& grad, const Tensor& delta) {
    for (size_t i = 0; i < grad.vec().size(); ++i) grad.vec()[i] += delta.vec()[i];
}

bool any_requires(const std::vector<NodeRef>& parents) {
    return std::any_of(parents.begin(), parents.end(),
                       [](NodeRef p) { return p->requires_grad; });
}

}  // namespace

NodeRef Graph::leaf(Tensor value, bool requires_grad) {
    tape_.push_back(std::make_unique<Node>(std::move(value), requires_grad));
    return tape_.back().get();
}

NodeRef Graph::record(Tensor value, std::string op, std::vector<NodeRef> parents,
                      std::function<void(Node&)> backward_fn) {
    tape_.push_back(std::make_unique<Node>(std::move(value), any_requires(parents)));
    Node& n = *tape_.back();
    n.op = std::move(op);
    n.parents = std::move(parents);
    n.backward_fn = std::move(backward_fn);
    return &n;
}

NodeRef Graph::matmul(NodeRef a, NodeRef b) {
    Tensor out = kernels::matmul(a->value, b->value);
    return record(std::move(out), "matmul", {a, b}, [](Node& n) {
        NodeRef a = n.parents[0], b = n.parents[1];
        accumulate(a->grad, kernels::matmul_nt(n.grad, b->value));
        accumulate(b->grad, kernels::matmul_tn(a->value, n.grad));
    });
}

NodeRef Graph::matmul_nt(NodeRef a, NodeRef b) {
    Tensor out = kernels::matmul_nt(a->value, b->value);
    return record(std::move(out), "matmul_nt", {a, b}, [](Node& n) {
        NodeRef a = n.parents[0], b = n.parents[1];
        accumulate(a->grad, kernels::matmul(n.grad, b->value));
        accumulate(b->grad, kernels::matmul_tn(n.grad, a->value));
    });
}

NodeRef Graph::add(NodeRef a, NodeRef b) {
    check_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    accumulate(out, b->value);
    return record(std::move(out), "add", {a, b}, [](Node& n) {
        accumulate(n.parents[0]->grad, n.grad);
        accumulate(n.parents[1]->grad, n.grad);
    });
}

NodeRef Graph::sub(NodeRef a, NodeRef b) {
    check_same_shape(a->value, b->value, "sub");
    Tensor out = a->value;
    for (size_t i = 0; i < out.vec().size(); ++i) out.vec()[i] -= b->value.vec()[i];
    return record(std::move(out), "sub", {a, b}, [](Node& n) {
        accumulate(n.parents[0]->grad, n.grad);
        for (size_t i = 0; i < n.grad.vec().size(); ++i)
            n.parents[1]->grad.vec()[i] -= n.grad.vec()[i];
    });
}

NodeRef Graph::add_bias_row(NodeRef x, NodeRef bias) {
    if (bias->value.rows() != 1 || bias->value.cols() != x->value.cols())
        throw ShapeError("add_bias_row: bias " + bias->value.shape_str() + " for input " +
                         x->value.shape_str());
    Tensor out = x->value;
    for (size_t i = 0; i < out.rows(); ++i)
        for (size_t j = 0; j < out.cols(); ++j) out.at(i, j) += bias->value.at(0, j);
    return record(std::move(out), "add_bias_row", {x, bias}, [](Node& n) {
        accumulate(n.parents[0]->grad, n.grad);
        Tensor& bg = n.parents[1]->grad;
        for (size_t i = 0; i < n.grad.rows(); ++i)
            for (size_t j = 0; j < n.grad.cols(); ++j) bg.at(0, j) += n.grad.at(i, j);
    });
}

NodeRef Graph::multiply(NodeRef a, NodeRef b) {
    check_same_shape(a->value, b->value, "multiply");
    Tensor out = a->value;
    for (size_t i = 0; i < out.vec().size(); ++i) out.vec()[i] *= b->value.vec()[i];
    return record(std::move(out), "multiply", {a, b}, [](Node& n) {
        NodeRef a = n.parents[0], b = n.parents[1];
        for (size_t i = 0; i < n.grad.vec().size(); ++i) {
            a->grad.vec()[i] += n.grad.vec()[i] * b->value.vec()[i];
            b->grad.vec()[i] += n.grad.vec()[i] * a->value.vec()[i];
        }
    });
}

NodeRef Graph::scale(NodeRef a, double c) {
    Tensor out = a->value;
    for (auto& v : out.vec()) v *= c;
    return record(std::move(out), "scale", {a}, [c](Node& n) {
        for (size_t i = 0; i < n.grad.vec().size(); ++i)
            n.parents[0]->grad.vec()[i] += c * n.grad.vec()[i];
    });
}

NodeRef Graph::relu(NodeRef a) {
    Tensor out = a->value;
    for (auto& v : out.vec()) v = v > 0.0 ? v : 0.0;
    return record(std::move(out), "relu", {a}, [](Node& n) {
        const Tensor& x = n.parents[0]->value;
        for (size_t i = 0; i < n.grad.vec().size(); ++i)
            if (x.vec()[i] > 0.0) n.parents[0]->grad.vec()[i] += n.grad.vec()[i];
    });
}

NodeRef Graph::softmax_rows(NodeRef a) {
    Tensor out = a->value;
    for (size_t i = 0; i < out.rows(); ++i) {
        double mx = out.at(i, 0);
        for (size_t j = 1; j < out.cols(); ++j) mx = std::max(mx, out.at(i, j));
        double sum = 0.0;
        for (size_t j = 0; j < out.cols(); ++j) {
            out.at(i, j) = std::exp(out.at(i, j) - mx);
            sum += out.at(i, j);
        }
        for (size_t j = 0; j < out.cols(); ++j) out.at(i, j) /= sum;
    }
    return record(std::move(out), "softmax_rows", {a}, [](Node& n) {
        const Tensor& y = n.value;
        Tensor& ag = n.parents[0]->grad;
        for (size_t i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (size_t j = 0; j < y.cols(); ++j) dot += n.grad.at(i, j) * y.at(i, j);
            for (size_t j = 0; j < y.cols(); ++j)
                ag.at(i, j) += y.at(i, j) * (n.grad.at(i, j) - dot);
        }
    });
}

NodeRef Graph::layer_norm_rows(NodeRef x, NodeRef gamma, NodeRef beta) {
    const size_t c = x->value.cols();
    if (gamma->value.rows() != 1 || gamma->value.cols() != c || beta->value.rows() != 1 ||
        beta->value.cols() != c)
        throw ShapeError("layer_norm_rows: scale/shift must be 1x" + std::to_string(c));

    Tensor out(x->value.rows(), c);
    Tensor xhat(x->value.rows(), c);
    std::vector<double> inv_std(x->value.rows());
    for (size_t i = 0; i < out.rows(); ++i) {
        double mean = 0.0;
        for (size_t j = 0; j < c; ++j) mean += x->value.at(i, j);
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (size_t j = 0; j < c; ++j) {
            double d = x->value.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        inv_std[i] = 1.0 / std::sqrt(var + kLnEps);
        for (size_t j = 0; j < c; ++j) {
            xhat.at(i, j) = (x->value.at(i, j) - mean) * inv_std[i];
            out.at(i, j) = gamma->value.at(0, j) * xhat.at(i, j) + beta->value.at(0, j);
        }
    }
    return record(std::move(out), "layer_norm_rows", {x, gamma, beta},
                  [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
                      NodeRef x = n.parents[0], gamma = n.parents[1], beta = n.parents[2];
                      const size_t c = x->value.cols();
                      for (size_t i = 0; i < x->value.rows(); ++i) {
                          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                          for (size_t j = 0; j < c; ++j) {
                              double dy = n.grad.at(i, j);
                              gamma->grad.at(0, j) += dy * xhat.at(i, j);
                              beta->grad.at(0, j) += dy;
                              double dxh = dy * gamma->value.at(0, j);
                              mean_dxhat += dxh;
                              mean_dxhat_xhat += dxh * xhat.at(i, j);
                          }
                          mean_dxhat /= static_cast<double>(c);
                          mean_dxhat_xhat /= static_cast<double>(c);
                          for (size_t j = 0; j < c; ++j) {
                              double dxh = n.grad.at(i, j) * gamma->value.at(0, j);
                              x->grad.at(i, j) += inv_std[i] * (dxh - mean_dxhat -
                                                                xhat.at(i, j) * mean_dxhat_xhat);
                          }
                      }
                  });
}

NodeRef Graph::embedding_gather(NodeRef table, const std::vector<int>& ids) {
    if (ids.empty()) throw DomainError("embedding_gather: empty id list");
    Tensor out(ids.size(), table->value.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<size_t>(ids[i]) >= table->value.rows())
            throw DomainError("embedding_gather: id " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(table->value.rows()));
        for (size_t j = 0; j < out.cols(); ++j) out.at(i, j) = table->value.at(ids[i], j);
    }
    return record(std::move(out), "embedding_gather", {table}, [ids](Node& n) {
        Tensor& tg = n.parents[0]->grad;
        for (size_t i = 0; i < ids.size(); ++i)
            for (size_t j = 0; j < n.grad.cols(); ++j) tg.at(ids[i], j) += n.grad.at(i, j);
    });
}

NodeRef Graph::take_rows(NodeRef x, const std::vector<int>& rows) {
    if (rows.empty()) throw DomainError("take_rows: empty row list");
    Tensor out(rows.size(), x->value.cols());
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || static_cast<size_t>(rows[i]) >= x->value.rows())
            throw DomainError("take_rows: row " + std::to_string(rows[i]) + " outside " +
                              x->value.shape_str());
        for (size_t j = 0; j < out.cols(); ++j) out.at(i, j) = x->value.at(rows[i], j);
    }
    return record(std::move(out), "take_rows", {x}, [rows](Node& n) {
        Tensor& xg = n.parents[0]->grad;
        for (size_t i = 0; i < rows.size(); ++i)
            for (size_t j = 0; j < n.grad.cols(); ++j) xg.at(rows[i], j) += n.grad.at(i, j);
    });
}

NodeRef Graph::concat_cols(const std::vector<NodeRef>& parts) {
    if (parts.empty()) throw DomainError("concat_cols: no inputs");
    size_t rows = parts[0]->value.rows(), cols = 0;
    for (NodeRef p : parts) {
        if (p->value.rows() != rows)
            throw ShapeError("concat_cols: row counts disagree (" + p->value.shape_str() + ")");
        cols += p->value.cols();
    }
    Tensor out(rows, cols);
    size_t off = 0;
    for (NodeRef p : parts) {
        for (size_t i = 0; i < rows; ++i)
            for (size_t j = 0; j < p->value.cols(); ++j) out.at(i, off + j) = p->value.at(i, j);
        off += p->value.cols();
    }
    return record(std::move(out), "concat_cols", parts, [](Node& n) {
        size_t off = 0;
        for (NodeRef p : n.parents) {
            for (size_t i = 0; i < p->grad.rows(); ++i)
                for (size_t j = 0; j < p->grad.cols(); ++j)
                    p->grad.at(i, j) += n.grad.at(i, off + j);
            off += p->grad.cols();
        }
    });
}

NodeRef Graph::masked_mean_rows(NodeRef x, const std::vector<int>& mask) {
    if (mask.size() != x->value.rows())
        throw ShapeError("masked_mean_rows: mask length " + std::to_string(mask.size()) +
                         " for " + x->value.shape_str());
    size_t m = 0;
    for (int v : mask) m += v != 0;
    if (m == 0) throw DomainError("masked_mean_rows: mask selects no rows");

    Tensor out(1, x->value.cols());
    for (size_t i = 0; i < x->value.rows(); ++i)
        if (mask[i] != 0)
            for (size_t j = 0; j < x->value.cols(); ++j) out.at(0, j) += x->value.at(i, j);
    for (auto& v : out.vec()) v /= static_cast<double>(m);
    return record(std::move(out), "masked_mean_rows", {x}, [mask, m](Node& n) {
        Tensor& xg = n.parents[0]->grad;
        double inv = 1.0 / static_cast<double>(m);
        for (size_t i = 0; i < xg.rows(); ++i)
            if (mask[i] != 0)
                for (size_t j = 0; j < xg.cols(); ++j) xg.at(i, j) += n.grad.at(0, j) * inv;
    });
}

NodeRef Graph::sum(NodeRef a) {
    double s = 0.0;
    for (double v : a->value.vec()) s += v;
    return record(Tensor::scalar(s), "sum", {a}, [](Node& n) {
        double g = n.grad.at(0, 0);
        for (auto& v : n.parents[0]->grad.vec()) v += g;
    });
}

NodeRef Graph::mean(NodeRef a) {
    double s = 0.0;
    for (double v : a->value.vec()) s += v;
    double count = static_cast<double>(a->value.vec().size());
    return record(Tensor::scalar(s / count), "mean", {a}, [count](Node& n) {
        double g = n.grad.at(0, 0) / count;
        for (auto& v : n.parents[0]->grad.vec()) v += g;
    });
}

NodeRef Graph::cross_entropy_probs(NodeRef probs, const std::vector<int>& labels) {
    if (labels.size() != probs->value.rows())
        throw ShapeError("cross_entropy_probs: " + std::to_string(labels.size()) +
                         " labels for " + probs->value.shape_str());
    double loss = 0.0;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<size_t>(labels[i]) >= probs->value.cols())
            throw DomainError("cross_entropy_probs: label " + std::to_string(labels[i]) +
                              " outside [0, " + std::to_string(probs->value.cols()) + ")");
        double p = probs->value.at(i, labels[i]);
        loss -= std::log(p < kProbClamp ? kProbClamp : p);
    }
    loss /= static_cast<double>(labels.size());
    return record(Tensor::scalar(loss), "cross_entropy_probs", {probs}, [labels](Node& n) {
        Tensor& pg = n.parents[0]->grad;
        const Tensor& p = n.parents[0]->value;
        double g = n.grad.at(0, 0) / static_cast<double>(labels.size());
        for (size_t i = 0; i < labels.size(); ++i) {
            double pi = p.at(i, labels[i]);
            if (pi >= kProbClamp) pg.at(i, labels[i]) -= g / pi;
        }
    });
}

void Graph::backward(NodeRef root) {
    if (root->value.rows() != 1 || root->value.cols() != 1)
        throw DomainError("backward: root must be a 1x1 scalar, got " + root->value.shape_str());
    root->grad.at(0, 0) = 1.0;
    // Reverse sweep over the tape; nodes outside the root's ancestry carry
    // zero gradient and contribute nothing.
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it)
        if ((*it)->backward_fn && (*it)->requires_grad) (*it)->backward_fn(**it);
}

void Graph::zero_grads() {
    for (auto& n : tape_) n->grad.fill(0.0);
}

double grad_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                  const Tensor& analytic_grad, double h) {
    check_same_shape(x, analytic_grad, "grad_check");
    double worst = 0.0;
    Tensor probe = x;
    for (size_t i = 0; i < probe.vec().size(); ++i) {
        double keep = probe.vec()[i];
        probe.vec()[i] = keep + h;
        double up = f(probe);
        probe.vec()[i] = keep - h;
        double down = f(probe);
        probe.vec()[i] = keep;
        double numeric = (up - down) / (2.0 * h);
        double analytic = analytic_grad.vec()[i];
        double denom = std::abs(analytic) + std::abs(numeric) + 1e-12;
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
    return worst;
}

}  // namespace textclass::autodiff
