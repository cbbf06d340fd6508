#include "textclass/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace textclass::kernels {

namespace {

std::atomic<ExecPolicy> g_policy{ExecPolicy::Parallel};

void check_matmul_shapes(const Tensor& a, const Tensor& b, size_t a_inner, size_t b_inner,
                         const char* op) {
    size_t ai = a_inner ? a.rows() : a.cols();
    size_t bi = b_inner ? b.cols() : b.rows();
    if (ai != bi)
        throw ShapeError(std::string(op) + ": inner dimensions disagree, " + a.shape_str() +
                         " vs " + b.shape_str());
}

}  // namespace

ExecPolicy exec_policy() { return g_policy.load(); }
void set_exec_policy(ExecPolicy p) { g_policy.store(p); }

int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// A is n x k, B is k x m, C is n x m. Inner loops run in i-k-j order so the
// B row stays hot in cache; the parallel variant owns whole C rows per
// thread and accumulates in the identical k-order.
void matmul_serial(const double* a, const double* b, double* c, size_t n, size_t k, size_t m) {
    for (size_t i = 0; i < n; ++i) {
        double* ci = c + i * m;
        for (size_t j = 0; j < m; ++j) ci[j] = 0.0;
        const double* ai = a + i * k;
        for (size_t p = 0; p < k; ++p) {
            double av = ai[p];
            const double* bp = b + p * m;
            for (size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
        }
    }
}

void matmul_parallel(const double* a, const double* b, double* c, size_t n, size_t k, size_t m) {
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
        size_t i = static_cast<size_t>(ii);
        double* ci = c + i * m;
        for (size_t j = 0; j < m; ++j) ci[j] = 0.0;
        const double* ai = a + i * k;
        for (size_t p = 0; p < k; ++p) {
            double av = ai[p];
            const double* bp = b + p * m;
            for (size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
        }
    }
}

// A is n x k, B is m x k, C = A * B^T is n x m.
void matmul_nt_serial(const double* a, const double* b, double* c, size_t n, size_t k, size_t m) {
    for (size_t i = 0; i < n; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * m;
        for (size_t j = 0; j < m; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = acc;
        }
    }
}

void matmul_nt_parallel(const double* a, const double* b, double* c, size_t n, size_t k,
                        size_t m) {
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
        size_t i = static_cast<size_t>(ii);
        const double* ai = a + i * k;
        double* ci = c + i * m;
        for (size_t j = 0; j < m; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = acc;
        }
    }
}

// A is k x n, B is k x m, C = A^T * B is n x m.
void matmul_tn_serial(const double* a, const double* b, double* c, size_t n, size_t k, size_t m) {
    for (size_t i = 0; i < n; ++i) {
        double* ci = c + i * m;
        for (size_t j = 0; j < m; ++j) ci[j] = 0.0;
        for (size_t p = 0; p < k; ++p) {
            double av = a[p * n + i];
            const double* bp = b + p * m;
            for (size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
        }
    }
}

void matmul_tn_parallel(const double* a, const double* b, double* c, size_t n, size_t k,
                        size_t m) {
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
        size_t i = static_cast<size_t>(ii);
        double* ci = c + i * m;
        for (size_t j = 0; j < m; ++j) ci[j] = 0.0;
        for (size_t p = 0; p < k; ++p) {
            double av = a[p * n + i];
            const double* bp = b + p * m;
            for (size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
        }
    }
}

void matmul(const Tensor& a, const Tensor& b, Tensor& c, ExecPolicy policy) {
    check_matmul_shapes(a, b, 0, 0, "matmul");
    c = Tensor(a.rows(), b.cols());
    if (policy == ExecPolicy::Parallel)
        matmul_parallel(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
    else
        matmul_serial(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, ExecPolicy policy) {
    if (a.cols() != b.cols())
        throw ShapeError(std::string("matmul_nt: inner dimensions disagree, ") + a.shape_str() +
                         " vs " + b.shape_str());
    c = Tensor(a.rows(), b.rows());
    if (policy == ExecPolicy::Parallel)
        matmul_nt_parallel(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.rows());
    else
        matmul_nt_serial(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.rows());
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, ExecPolicy policy) {
    if (a.rows() != b.rows())
        throw ShapeError(std::string("matmul_tn: inner dimensions disagree, ") + a.shape_str() +
                         " vs " + b.shape_str());
    c = Tensor(a.cols(), b.cols());
    if (policy == ExecPolicy::Parallel)
        matmul_tn_parallel(a.data(), b.data(), c.data(), a.cols(), a.rows(), b.cols());
    else
        matmul_tn_serial(a.data(), b.data(), c.data(), a.cols(), a.rows(), b.cols());
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor c;
    matmul(a, b, c, exec_policy());
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    Tensor c;
    matmul_nt(a, b, c, exec_policy());
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    Tensor c;
    matmul_tn(a, b, c, exec_policy());
    return c;
}

}  // namespace textclass::kernels
