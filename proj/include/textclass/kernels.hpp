#pragma once

#include <cstddef>

#include "textclass/tensor.hpp"

namespace textclass::kernels {

// Execution policy for the dense kernels. The OpenMP variants split work
// across rows only; every output element is accumulated by a single thread
// in the same k-order as the serial reference, so Serial and Parallel
// results are bit-identical. The serial implementations are kept as the
// reference the tests and the benchmark compare against.
enum class ExecPolicy { Serial, Parallel };

ExecPolicy exec_policy();
void set_exec_policy(ExecPolicy p);
int thread_count();

// C = A * B
void matmul(const Tensor& a, const Tensor& b, Tensor& c, ExecPolicy policy);
// C = A * B^T
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, ExecPolicy policy);
// C = A^T * B
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, ExecPolicy policy);

// Convenience overloads using the global policy.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// Serial reference implementations, exported for the equality tests and
// the benchmark target.
void matmul_serial(const double* a, const double* b, double* c, size_t n, size_t k, size_t m);
void matmul_nt_serial(const double* a, const double* b, double* c, size_t n, size_t k, size_t m);
void matmul_tn_serial(const double* a, const double* b, double* c, size_t n, size_t k, size_t m);

void matmul_parallel(const double* a, const double* b, double* c, size_t n, size_t k, size_t m);
void matmul_nt_parallel(const double* a, const double* b, double* c, size_t n, size_t k, size_t m);
void matmul_tn_parallel(const double* a, const double* b, double* c, size_t n, size_t k, size_t m);

}  // namespace textclass::kernels
