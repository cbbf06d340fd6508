#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "textclass/kernels.hpp"
#include "textclass/rng.hpp"

using namespace textclass;
using namespace textclass::kernels;

namespace {

Tensor random_tensor(size_t r, size_t c, SplitMix64& rng) {
    Tensor t(r, c);
    for (auto& v : t.vec()) v = rng.next_symmetric(1.0);
    return t;
}

}  // namespace

TEST_CASE("matmul matches hand-computed 2x2 product") {
    Tensor a(2, 2, {1, 2, 3, 4});
    Tensor b(2, 2, {5, 6, 7, 8});
    Tensor c = matmul(a, b);
    CHECK(c.at(0, 0) == doctest::Approx(19));
    CHECK(c.at(0, 1) == doctest::Approx(22));
    CHECK(c.at(1, 0) == doctest::Approx(43));
    CHECK(c.at(1, 1) == doctest::Approx(50));
}

TEST_CASE("matmul_nt multiplies by the transpose of B") {
    Tensor a(2, 2, {1, 2, 3, 4});
    Tensor b(2, 2, {5, 6, 7, 8});
    Tensor c = matmul_nt(a, b);
    CHECK(c.at(0, 0) == doctest::Approx(17));
    CHECK(c.at(0, 1) == doctest::Approx(23));
    CHECK(c.at(1, 0) == doctest::Approx(39));
    CHECK(c.at(1, 1) == doctest::Approx(53));
}

TEST_CASE("matmul_tn multiplies the transpose of A by B") {
    Tensor a(2, 2, {1, 2, 3, 4});
    Tensor b(2, 2, {5, 6, 7, 8});
    Tensor c = matmul_tn(a, b);
    CHECK(c.at(0, 0) == doctest::Approx(26));
    CHECK(c.at(0, 1) == doctest::Approx(30));
    CHECK(c.at(1, 0) == doctest::Approx(38));
    CHECK(c.at(1, 1) == doctest::Approx(44));
}

TEST_CASE("mismatched inner dimensions raise a shape error") {
    Tensor a(2, 3);
    Tensor b(4, 2);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    CHECK_THROWS_AS(matmul_nt(Tensor(2, 3), Tensor(5, 4)), ShapeError);
    CHECK_THROWS_AS(matmul_tn(Tensor(3, 2), Tensor(4, 5)), ShapeError);
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
    SplitMix64 rng(0xC0FFEE);
    // Odd shapes so the row partition is uneven across threads.
    const size_t n = 37, k = 53, m = 29;
    Tensor a = random_tensor(n, k, rng);
    Tensor b = random_tensor(k, m, rng);
    Tensor bt = random_tensor(m, k, rng);
    Tensor at = random_tensor(k, n, rng);

    Tensor s(n, m), p(n, m);
    matmul_serial(a.data(), b.data(), s.data(), n, k, m);
    matmul_parallel(a.data(), b.data(), p.data(), n, k, m);
    CHECK(std::memcmp(s.data(), p.data(), n * m * sizeof(double)) == 0);

    matmul_nt_serial(a.data(), bt.data(), s.data(), n, k, m);
    matmul_nt_parallel(a.data(), bt.data(), p.data(), n, k, m);
    CHECK(std::memcmp(s.data(), p.data(), n * m * sizeof(double)) == 0);

    matmul_tn_serial(at.data(), b.data(), s.data(), n, k, m);
    matmul_tn_parallel(at.data(), b.data(), p.data(), n, k, m);
    CHECK(std::memcmp(s.data(), p.data(), n * m * sizeof(double)) == 0);
}

TEST_CASE("execution policy selects the same numbers either way") {
    SplitMix64 rng(7);
    Tensor a = random_tensor(13, 17, rng);
    Tensor b = random_tensor(17, 11, rng);

    ExecPolicy before = exec_policy();
    set_exec_policy(ExecPolicy::Serial);
    Tensor s = matmul(a, b);
    set_exec_policy(ExecPolicy::Parallel);
    Tensor p = matmul(a, b);
    set_exec_policy(before);

    CHECK(std::memcmp(s.data(), p.data(), s.vec().size() * sizeof(double)) == 0);
    CHECK(thread_count() >= 1);
}
