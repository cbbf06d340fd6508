// Timings for the dense kernels, serial reference vs OpenMP rows, plus an
// end-to-end encoder forward under both policies. The parallel variants
// accumulate in the same order as the serial ones, so outputs must be
// bit-identical; the benchmark reports that alongside the throughput.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "textclass/encoder.hpp"
#include "textclass/kernels.hpp"
#include "textclass/rng.hpp"
#include "textclass/tensor.hpp"
#include "textclass/tokenize.hpp"

using namespace textclass;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(size_t r, size_t c, SplitMix64& rng) {
    Tensor t(r, c);
    for (auto& v : t.vec()) v = rng.next_symmetric(1.0);
    return t;
}

using RawKernel = void (*)(const double*, const double*, double*, size_t, size_t, size_t);

struct Variant {
    const char* name;
    RawKernel serial;
    RawKernel parallel;
    // a and b shapes as functions of (n, k, m)
    size_t ar, ac, br, bc;
};

double time_kernel(RawKernel fn, const Tensor& a, const Tensor& b, Tensor& c, size_t n,
                   size_t k, size_t m, size_t reps) {
    fn(a.vec().data(), b.vec().data(), c.vec().data(), n, k, m);  // warm-up
    auto t0 = std::chrono::steady_clock::now();
    for (size_t r = 0; r < reps; ++r)
        fn(a.vec().data(), b.vec().data(), c.vec().data(), n, k, m);
    return seconds_since(t0);
}

void bench_size(const Variant& v, size_t n, size_t k, size_t m, SplitMix64& rng) {
    auto dim = [&](size_t code) { return code == 0 ? n : code == 1 ? k : m; };
    Tensor a = random_tensor(dim(v.ar), dim(v.ac), rng);
    Tensor b = random_tensor(dim(v.br), dim(v.bc), rng);
    Tensor c_serial(n, m), c_parallel(n, m);

    size_t flop = 2 * n * k * m;
    size_t reps = std::clamp<size_t>(60'000'000 / std::max<size_t>(flop, 1), 3, 400);
    double ts = time_kernel(v.serial, a, b, c_serial, n, k, m, reps);
    double tp = time_kernel(v.parallel, a, b, c_parallel, n, k, m, reps);
    bool identical = std::memcmp(c_serial.vec().data(), c_parallel.vec().data(),
                                 n * m * sizeof(double)) == 0;
    double gf = static_cast<double>(flop) * static_cast<double>(reps) / 1e9;
    std::printf("%-9s %5zu %5zu %5zu  %8.2f  %8.2f  %7.2fx  %s\n", v.name, n, k, m, gf / ts,
                gf / tp, ts / tp, identical ? "identical" : "DIFFER");
}

void bench_encoder(size_t batch) {
    encoder::EncoderConfig cfg;
    cfg.V = 200;
    cfg.E = 32;
    cfg.H = 4;
    cfg.d_K = 8;
    cfg.L = 2;
    cfg.T_max = 64;
    cfg.F = 64;
    encoder::EncoderModel model = encoder::init_encoder(cfg, 1);
    SplitMix64 rng(2);
    std::vector<tokenize::TokenSequence> seqs(batch);
    for (auto& s : seqs) {
        s.ids.assign(cfg.T_max, 0);
        s.mask.assign(cfg.T_max, 1);
        for (auto& id : s.ids) id = 5 + static_cast<int>(rng.next_below(cfg.V - 5));
    }

    auto run = [&](kernels::ExecPolicy p) {
        kernels::set_exec_policy(p);
        auto t0 = std::chrono::steady_clock::now();
        Tensor out = encoder::embed_pooled(seqs, model, encoder::Pooling::kMean);
        return std::pair<double, Tensor>(seconds_since(t0), std::move(out));
    };
    auto [ts, zs] = run(kernels::ExecPolicy::Serial);
    auto [tp, zp] = run(kernels::ExecPolicy::Parallel);
    kernels::set_exec_policy(kernels::ExecPolicy::Parallel);
    bool identical = std::memcmp(zs.vec().data(), zp.vec().data(),
                                 zs.size() * sizeof(double)) == 0;
    std::printf("\nencoder forward, batch %zu (V=%zu E=%zu H=%zu L=%zu T=%zu):\n"
                "  serial %.3fs  parallel %.3fs  %.2fx  %s\n",
                batch, cfg.V, cfg.E, cfg.H, cfg.L, cfg.T_max, ts, tp, ts / tp,
                identical ? "identical" : "DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Serial vs OpenMP kernel timings"};
    std::vector<size_t> sizes{64, 128, 256};
    size_t batch = 64;
    app.add_option("--sizes", sizes, "square sizes to time")->delimiter(',');
    app.add_option("--batch", batch, "sequences in the encoder pass");
    CLI11_PARSE(app, argc, argv);

    std::printf("threads: %d\n\n", kernels::thread_count());
    std::printf("%-9s %5s %5s %5s  %8s  %8s  %8s\n", "kernel", "n", "k", "m", "ser GF/s",
                "par GF/s", "speedup");
    // shape codes: 0 -> n, 1 -> k, 2 -> m
    const Variant variants[] = {
        {"matmul", kernels::matmul_serial, kernels::matmul_parallel, 0, 1, 1, 2},
        {"matmul_nt", kernels::matmul_nt_serial, kernels::matmul_nt_parallel, 0, 1, 2, 1},
        {"matmul_tn", kernels::matmul_tn_serial, kernels::matmul_tn_parallel, 1, 0, 1, 2},
    };
    SplitMix64 rng(7);
    for (const auto& v : variants) {
        for (size_t s : sizes) bench_size(v, s, s, s, rng);
        // the tall-thin shape the training loop spends its time on
        bench_size(v, 64, 32, 64, rng);
    }
    bench_encoder(batch);
    return 0;
}
