#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ncssd/tensor.hpp"

// Timing and memory measurement plus the kernel complexity-scaling benchmark.

namespace ncssd {

// Median wall-clock seconds over `trials` measurements of fn, after one
// untimed warmup call.  Short calls are repeated internally until each
// measurement exceeds ~5 ms, so timer granularity does not distort slopes.
double median_seconds(const std::function<void()>& fn, int trials);

// Median frames per second over `trials` runs, warmup excluded.
double median_fps(const std::function<void()>& fn, int trials);

double current_rss_mb();
double peak_rss_mb();

struct KernelBenchRow {
    int64_t length = 0;
    double ncssd_seconds = 0;
    double quadratic_seconds = 0;
    double duality_rel_err = 0;  // causal linear vs quadratic agreement at this L
};

struct KernelBenchReport {
    std::vector<KernelBenchRow> rows;
    double ncssd_slope = 0;      // log-log least squares
    double quadratic_slope = 0;
    int64_t feature_dim = 0;
    int64_t state_dim = 0;
    int trials = 0;
};

// Times the shared-state (linear) kernel against the materialized quadratic
// form over the given sequence lengths (float32).  Before timing, each
// length verifies the causal linear/quadratic duality; the max relative
// error is recorded per row.
KernelBenchReport bench_kernels(const std::vector<int64_t>& lengths, int64_t feature_dim,
                                int64_t state_dim, int trials);

std::string kernel_bench_table(const KernelBenchReport& r);
std::string kernel_bench_csv(const KernelBenchReport& r);

// Least-squares slope of log(y) against log(x).
double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Parallel kernels vs. their serial reference implementations at a fixed
// size; sanity table for the OpenMP build.
struct CompareRow {
    std::string name;
    double parallel_seconds = 0;
    double serial_seconds = 0;
    double max_abs_diff = 0;
};
std::vector<CompareRow> bench_compare_serial(int trials);
std::string compare_table(const std::vector<CompareRow>& rows);

}  // namespace ncssd
