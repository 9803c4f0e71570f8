#include "ncssd/bench.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ncssd/reference.hpp"
#include "ncssd/ssd.hpp"
#include "ncssd/weights.hpp"

namespace ncssd {

namespace {

using Clock = std::chrono::steady_clock;

double time_once(const std::function<void()>& fn) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double read_status_kb(const char* key) {
    std::ifstream in("/proc/self/status");
    std::string line;
    const size_t klen = std::strlen(key);
    while (std::getline(in, line)) {
        if (line.compare(0, klen, key) == 0) {
            double kb = 0;
            std::sscanf(line.c_str() + klen, "%lf", &kb);
            return kb;
        }
    }
    return 0;
}

ScanInputs<float> random_scan(int64_t l, int64_t d, int64_t n, uint64_t seed) {
    Xoshiro256pp rng(seed);
    ScanInputs<float> s{Tensor<float>({l, d}), Tensor<float>({l}), Tensor<float>({l, n}),
                        Tensor<float>({l, n})};
    for (int64_t i = 0; i < s.X.size(); ++i) s.X.at_flat(i) = float(rng.uniform() * 2 - 1);
    for (int64_t i = 0; i < l; ++i) s.A.data()[i] = float(0.5 + rng.uniform());  // (0.5, 1.5]
    for (int64_t i = 0; i < s.B.size(); ++i) s.B.at_flat(i) = float(rng.uniform() * 2 - 1);
    for (int64_t i = 0; i < s.C.size(); ++i) s.C.at_flat(i) = float(rng.uniform() * 2 - 1);
    return s;
}

}  // namespace

double median_seconds(const std::function<void()>& fn, int trials) {
    if (trials < 1) trials = 1;
    fn();  // warmup, excluded
    double probe = time_once(fn);
    int reps = 1;
    if (probe < 5e-3) reps = static_cast<int>(std::ceil(5e-3 / std::max(probe, 1e-9)));
    std::vector<double> samples;
    samples.reserve(static_cast<size_t>(trials));
    for (int t = 0; t < trials; ++t) {
        const auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r) fn();
        const auto t1 = Clock::now();
        samples.push_back(std::chrono::duration<double>(t1 - t0).count() / reps);
    }
    return median(std::move(samples));
}

double median_fps(const std::function<void()>& fn, int trials) {
    if (trials < 1) trials = 1;
    fn();  // warmup run, excluded from the median
    std::vector<double> samples;
    samples.reserve(static_cast<size_t>(trials));
    for (int t = 0; t < trials; ++t) samples.push_back(time_once(fn));
    return 1.0 / median(std::move(samples));
}

double current_rss_mb() { return read_status_kb("VmRSS:") / 1024.0; }

double peak_rss_mb() {
    // VmHWM is absent on some kernels; fall back to getrusage.
    const double hwm = read_status_kb("VmHWM:");
    if (hwm > 0) return hwm / 1024.0;
    struct rusage ru;
    getrusage(RUSAGE_SELF, &ru);
    return double(ru.ru_maxrss) / 1024.0;  // Linux reports KB
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (double(n) * sxy - sx * sy) / (double(n) * sxx - sx * sx);
}

KernelBenchReport bench_kernels(const std::vector<int64_t>& lengths, int64_t feature_dim,
                                int64_t state_dim, int trials) {
    if (lengths.empty()) throw ConfigError("bench_kernels needs at least one length");
    for (size_t i = 1; i < lengths.size(); ++i)
        if (lengths[i] <= lengths[i - 1]) throw ConfigError("bench lengths must ascend");
    KernelBenchReport rep;
    rep.feature_dim = feature_dim;
    rep.state_dim = state_dim;
    rep.trials = trials;
    for (size_t i = 0; i < lengths.size(); ++i) {
        const int64_t l = lengths[i];
        ScanInputs<float> s = random_scan(l, feature_dim, state_dim, 1000 + i);
        // duality gate before timing
        ScanOutput<float> lin = causal_ssd_linear(s);
        ScanOutput<float> quad = causal_ssd_quadratic(s);
        float maxval = 1e-12f, maxdiff = 0;
        for (int64_t e = 0; e < lin.Y.size(); ++e) {
            maxval = std::max(maxval, std::abs(lin.Y.at_flat(e)));
            maxdiff = std::max(maxdiff, std::abs(lin.Y.at_flat(e) - quad.Y.at_flat(e)));
        }
        KernelBenchRow row;
        row.length = l;
        row.duality_rel_err = double(maxdiff / maxval);
        row.ncssd_seconds = median_seconds([&] { ncssd_forward(s, false); }, trials);
        row.quadratic_seconds = median_seconds([&] { causal_ssd_quadratic(s); }, trials);
        rep.rows.push_back(row);
    }
    std::vector<double> ls, tn, tq;
    for (const auto& r : rep.rows) {
        ls.push_back(double(r.length));
        tn.push_back(r.ncssd_seconds);
        tq.push_back(r.quadratic_seconds);
    }
    rep.ncssd_slope = fit_loglog_slope(ls, tn);
    rep.quadratic_slope = fit_loglog_slope(ls, tq);
    return rep;
}

std::string kernel_bench_table(const KernelBenchReport& r) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%8s %14s %14s %12s\n", "L", "ncssd [s]", "quadratic [s]",
                  "duality");
    os << buf;
    for (const auto& row : r.rows) {
        std::snprintf(buf, sizeof buf, "%8lld %14.6e %14.6e %12.2e\n",
                      static_cast<long long>(row.length), row.ncssd_seconds,
                      row.quadratic_seconds, row.duality_rel_err);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "log-log slope: ncssd %.3f, quadratic %.3f  (D=%lld N=%lld)\n",
                  r.ncssd_slope, r.quadratic_slope, static_cast<long long>(r.feature_dim),
                  static_cast<long long>(r.state_dim));
    os << buf;
    return os.str();
}

std::string kernel_bench_csv(const KernelBenchReport& r) {
    std::ostringstream os;
    os << "length,ncssd_seconds,quadratic_seconds,duality_rel_err\n";
    for (const auto& row : r.rows)
        os << row.length << "," << row.ncssd_seconds << "," << row.quadratic_seconds << ","
           << row.duality_rel_err << "\n";
    os << "# slopes," << r.ncssd_slope << "," << r.quadratic_slope << ",\n";
    return os.str();
}

std::vector<CompareRow> bench_compare_serial(int trials) {
    std::vector<CompareRow> out;
    Xoshiro256pp rng(7);
    auto rand_tensor = [&](std::vector<int64_t> shape) {
        Tensor<float> t(std::move(shape));
        for (int64_t i = 0; i < t.size(); ++i) t.at_flat(i) = float(rng.uniform() * 2 - 1);
        return t;
    };

    {
        Tensor<float> a = rand_tensor({256, 256}), b = rand_tensor({256, 256});
        Tensor<float> par = matmul(a, b), ser = ref::matmul(a, b);
        CompareRow row{"matmul 256x256", 0, 0, 0};
        for (int64_t i = 0; i < par.size(); ++i)
            row.max_abs_diff = std::max(row.max_abs_diff,
                                        double(std::abs(par.at_flat(i) - ser.at_flat(i))));
        row.parallel_seconds = median_seconds([&] { matmul(a, b); }, trials);
        row.serial_seconds = median_seconds([&] { ref::matmul(a, b); }, trials);
        out.push_back(row);
    }
    {
        Tensor<float> x = rand_tensor({16, 64, 64}), w = rand_tensor({16, 16, 3, 3});
        Tensor<float> bias = rand_tensor({16});
        Tensor<float> par = conv2d(x, w, bias, 1, 1), ser = ref::conv2d(x, w, bias, 1, 1);
        CompareRow row{"conv2d 16x64x64", 0, 0, 0};
        for (int64_t i = 0; i < par.size(); ++i)
            row.max_abs_diff = std::max(row.max_abs_diff,
                                        double(std::abs(par.at_flat(i) - ser.at_flat(i))));
        row.parallel_seconds = median_seconds([&] { conv2d(x, w, bias, 1, 1); }, trials);
        row.serial_seconds = median_seconds([&] { ref::conv2d(x, w, bias, 1, 1); }, trials);
        out.push_back(row);
    }
    {
        ScanInputs<float> s = random_scan(512, 64, 16, 99);
        Tensor<float> par = ncssd_forward(s, false).Y;
        Tensor<float> ser = ref::ncssd_double_loop(s, false);
        CompareRow row{"ncssd L=512 (O(L^2) ref)", 0, 0, 0};
        for (int64_t i = 0; i < par.size(); ++i)
            row.max_abs_diff = std::max(row.max_abs_diff,
                                        double(std::abs(par.at_flat(i) - ser.at_flat(i))));
        row.parallel_seconds = median_seconds([&] { ncssd_forward(s, false); }, trials);
        row.serial_seconds = median_seconds([&] { ref::ncssd_double_loop(s, false); }, trials);
        out.push_back(row);
    }
    return out;
}

std::string compare_table(const std::vector<CompareRow>& rows) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-26s %14s %14s %12s\n", "kernel", "parallel [s]",
                  "serial [s]", "max |diff|");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-26s %14.6e %14.6e %12.2e\n", r.name.c_str(),
                      r.parallel_seconds, r.serial_seconds, r.max_abs_diff);
        os << buf;
    }
    return os.str();
}

}  // namespace ncssd
