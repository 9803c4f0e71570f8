#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ncssd/ssd.hpp"
#include "ncssd/tensor.hpp"
#include "ncssd/weights.hpp"

// Deterministic random-instance generators and the finite-difference
// gradient checker, shared by the unit tests, the selftest command and the
// acceptance suite.

namespace ncssd::testkit {

template <typename T>
Tensor<T> uniform_tensor(Xoshiro256pp& rng, std::vector<int64_t> shape, double lo = -1.0,
                         double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i)
        t.at_flat(i) = static_cast<T>(lo + (hi - lo) * rng.uniform());
    return t;
}

// A in [0.5, 1.5] keeps 1/A well conditioned for oracle comparisons.
template <typename T>
ScanInputs<T> random_scan(Xoshiro256pp& rng, int64_t l, int64_t d, int64_t n) {
    return {uniform_tensor<T>(rng, {l, d}), uniform_tensor<T>(rng, {l}, 0.5, 1.5),
            uniform_tensor<T>(rng, {l, n}), uniform_tensor<T>(rng, {l, n})};
}

// Values on a dyadic grid (multiples of 2^-10, A a power of two) so that all
// products and sums in the kernel are exact in double precision; order
// independence then holds bitwise, not just approximately.
template <typename T>
ScanInputs<T> dyadic_scan(Xoshiro256pp& rng, int64_t l, int64_t d, int64_t n) {
    auto quantize = [&](Tensor<T>& t) {
        for (int64_t i = 0; i < t.size(); ++i) {
            const int64_t q = static_cast<int64_t>(rng.next() % 2049) - 1024;
            t.at_flat(i) = static_cast<T>(double(q) / 1024.0);
        }
    };
    ScanInputs<T> s{Tensor<T>({l, d}), Tensor<T>({l}), Tensor<T>({l, n}), Tensor<T>({l, n})};
    quantize(s.X);
    quantize(s.B);
    quantize(s.C);
    for (int64_t i = 0; i < l; ++i) {
        const int shift = static_cast<int>(rng.next() % 5) - 2;  // A in {1/4 .. 4}
        s.A.data()[i] = static_cast<T>(std::ldexp(1.0, shift));
    }
    return s;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    T worst = 0;
    for (int64_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a.at_flat(i) - b.at_flat(i)));
    return worst;
}

template <typename T>
T max_abs(const Tensor<T>& a) {
    T worst = 0;
    for (int64_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.at_flat(i)));
    return worst;
}

struct GradCheckResult {
    double rel_dx = 0, rel_da = 0, rel_db = 0, rel_dc = 0;
    double worst() const { return std::max(std::max(rel_dx, rel_da), std::max(rel_db, rel_dc)); }
};

// Central finite differences of loss = <Y, R> against the analytic
// gradients; per-tensor max-norm relative error.
inline GradCheckResult gradient_check(const ScanInputs<double>& s, const Tensor<double>& r,
                                      double h = 1e-6) {
    auto loss = [&](const ScanInputs<double>& in) {
        Tensor<double> y = ncssd_forward(in, false).Y;
        double acc = 0;
        for (int64_t i = 0; i < y.size(); ++i) acc += y.at_flat(i) * r.at_flat(i);
        return acc;
    };
    ScanGradients<double> g = ncssd_backward(s, r);

    auto fd_tensor = [&](Tensor<double> ScanInputs<double>::*field, const Tensor<double>& analytic) {
        ScanInputs<double> probe = s;
        Tensor<double> fd(analytic.shape());
        for (int64_t i = 0; i < fd.size(); ++i) {
            const double orig = (probe.*field).at_flat(i);
            (probe.*field).at_flat(i) = orig + h;
            const double up = loss(probe);
            (probe.*field).at_flat(i) = orig - h;
            const double dn = loss(probe);
            (probe.*field).at_flat(i) = orig;
            fd.at_flat(i) = (up - dn) / (2 * h);
        }
        const double scale = std::max(max_abs(analytic), 1e-12);
        return double(max_abs_diff(fd, analytic)) / scale;
    };

    GradCheckResult out;
    out.rel_dx = fd_tensor(&ScanInputs<double>::X, g.dX);
    out.rel_da = fd_tensor(&ScanInputs<double>::A, g.dA);
    out.rel_db = fd_tensor(&ScanInputs<double>::B, g.dB);
    out.rel_dc = fd_tensor(&ScanInputs<double>::C, g.dC);
    return out;
}

}  // namespace ncssd::testkit
