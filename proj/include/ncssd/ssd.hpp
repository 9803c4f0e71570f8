#pragma once

#include <cmath>
#include <vector>

#include "ncssd/ops.hpp"
#include "ncssd/tensor.hpp"

// Selective scalar-gated state-space scan kernels.  The causal pair
// (linear recurrence vs. masked quadratic form) are two routes to the same
// map and check each other; the non-causal kernel collapses the recurrence
// into one shared hidden state H = sum_j (1/A_j) B_j (x)_j and is linear in
// sequence length.

namespace ncssd {

// Per-token scan parameters for one head: X [L,D], A [L] (positive scalars),
// B [L,N], C [L,N].
template <typename T>
struct ScanInputs {
    Tensor<T> X;
    Tensor<T> A;
    Tensor<T> B;
    Tensor<T> C;

    int64_t length() const { return X.extent(0); }
    int64_t feature_dim() const { return X.extent(1); }
    int64_t state_dim() const { return B.extent(1); }

    void validate() const {
        if (X.rank() != 2 || A.rank() != 1 || B.rank() != 2 || C.rank() != 2)
            throw DimensionError("scan inputs must be X[L,D], A[L], B[L,N], C[L,N]");
        const int64_t l = X.extent(0);
        if (A.extent(0) != l || B.extent(0) != l || C.extent(0) != l)
            throw DimensionError("scan inputs disagree on sequence length");
        if (C.extent(1) != B.extent(1))
            throw DimensionError("B and C state dims differ: " + shape_str(B.shape()) + " vs " +
                                 shape_str(C.shape()));
        for (int64_t i = 0; i < l; ++i)
            if (!(A.data()[i] > T(0)))
                throw DomainError("scan parameter A must be strictly positive, got " +
                                  std::to_string(double(A.data()[i])) + " at token " +
                                  std::to_string(i));
    }
};

template <typename T>
struct ScanOutput {
    Tensor<T> Y;        // [L,D]
    Tensor<T> H_final;  // [N,D] final (causal) or shared (non-causal) hidden state
};

// h_t = A_t h_{t-1} + B_t (x) x_t,  y_t = C_t^T h_t.  O(L N D).
template <typename T>
ScanOutput<T> causal_ssd_linear(const ScanInputs<T>& s) {
    s.validate();
    const int64_t l = s.length(), d = s.feature_dim(), n = s.state_dim();
    Tensor<T> h({n, d});
    Tensor<T> y({l, d});
    for (int64_t t = 0; t < l; ++t) {
        const T at = s.A.data()[t];
        const T* bt = s.B.data() + t * n;
        const T* ct = s.C.data() + t * n;
        const T* xt = s.X.data() + t * d;
        T* yt = y.data() + t * d;
        for (int64_t i = 0; i < n; ++i) {
            T* hrow = h.data() + i * d;
            const T bi = bt[i];
            for (int64_t j = 0; j < d; ++j) hrow[j] = at * hrow[j] + bi * xt[j];
        }
        for (int64_t j = 0; j < d; ++j) {
            T acc = 0;
            for (int64_t i = 0; i < n; ++i) acc += ct[i] * h(i, j);
            yt[j] = acc;
        }
    }
    return {std::move(y), std::move(h)};
}

// The 1-semiseparable mixing matrix: F[i,j] = C_i . B_j * prod_{k=j+1..i} A_k
// for i >= j, zero above the diagonal.  The decay product is tracked in
// double and entries below the normal range flush to exact zero: subnormal
// decay chains otherwise trap to microcode and wreck long-sequence timing.
template <typename T>
Tensor<T> causal_ssd_matrix(const ScanInputs<T>& s) {
    s.validate();
    const int64_t l = s.length(), n = s.state_dim();
    constexpr double kMinNormal = double(std::numeric_limits<T>::min());
    Tensor<T> f({l, l});
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t i = 0; i < l; ++i) {
        const T* ci = s.C.data() + i * n;
        T* frow = f.data() + i * l;
        double decay = 1.0;  // prod_{k=j+1..i} A_k, accumulated from j=i downwards
        for (int64_t j = i; j >= 0; --j) {
            const T* bj = s.B.data() + j * n;
            T dot = 0;
            for (int64_t k = 0; k < n; ++k) dot += ci[k] * bj[k];
            const double v = decay * double(dot);
            frow[j] = std::abs(v) < kMinNormal ? T(0) : T(v);
            if (j > 0) decay *= double(s.A.data()[j]);
        }
    }
    return f;
}

// Materializes F and computes Y = F X.  O(L^2 (N + D)); oracle/benchmark form.
template <typename T>
ScanOutput<T> causal_ssd_quadratic(const ScanInputs<T>& s) {
    Tensor<T> f = causal_ssd_matrix(s);
    Tensor<T> y = matmul(f, s.X);
    // final hidden state, same as the recurrence would leave behind
    const int64_t l = s.length(), d = s.feature_dim(), n = s.state_dim();
    constexpr double kMinNormal = double(std::numeric_limits<T>::min());
    Tensor<T> h({n, d});
    double decay = 1.0;  // prod_{k=j+1..l-1} A_k, walking j downwards
    for (int64_t j = l - 1; j >= 0; --j) {
        const T* bj = s.B.data() + j * n;
        const T* xj = s.X.data() + j * d;
        for (int64_t i = 0; i < n; ++i) {
            const double cd = decay * double(bj[i]);
            const T c = std::abs(cd) < kMinNormal ? T(0) : T(cd);
            T* hrow = h.data() + i * d;
            for (int64_t k = 0; k < d; ++k) hrow[k] += c * xj[k];
        }
        decay *= double(s.A.data()[j]);
    }
    return {std::move(y), std::move(h)};
}

// Non-causal shared-state kernel, computed as three contractions:
//   Z[l,n,d] = X[l,d] B[l,n]
//   H[n,d]   = sum_l m_l Z[l,n,d],   m_l = 1/A_l   (ascending l)
//   Y[l,d]   = sum_n C[l,n] H[n,d]
// With include_diag_bias, each token additionally sees its own m_i Z_i term.
template <typename T>
ScanOutput<T> ncssd_forward(const ScanInputs<T>& s, bool include_diag_bias = false) {
    s.validate();
    const int64_t l = s.length(), d = s.feature_dim(), n = s.state_dim();
    Tensor<T> h({n, d});
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t i = 0; i < n; ++i) {
        T* hrow = h.data() + i * d;
        for (int64_t j = 0; j < l; ++j) {
            const T m = T(1) / s.A.data()[j];
            const T zc = m * s.B(j, i);
            const T* xj = s.X.data() + j * d;
            for (int64_t k = 0; k < d; ++k) hrow[k] += zc * xj[k];
        }
    }
    Tensor<T> y({l, d});
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t t = 0; t < l; ++t) {
        const T* ct = s.C.data() + t * n;
        T* yt = y.data() + t * d;
        for (int64_t i = 0; i < n; ++i) {
            const T c = ct[i];
            const T* hrow = h.data() + i * d;
            for (int64_t k = 0; k < d; ++k) yt[k] += c * hrow[k];
        }
        if (include_diag_bias) {
            const T m = T(1) / s.A.data()[t];
            const T* xt = s.X.data() + t * d;
            T cb = 0;
            for (int64_t i = 0; i < n; ++i) cb += ct[i] * s.B(t, i);
            const T coeff = m * cb;
            for (int64_t k = 0; k < d; ++k) yt[k] += coeff * xt[k];
        }
    }
    return {std::move(y), std::move(h)};
}

// Evaluates both sides of the forward+reverse-scan identity
//   sum_{j<=i} m_j Z_j + sum_{j>=i} m_j Z_j  ==  sum_j m_j Z_j + m_i Z_i
// and returns the max abs discrepancy over tokens and state entries.
template <typename T>
T bidirectional_identity_check(const ScanInputs<T>& s) {
    s.validate();
    const int64_t l = s.length(), d = s.feature_dim(), n = s.state_dim();
    const int64_t nd = n * d;
    std::vector<T> prefix(static_cast<size_t>((l + 1) * nd), T(0));
    std::vector<T> suffix(static_cast<size_t>((l + 1) * nd), T(0));
    std::vector<T> z(static_cast<size_t>(nd));
    auto fill_z = [&](int64_t j) {
        const T m = T(1) / s.A.data()[j];
        for (int64_t i = 0; i < n; ++i) {
            const T zc = m * s.B(j, i);
            for (int64_t k = 0; k < d; ++k) z[static_cast<size_t>(i * d + k)] = zc * s.X(j, k);
        }
    };
    for (int64_t j = 0; j < l; ++j) {
        fill_z(j);
        for (int64_t e = 0; e < nd; ++e)
            prefix[static_cast<size_t>((j + 1) * nd + e)] =
                prefix[static_cast<size_t>(j * nd + e)] + z[static_cast<size_t>(e)];
    }
    for (int64_t j = l - 1; j >= 0; --j) {
        fill_z(j);
        for (int64_t e = 0; e < nd; ++e)
            suffix[static_cast<size_t>(j * nd + e)] =
                suffix[static_cast<size_t>((j + 1) * nd + e)] + z[static_cast<size_t>(e)];
    }
    const T* total = &prefix[static_cast<size_t>(l * nd)];
    T worst = 0;
    for (int64_t i = 0; i < l; ++i) {
        fill_z(i);
        for (int64_t e = 0; e < nd; ++e) {
            const T lhs = prefix[static_cast<size_t>((i + 1) * nd + e)] +
                          suffix[static_cast<size_t>(i * nd + e)];
            const T rhs = total[e] + z[static_cast<size_t>(e)];
            worst = std::max(worst, std::abs(lhs - rhs));
        }
    }
    return worst;
}

template <typename T>
struct ScanGradients {
    Tensor<T> dX;  // [L,D]
    Tensor<T> dA;  // [L]
    Tensor<T> dB;  // [L,N]
    Tensor<T> dC;  // [L,N]
};

// Analytic gradients of the bias-off non-causal kernel.
//   dC[i,:] = dY_i H^T,  dH = sum_i C_i (x) dY_i,
//   dX[j,:] = m_j B_j^T dH,  dB[j,:] = m_j dH x_j,
//   dA[j]   = -(1/A_j^2) <Z_j, dH>.
template <typename T>
ScanGradients<T> ncssd_backward(const ScanInputs<T>& s, const Tensor<T>& dY) {
    s.validate();
    const int64_t l = s.length(), d = s.feature_dim(), n = s.state_dim();
    if (dY.rank() != 2 || dY.extent(0) != l || dY.extent(1) != d)
        throw DimensionError("ncssd_backward: dY must be [L,D]");

    // forward H (needed for dC)
    Tensor<T> h = ncssd_forward(s, false).H_final;

    Tensor<T> dH({n, d});
    for (int64_t i = 0; i < l; ++i) {
        const T* ci = s.C.data() + i * n;
        const T* gy = dY.data() + i * d;
        for (int64_t a = 0; a < n; ++a) {
            const T c = ci[a];
            T* row = dH.data() + a * d;
            for (int64_t k = 0; k < d; ++k) row[k] += c * gy[k];
        }
    }

    ScanGradients<T> g{Tensor<T>({l, d}), Tensor<T>({l}), Tensor<T>({l, n}), Tensor<T>({l, n})};
#pragma omp parallel for schedule(static) if (omp_enabled())
    for (int64_t i = 0; i < l; ++i) {
        const T* gy = dY.data() + i * d;
        T* dc = g.dC.data() + i * n;
        for (int64_t a = 0; a < n; ++a) {
            const T* hrow = h.data() + a * d;
            T acc = 0;
            for (int64_t k = 0; k < d; ++k) acc += gy[k] * hrow[k];
            dc[a] = acc;
        }
        const T aj = s.A.data()[i];
        const T m = T(1) / aj;
        const T* bj = s.B.data() + i * n;
        const T* xj = s.X.data() + i * d;
        T* dx = g.dX.data() + i * d;
        T* db = g.dB.data() + i * n;
        for (int64_t k = 0; k < d; ++k) {
            T acc = 0;
            for (int64_t a = 0; a < n; ++a) acc += bj[a] * dH(a, k);
            dx[k] = m * acc;
        }
        T zdh = 0;
        for (int64_t a = 0; a < n; ++a) {
            const T* dhrow = dH.data() + a * d;
            T acc = 0;
            for (int64_t k = 0; k < d; ++k) acc += dhrow[k] * xj[k];
            db[a] = m * acc;
            zdh += bj[a] * acc;  // <Z_j, dH> with Z_j = B_j (x) x_j
        }
        g.dA.data()[i] = -zdh / (aj * aj);
    }
    return g;
}

// Per-head A/B/C parameters for the multi-head wrapper.
template <typename T>
struct HeadParams {
    Tensor<T> A;  // [L]
    Tensor<T> B;  // [L,N]
    Tensor<T> C;  // [L,N]
};

// Runs ncssd_forward independently per head on its feature slice of
// X [L, Hd*Dh] and concatenates the results.
template <typename T>
Tensor<T> multihead_ncssd(const Tensor<T>& x, const std::vector<HeadParams<T>>& heads,
                          bool include_diag_bias = false) {
    if (x.rank() != 2) throw DimensionError("multihead_ncssd expects X [L, Hd*Dh]");
    const int64_t hd = static_cast<int64_t>(heads.size());
    if (hd < 1) throw DimensionError("multihead_ncssd requires at least one head");
    const int64_t l = x.extent(0), dtot = x.extent(1);
    if (dtot % hd != 0)
        throw DimensionError("feature width " + std::to_string(dtot) +
                             " not divisible by head count " + std::to_string(hd));
    const int64_t dh = dtot / hd;
    Tensor<T> y({l, dtot});
    for (int64_t hix = 0; hix < hd; ++hix) {
        Tensor<T> xs({l, dh});
        for (int64_t i = 0; i < l; ++i)
            std::copy_n(x.data() + i * dtot + hix * dh, dh, xs.data() + i * dh);
        ScanInputs<T> s{std::move(xs), heads[static_cast<size_t>(hix)].A,
                        heads[static_cast<size_t>(hix)].B, heads[static_cast<size_t>(hix)].C};
        ScanOutput<T> out = ncssd_forward(s, include_diag_bias);
        for (int64_t i = 0; i < l; ++i)
            std::copy_n(out.Y.data() + i * dh, dh, y.data() + i * dtot + hix * dh);
    }
    return y;
}

}  // namespace ncssd
