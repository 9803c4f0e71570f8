#include <cmath>
#include <cstdio>
#include <ostream>

#include "ncssd/image_io.hpp"
#include "ncssd/matching.hpp"
#include "ncssd/metrics.hpp"
#include "ncssd/pipeline.hpp"
#include "ncssd/reference.hpp"
#include "ncssd/selftest.hpp"
#include "ncssd/testkit.hpp"

// Invariant/oracle battery behind the `selftest` subcommand.  One line per
// check; returns the number of failures.

namespace ncssd {

namespace {

using testkit::max_abs_diff;

struct Suite {
    std::ostream& out;
    int failures = 0;

    void check(const char* name, bool ok) {
        out << (ok ? "[PASS] " : "[FAIL] ") << name << "\n";
        if (!ok) ++failures;
    }
};

}  // namespace

int run_selftest(std::ostream& out) {
    Suite s{out};
    Xoshiro256pp rng(42);

    // dense primitives vs serial oracles
    {
        Tensor<double> a = testkit::uniform_tensor<double>(rng, {7, 5});
        Tensor<double> b = testkit::uniform_tensor<double>(rng, {5, 3});
        s.check("matmul vs triple-loop oracle",
                max_abs_diff(matmul(a, b), ref::matmul(a, b)) < 1e-12);
    }
    {
        Tensor<double> x = testkit::uniform_tensor<double>(rng, {2, 8, 8});
        Tensor<double> w = testkit::uniform_tensor<double>(rng, {4, 2, 3, 3});
        Tensor<double> bias = testkit::uniform_tensor<double>(rng, {4});
        s.check("conv2d vs six-loop oracle",
                max_abs_diff(conv2d(x, w, bias, 1, 1), ref::conv2d(x, w, bias, 1, 1)) < 1e-10);
    }

    // scan kernels
    {
        bool ok = true;
        for (int trial = 0; trial < 10 && ok; ++trial) {
            auto scan = testkit::random_scan<double>(rng, 16 + trial, 4, 3);
            ok = max_abs_diff(causal_ssd_linear(scan).Y, causal_ssd_quadratic(scan).Y) < 1e-10;
        }
        s.check("causal duality (linear == quadratic)", ok);
    }
    {
        bool ok = true;
        for (int trial = 0; trial < 10 && ok; ++trial) {
            auto scan = testkit::random_scan<double>(rng, 32, 6, 4);
            ok = max_abs_diff(ncssd_forward(scan, false).Y,
                              ref::ncssd_double_loop(scan, false)) < 1e-10 &&
                 max_abs_diff(ncssd_forward(scan, true).Y,
                              ref::ncssd_double_loop(scan, true)) < 1e-10;
        }
        s.check("ncssd vs double-loop oracle (bias off/on)", ok);
    }
    {
        auto scan = testkit::random_scan<double>(rng, 64, 8, 8);
        s.check("bidirectional scan identity", bidirectional_identity_check(scan) < 1e-9);
    }
    {
        auto scan = testkit::dyadic_scan<double>(rng, 48, 6, 4);
        Tensor<double> y = ncssd_forward(scan, false).Y;
        std::vector<int64_t> perm(48);
        for (int64_t i = 0; i < 48; ++i) perm[static_cast<size_t>(i)] = (i * 29 + 11) % 48;
        ScanInputs<double> p{Tensor<double>({48, 6}), Tensor<double>({48}),
                             Tensor<double>({48, 4}), Tensor<double>({48, 4})};
        for (int64_t i = 0; i < 48; ++i) {
            const int64_t src = perm[static_cast<size_t>(i)];
            for (int64_t k = 0; k < 6; ++k) p.X(i, k) = scan.X(src, k);
            p.A.data()[i] = scan.A.data()[src];
            for (int64_t k = 0; k < 4; ++k) {
                p.B(i, k) = scan.B(src, k);
                p.C(i, k) = scan.C(src, k);
            }
        }
        Tensor<double> yp = ncssd_forward(p, false).Y;
        bool ok = true;
        for (int64_t i = 0; i < 48 && ok; ++i)
            for (int64_t k = 0; k < 6 && ok; ++k)
                ok = yp(i, k) == y(perm[static_cast<size_t>(i)], k);
        s.check("ncssd permutation equivariance (exact)", ok);
    }
    {
        auto scan = testkit::random_scan<double>(rng, 8, 4, 4);
        Tensor<double> r = testkit::uniform_tensor<double>(rng, {8, 4});
        s.check("ncssd analytic gradients vs finite differences",
                testkit::gradient_check(scan, r).worst() < 1e-4);
    }

    // matching machinery
    {
        Tensor<double> l = testkit::uniform_tensor<double>(rng, {8, 6, 6});
        Tensor<double> r = testkit::uniform_tensor<double>(rng, {8, 6, 6});
        s.check("flow volume vs quadruple-loop oracle",
                max_abs_diff(build_flow_volume(l, r), ref::flow_volume(l, r)) < 1e-10);
        s.check("disparity volume vs triple-loop oracle",
                max_abs_diff(build_disparity_volume(l, r), ref::disparity_volume(l, r)) < 1e-10);
    }
    {
        Tensor<double> vol = testkit::uniform_tensor<double>(rng, {4, 4, 8, 8});
        auto pyr = build_pyramid(vol, FieldKind::flow, 4);
        const Tensor<double> four = avg_pool_last(avg_pool_last(vol, 2), 2);
        s.check("pyramid level 2 equals composed 4x4 pooling",
                max_abs_diff(pyr.levels[2], four) < 1e-12);
    }
    {
        Tensor<double> vol = testkit::uniform_tensor<double>(rng, {6, 6, 8, 8});
        auto pyr = build_pyramid(vol, FieldKind::flow, 3);
        FieldEstimate<double> est{FieldKind::flow,
                                  testkit::uniform_tensor<double>(rng, {2, 6, 6}, -2, 2), 1};
        Tensor<double> lk = lookup_flow(pyr, est, 1);
        bool ok = true;
        for (int64_t i = 0; i < 6 && ok; ++i)
            for (int64_t j = 0; j < 6 && ok; ++j) {
                int64_t ch = 0;
                for (int64_t k = 0; k < 3 && ok; ++k) {
                    const auto& lvl = pyr.levels[static_cast<size_t>(k)];
                    const double cy = (double(i) + est.values(1, i, j)) / double(1 << k);
                    const double cx = (double(j) + est.values(0, i, j)) / double(1 << k);
                    for (int64_t dy = -1; dy <= 1 && ok; ++dy)
                        for (int64_t dx = -1; dx <= 1 && ok; ++dx) {
                            const double want =
                                ref::bilinear_at(lvl.data() + (i * 6 + j) * lvl.extent(2) *
                                                                   lvl.extent(3),
                                                 lvl.extent(2), lvl.extent(3), cy + dy, cx + dx);
                            ok = std::abs(lk(i, j, ch++) - want) < 1e-10;
                        }
                }
            }
        s.check("flow lookup vs direct bilinear oracle", ok);
    }
    {
        ConvGruWeights<double> g;
        Xoshiro256pp wrng(5);
        g.wz = testkit::uniform_tensor<double>(wrng, {3, 5, 3, 3}, -0.3, 0.3);
        g.bz = testkit::uniform_tensor<double>(wrng, {3}, -0.1, 0.1);
        g.wr = testkit::uniform_tensor<double>(wrng, {3, 5, 3, 3}, -0.3, 0.3);
        g.br = testkit::uniform_tensor<double>(wrng, {3}, -0.1, 0.1);
        g.wh = testkit::uniform_tensor<double>(wrng, {3, 5, 3, 3}, -0.3, 0.3);
        g.bh = testkit::uniform_tensor<double>(wrng, {3}, -0.1, 0.1);
        Tensor<double> h = testkit::uniform_tensor<double>(wrng, {3, 5, 4});
        Tensor<double> x = testkit::uniform_tensor<double>(wrng, {2, 5, 4});
        Tensor<double> got = conv_gru_cell(h, x, g);
        Tensor<double> want = ref::conv_gru_cell(h, x, g.wz, g.bz, g.wr, g.br, g.wh, g.bh);
        s.check("conv GRU vs per-gate oracle", max_abs_diff(got, want) < 1e-10);
    }
    {
        Tensor<double> field = testkit::uniform_tensor<double>(rng, {2, 5, 4});
        Tensor<double> mask = testkit::uniform_tensor<double>(rng, {36, 5, 4});
        s.check("convex upsample vs per-subpixel oracle",
                max_abs_diff(convex_upsample(field, mask, 2, true),
                             ref::convex_upsample(field, mask, 2, true)) < 1e-10);
    }

    // metrics
    {
        Tensor<double> pv({2, 4, 4}), gv({2, 4, 4});
        for (int64_t p = 0; p < 16; ++p) {
            pv.data()[p] = 3;
            pv.data()[16 + p] = 4;
        }
        FieldEstimate<double> pred{FieldKind::flow, pv, 1};
        FieldEstimate<double> gt{FieldKind::flow, gv, 1};
        s.check("epe 3-4-5", std::abs(epe(pred, gt) - 5.0) < 1e-12);
    }
    s.check("somer reproduces published row 15.06",
            std::abs(somer(42.93, 0.54, 196.20) - 15.06) < 0.02);
    s.check("somer reproduces published row 2.75",
            std::abs(somer(33.88, 2.25, 236.58) - 2.75) < 0.02);

    out << (s.failures ? "selftest: FAILURES " : "selftest: all checks passed ")
        << "(" << s.failures << " failed)\n";
    return s.failures;
}

}  // namespace ncssd
