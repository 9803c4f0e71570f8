#include "doctest.h"

#include <chrono>
#include <cmath>
#include <thread>

#include "ncssd/bench.hpp"
#include "ncssd/metrics.hpp"
#include "ncssd/testkit.hpp"

using namespace ncssd;
using testkit::uniform_tensor;

namespace {

FieldEstimate<double> flow_field(Tensor<double> v) {
    return {FieldKind::flow, std::move(v), 1};
}
FieldEstimate<double> disp_field(Tensor<double> v) {
    return {FieldKind::disparity, std::move(v), 1};
}

}  // namespace

TEST_CASE("epe: zero on identity, Pythagorean offset, loop oracle") {
    Xoshiro256pp rng(90);
    Tensor<double> gt = uniform_tensor<double>(rng, {2, 6, 6}, -8, 8);
    CHECK(epe(flow_field(gt), flow_field(gt)) == 0.0);

    Tensor<double> shifted(gt.shape());
    for (int64_t p = 0; p < 36; ++p) {
        shifted.data()[p] = gt.data()[p] + 3.0;
        shifted.data()[36 + p] = gt.data()[36 + p] + 4.0;
    }
    CHECK(epe(flow_field(shifted), flow_field(gt)) == doctest::Approx(5.0).epsilon(1e-12));

    Tensor<double> pred = uniform_tensor<double>(rng, {2, 6, 6}, -8, 8);
    double want = 0;
    for (int64_t p = 0; p < 36; ++p) {
        const double du = pred.data()[p] - gt.data()[p];
        const double dv = pred.data()[36 + p] - gt.data()[36 + p];
        want += std::sqrt(du * du + dv * dv);
    }
    want /= 36;
    CHECK(epe(flow_field(pred), flow_field(gt)) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("epe disparity uses absolute difference") {
    Tensor<double> gt = Tensor<double>::full({1, 3, 3}, 10.0);
    Tensor<double> pred = Tensor<double>::full({1, 3, 3}, 7.5);
    CHECK(epe(disp_field(pred), disp_field(gt)) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("epe honors the valid mask and errors when empty") {
    Tensor<double> gt = Tensor<double>::full({1, 2, 2}, 1.0);
    Tensor<double> pred({1, 2, 2}, {1.0, 2.0, 1.0, 1.0});
    Tensor<double> mask({1, 2, 2}, {1.0, 0.0, 1.0, 1.0});
    CHECK(epe(disp_field(pred), disp_field(gt), &mask) == 0.0);
    Tensor<double> none({1, 2, 2});
    CHECK_THROWS_AS(epe(disp_field(pred), disp_field(gt), &none), MetricError);
}

TEST_CASE("huge sentinel ground truth values are treated as invalid") {
    Tensor<double> gt({1, 2, 2}, {1.0, 1e10, 1.0, 1.0});
    Tensor<double> pred = Tensor<double>::full({1, 2, 2}, 1.0);
    CHECK(epe(disp_field(pred), disp_field(gt)) == 0.0);  // sentinel pixel skipped
}

TEST_CASE("motion range buckets") {
    // gt magnitude 5 everywhere: only the low bucket exists
    Tensor<double> gt({2, 2, 2});
    for (int64_t p = 0; p < 4; ++p) {
        gt.data()[p] = 3.0;
        gt.data()[4 + p] = 4.0;
    }
    Tensor<double> pred = Tensor<double>::full({2, 2, 2}, 0.0);
    auto r = epe_by_motion_range(flow_field(pred), flow_field(gt));
    CHECK(r.s_0_10.has_value());
    CHECK(!r.s_10_40.has_value());
    CHECK(!r.s_40plus.has_value());
    CHECK(*r.s_0_10 == doctest::Approx(5.0).epsilon(1e-12));

    // magnitude exactly 10 belongs to the middle bucket (half-open intervals)
    Tensor<double> gt10({2, 1, 1}, {10.0, 0.0});
    Tensor<double> pr10({2, 1, 1}, {10.0, 0.0});
    auto r10 = epe_by_motion_range(flow_field(pr10), flow_field(gt10));
    CHECK(!r10.s_0_10.has_value());
    CHECK(r10.s_10_40.has_value());

    // mixed field against a bucket-loop oracle
    Xoshiro256pp rng(91);
    Tensor<double> g = uniform_tensor<double>(rng, {2, 8, 8}, -60, 60);
    Tensor<double> p = uniform_tensor<double>(rng, {2, 8, 8}, -60, 60);
    auto mixed = epe_by_motion_range(flow_field(p), flow_field(g));
    double sums[3] = {0, 0, 0};
    int counts[3] = {0, 0, 0};
    for (int64_t q = 0; q < 64; ++q) {
        const double mu = g.data()[q], mv = g.data()[64 + q];
        const double mag = std::sqrt(mu * mu + mv * mv);
        const double du = p.data()[q] - mu, dv = p.data()[64 + q] - mv;
        const int b = mag < 10 ? 0 : (mag < 40 ? 1 : 2);
        sums[b] += std::sqrt(du * du + dv * dv);
        counts[b]++;
    }
    if (counts[0]) CHECK(*mixed.s_0_10 == doctest::Approx(sums[0] / counts[0]).epsilon(1e-12));
    if (counts[1]) CHECK(*mixed.s_10_40 == doctest::Approx(sums[1] / counts[1]).epsilon(1e-12));
    if (counts[2]) CHECK(*mixed.s_40plus == doctest::Approx(sums[2] / counts[2]).epsilon(1e-12));
}

TEST_CASE("f1_all trivial and exact 50% cases") {
    Tensor<double> gt = Tensor<double>::full({2, 4, 4}, 0.5);
    CHECK(f1_all(flow_field(gt), flow_field(gt)) == 0.0);

    // gt magnitude ~1, prediction off by 10 px everywhere
    Tensor<double> gt1({2, 4, 4});
    for (int64_t p = 0; p < 16; ++p) gt1.data()[p] = 1.0;
    Tensor<double> off(gt1.shape());
    for (int64_t p = 0; p < 16; ++p) off.data()[p] = 11.0;
    CHECK(f1_all(flow_field(off), flow_field(gt1)) == 100.0);

    // exactly half the pixels violate both thresholds
    Tensor<double> half(gt1.shape());
    for (int64_t p = 0; p < 16; ++p) half.data()[p] = p < 8 ? 11.0 : 1.0;
    CHECK(f1_all(flow_field(half), flow_field(gt1)) == 50.0);
}

TEST_CASE("outliers require both the absolute and the relative threshold") {
    // error 4 px on gt magnitude 100: above 3 px but below 5% -> inlier
    Tensor<double> gt({2, 1, 1}, {100.0, 0.0});
    Tensor<double> pred({2, 1, 1}, {104.0, 0.0});
    CHECK(f1_all(flow_field(pred), flow_field(gt)) == 0.0);
    // error 4 px on gt magnitude 10: 4 > 3 and 4 > 0.5 -> outlier
    Tensor<double> gt2({2, 1, 1}, {10.0, 0.0});
    Tensor<double> pred2({2, 1, 1}, {14.0, 0.0});
    CHECK(f1_all(flow_field(pred2), flow_field(gt2)) == 100.0);
}

TEST_CASE("d1 trivial cases and counting oracle") {
    Tensor<double> gt = Tensor<double>::full({1, 4, 4}, 10.0);
    CHECK(d1(disp_field(gt), disp_field(gt)) == 0.0);
    Tensor<double> plus4 = Tensor<double>::full({1, 4, 4}, 14.0);
    CHECK(d1(disp_field(plus4), disp_field(gt)) == 100.0);

    Xoshiro256pp rng(92);
    Tensor<double> g = uniform_tensor<double>(rng, {1, 6, 6}, 1, 80);
    Tensor<double> p = uniform_tensor<double>(rng, {1, 6, 6}, 1, 80);
    int bad = 0;
    for (int64_t q = 0; q < 36; ++q) {
        const double err = std::abs(p.data()[q] - g.data()[q]);
        if (err > 3.0 && err > 0.05 * std::abs(g.data()[q])) ++bad;
    }
    CHECK(d1(disp_field(p), disp_field(g)) ==
          doctest::Approx(100.0 * bad / 36.0).epsilon(1e-12));
}

TEST_CASE("somer reproduces the published rows") {
    CHECK(std::abs(somer(42.93, 0.54, 196.20) - 15.06) < 0.02);
    CHECK(std::abs(somer(33.88, 2.25, 236.58) - 2.75) < 0.02);
    CHECK(std::abs(somer(51.71, 0.31, 109.93) - 35.36) < 0.2);
}

TEST_CASE("somer domain errors") {
    CHECK_THROWS_AS(somer(0.0, 1.0, 100.0), DomainError);
    CHECK_THROWS_AS(somer(10.0, 0.0, 100.0), DomainError);
    CHECK_THROWS_AS(somer(10.0, 1.0, 1.0), DomainError);
}

TEST_CASE("metric report JSON carries the stable keys and self-consistent somer") {
    MetricReport r;
    r.epe = 0.54;
    r.fps = 42.93;
    r.memory_mb = 196.20;
    r.somer = somer(*r.fps, *r.epe, *r.memory_mb);
    const std::string json = metric_report_json(r);
    for (const char* key : {"\"epe\"", "\"f1_all\"", "\"d1\"", "\"s_0_10\"", "\"s_10_40\"",
                            "\"s_40plus\"", "\"fps\"", "\"memory_mb\"", "\"somer\""})
        CHECK(json.find(key) != std::string::npos);
    CHECK(std::abs(*r.somer - *r.fps / (*r.epe * std::log(*r.memory_mb))) < 1e-9);
    CHECK(metric_report_table(r).find("epe") != std::string::npos);
}

TEST_CASE("median_fps excludes the warmup call") {
    int calls = 0;
    auto slow_first = [&] {
        ++calls;
        if (calls == 1) std::this_thread::sleep_for(std::chrono::milliseconds(60));
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    };
    const double fps = median_fps(slow_first, 5);
    CHECK(calls == 6);  // 1 warmup + 5 timed
    CHECK(fps > 1.0 / 0.040);  // a 60 ms first call would cap fps at ~16
    CHECK(fps < 1.0 / 0.002 * 1.5);
}

TEST_CASE("loglog slope fits clean power laws") {
    std::vector<double> x{256, 512, 1024, 2048, 4096};
    std::vector<double> lin, quad;
    for (double v : x) {
        lin.push_back(3e-9 * v);
        quad.push_back(1e-12 * v * v);
    }
    CHECK(fit_loglog_slope(x, lin) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fit_loglog_slope(x, quad) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("rss probes return positive values") {
    CHECK(current_rss_mb() > 0);
    CHECK(peak_rss_mb() >= current_rss_mb() * 0.5);
}
