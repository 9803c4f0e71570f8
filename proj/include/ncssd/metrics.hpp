#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ncssd/matching.hpp"
#include "ncssd/tensor.hpp"

// Accuracy metrics (EPE, motion-range EPE, F1-all, D1) and the composite
// real-timeness score somer = fps / (epe * ln(memory_mb)).

namespace ncssd {

struct MetricReport {
    std::optional<double> epe;
    std::optional<double> f1_all;  // percent, flow outliers
    std::optional<double> d1;      // percent, disparity outliers
    std::optional<double> s_0_10;  // EPE within gt motion range [0,10)
    std::optional<double> s_10_40;  // [10,40)
    std::optional<double> s_40plus;  // [40,inf)
    std::optional<double> fps;
    std::optional<double> memory_mb;
    std::optional<double> somer;
};

std::string metric_report_json(const MetricReport& r);
std::string metric_report_table(const MetricReport& r);

// Outlier rule shared by F1-all and D1: error > 3 px AND error > 5% of the
// ground-truth magnitude.
inline constexpr double kOutlierAbs = 3.0;
inline constexpr double kOutlierRel = 0.05;

namespace detail {

template <typename T>
void check_fields(const FieldEstimate<T>& pred, const FieldEstimate<T>& gt,
                  const Tensor<T>* valid) {
    if (pred.kind != gt.kind) throw DimensionError("prediction and ground truth kinds differ");
    if (!pred.values.same_shape(gt.values))
        throw DimensionError("field shapes differ: " + shape_str(pred.values.shape()) + " vs " +
                             shape_str(gt.values.shape()));
    if (valid && (valid->rank() != 3 || valid->extent(0) != 1 ||
                  valid->extent(1) != pred.values.extent(1) ||
                  valid->extent(2) != pred.values.extent(2)))
        throw DimensionError("valid mask must be [1,H,W] matching the fields");
}

// A pixel participates when the mask marks it and the ground truth there is
// finite and sane (KITTI-style sentinels beyond 1e9 are treated as invalid).
template <typename T>
bool gt_valid_at(const FieldEstimate<T>& gt, const Tensor<T>* valid, int64_t p, int64_t hw) {
    if (valid && valid->data()[p] == T(0)) return false;
    const int64_t c = gt.values.extent(0);
    for (int64_t ch = 0; ch < c; ++ch) {
        const T v = gt.values.data()[ch * hw + p];
        if (!std::isfinite(double(v)) || std::abs(double(v)) > 1e9) return false;
    }
    return true;
}

template <typename T>
double error_at(const FieldEstimate<T>& pred, const FieldEstimate<T>& gt, int64_t p, int64_t hw) {
    if (pred.kind == FieldKind::flow) {
        const double du = double(pred.values.data()[p]) - double(gt.values.data()[p]);
        const double dv = double(pred.values.data()[hw + p]) - double(gt.values.data()[hw + p]);
        return std::sqrt(du * du + dv * dv);
    }
    return std::abs(double(pred.values.data()[p]) - double(gt.values.data()[p]));
}

template <typename T>
double gt_magnitude_at(const FieldEstimate<T>& gt, int64_t p, int64_t hw) {
    if (gt.kind == FieldKind::flow) {
        const double u = double(gt.values.data()[p]);
        const double v = double(gt.values.data()[hw + p]);
        return std::sqrt(u * u + v * v);
    }
    return std::abs(double(gt.values.data()[p]));
}

}  // namespace detail

// Mean error over valid pixels: l2 vector distance for flow, absolute
// difference for disparity.
template <typename T>
double epe(const FieldEstimate<T>& pred, const FieldEstimate<T>& gt,
           const Tensor<T>* valid = nullptr) {
    detail::check_fields(pred, gt, valid);
    const int64_t hw = pred.values.extent(1) * pred.values.extent(2);
    double sum = 0;
    int64_t count = 0;
    for (int64_t p = 0; p < hw; ++p) {
        if (!detail::gt_valid_at(gt, valid, p, hw)) continue;
        sum += detail::error_at(pred, gt, p, hw);
        ++count;
    }
    if (count == 0) throw MetricError("EPE undefined: no valid pixels");
    return sum / double(count);
}

struct MotionRangeEpe {
    std::optional<double> s_0_10;
    std::optional<double> s_10_40;
    std::optional<double> s_40plus;
};

// EPE restricted to pixels whose gt motion magnitude falls in [0,10),
// [10,40), [40,inf).  Empty buckets stay absent.
template <typename T>
MotionRangeEpe epe_by_motion_range(const FieldEstimate<T>& pred, const FieldEstimate<T>& gt,
                                   const Tensor<T>* valid = nullptr) {
    if (pred.kind != FieldKind::flow) throw DomainError("motion-range EPE applies to flow");
    detail::check_fields(pred, gt, valid);
    const int64_t hw = pred.values.extent(1) * pred.values.extent(2);
    double sums[3] = {0, 0, 0};
    int64_t counts[3] = {0, 0, 0};
    for (int64_t p = 0; p < hw; ++p) {
        if (!detail::gt_valid_at(gt, valid, p, hw)) continue;
        const double mag = detail::gt_magnitude_at(gt, p, hw);
        const int bucket = mag < 10.0 ? 0 : (mag < 40.0 ? 1 : 2);
        sums[bucket] += detail::error_at(pred, gt, p, hw);
        ++counts[bucket];
    }
    MotionRangeEpe out;
    if (counts[0]) out.s_0_10 = sums[0] / double(counts[0]);
    if (counts[1]) out.s_10_40 = sums[1] / double(counts[1]);
    if (counts[2]) out.s_40plus = sums[2] / double(counts[2]);
    return out;
}

template <typename T>
double outlier_percent(const FieldEstimate<T>& pred, const FieldEstimate<T>& gt,
                       const Tensor<T>* valid) {
    detail::check_fields(pred, gt, valid);
    const int64_t hw = pred.values.extent(1) * pred.values.extent(2);
    int64_t bad = 0, count = 0;
    for (int64_t p = 0; p < hw; ++p) {
        if (!detail::gt_valid_at(gt, valid, p, hw)) continue;
        const double err = detail::error_at(pred, gt, p, hw);
        const double mag = detail::gt_magnitude_at(gt, p, hw);
        if (err > kOutlierAbs && err > kOutlierRel * mag) ++bad;
        ++count;
    }
    if (count == 0) throw MetricError("outlier metric undefined: no valid pixels");
    return 100.0 * double(bad) / double(count);
}

template <typename T>
double f1_all(const FieldEstimate<T>& pred, const FieldEstimate<T>& gt,
              const Tensor<T>* valid = nullptr) {
    if (pred.kind != FieldKind::flow) throw DomainError("F1-all applies to the flow task");
    return outlier_percent(pred, gt, valid);
}

template <typename T>
double d1(const FieldEstimate<T>& pred, const FieldEstimate<T>& gt,
          const Tensor<T>* valid = nullptr) {
    if (pred.kind != FieldKind::disparity) throw DomainError("D1 applies to the disparity task");
    return outlier_percent(pred, gt, valid);
}

inline double somer(double fps, double epe_px, double memory_mb) {
    if (!(fps > 0) || !(epe_px > 0)) throw DomainError("somer requires fps > 0 and epe > 0");
    if (!(memory_mb > 1)) throw DomainError("somer requires memory_mb > 1");
    return fps / (epe_px * std::log(memory_mb));
}

}  // namespace ncssd
