#include "ncssd/metrics.hpp"

#include <cstdio>

#include "json.hpp"

namespace ncssd {

std::string metric_report_json(const MetricReport& r) {
    nlohmann::json j;
    auto set = [&](const char* key, const std::optional<double>& v) {
        if (v)
            j[key] = *v;
        else
            j[key] = nullptr;
    };
    set("epe", r.epe);
    set("f1_all", r.f1_all);
    set("d1", r.d1);
    set("s_0_10", r.s_0_10);
    set("s_10_40", r.s_10_40);
    set("s_40plus", r.s_40plus);
    set("fps", r.fps);
    set("memory_mb", r.memory_mb);
    set("somer", r.somer);
    return j.dump(2);
}

std::string metric_report_table(const MetricReport& r) {
    char buf[96];
    std::string out;
    auto row = [&](const char* name, const std::optional<double>& v, const char* unit) {
        if (v)
            std::snprintf(buf, sizeof buf, "%-10s %12.4f %s\n", name, *v, unit);
        else
            std::snprintf(buf, sizeof buf, "%-10s %12s\n", name, "-");
        out += buf;
    };
    row("epe", r.epe, "px");
    row("f1_all", r.f1_all, "%");
    row("d1", r.d1, "%");
    row("s_0_10", r.s_0_10, "px");
    row("s_10_40", r.s_10_40, "px");
    row("s_40plus", r.s_40plus, "px");
    row("fps", r.fps, "1/s");
    row("memory_mb", r.memory_mb, "MB");
    row("somer", r.somer, "");
    return out;
}

}  // namespace ncssd
