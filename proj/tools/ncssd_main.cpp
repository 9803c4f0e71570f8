// Command-line front end: selftest, estimate, eval, bench, init-weights.
// Exit codes: 0 ok, 1 metric/selftest failure, 2 I/O error, 3 config error.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"

#include "ncssd/bench.hpp"
#include "ncssd/image_io.hpp"
#include "ncssd/metrics.hpp"
#include "ncssd/pipeline.hpp"
#include "ncssd/selftest.hpp"
#include "ncssd/weights.hpp"

namespace {

using namespace ncssd;

constexpr int kExitOk = 0;
constexpr int kExitMetricFailure = 1;
constexpr int kExitIoError = 2;
constexpr int kExitConfigError = 3;

bool env_thread_cap_set() { return std::getenv("NCSSD_THREADS") != nullptr; }

void apply_thread_cap() {
#ifdef _OPENMP
    if (const char* cap = std::getenv("NCSSD_THREADS")) {
        const int n = std::atoi(cap);
        if (n >= 1) omp_set_num_threads(n);
    }
#endif
}

void pin_single_thread() {
#ifdef _OPENMP
    omp_set_num_threads(1);
#endif
}

struct EstimateArgs {
    std::string task = "flow";
    std::string left, right, weights;
    int64_t iters = 0;
    int64_t radius = 0;
    std::string out, viz;
};

void add_estimate_options(CLI::App* cmd, EstimateArgs& args, bool weights_required) {
    cmd->add_option("--task", args.task, "flow or disparity")
        ->check(CLI::IsMember({"flow", "disparity"}));
    cmd->add_option("--left", args.left, "left image / frame t (PNG or PPM)")->required();
    cmd->add_option("--right", args.right, "right image / frame t+1")->required();
    auto* wopt = cmd->add_option("--weights", args.weights, "weight file (.ncsd)");
    if (weights_required) wopt->required();
    cmd->add_option("--iters", args.iters, "refinement iterations (default from weights)");
    cmd->add_option("--radius", args.radius, "lookup radius (default from weights)");
}

EstimateResult<float> run_estimate(const EstimateArgs& args, const ModelWeights<float>& w) {
    TaskRequest<float> req;
    req.task = args.task == "flow" ? FieldKind::flow : FieldKind::disparity;
    req.images.left = read_image(args.left);
    req.images.right = read_image(args.right);
    req.iterations = args.iters;
    req.radius = args.radius;
    return estimate(req, w);
}

void write_outputs(const EstimateArgs& args, const FieldEstimate<float>& field) {
    if (!args.out.empty()) {
        if (field.kind == FieldKind::flow)
            write_flow_flo(args.out, field.values);
        else
            write_disparity_pfm(args.out, field.values);
        std::cout << "wrote " << args.out << "\n";
    }
    if (!args.viz.empty()) {
        if (field.kind == FieldKind::flow)
            write_flow_visualization(args.viz, field.values);
        else
            write_disparity_visualization(args.viz, field.values);
        std::cout << "wrote " << args.viz << "\n";
    }
}

FieldEstimate<float> load_field(const std::string& path, FieldKind kind) {
    if (kind == FieldKind::flow) return {FieldKind::flow, read_flow_flo(path), 1};
    return {FieldKind::disparity, read_disparity_pfm(path), 1};
}

int cmd_eval(const EstimateArgs& args, const std::string& gt_path, const std::string& mask_path,
             const std::string& pred_path) {
    const FieldKind kind = args.task == "flow" ? FieldKind::flow : FieldKind::disparity;
    FieldEstimate<float> gt = load_field(gt_path, kind);

    MetricReport report;
    FieldEstimate<float> pred;
    if (!pred_path.empty()) {
        pred = load_field(pred_path, kind);
    } else {
        ModelWeights<float> w = load_weights<float>(args.weights);
        const double rss_before = current_rss_mb();
        const auto t0 = std::chrono::steady_clock::now();
        EstimateResult<float> result = run_estimate(args, w);
        const auto t1 = std::chrono::steady_clock::now();
        const double seconds = std::chrono::duration<double>(t1 - t0).count();
        pred = result.final;
        report.fps = 1.0 / seconds;
        const double mem = peak_rss_mb() - rss_before;
        if (mem > 0) report.memory_mb = mem;
    }

    Tensor<float> mask;
    const Tensor<float>* mask_ptr = nullptr;
    if (!mask_path.empty()) {
        mask = read_mask(mask_path);
        mask_ptr = &mask;
    }

    report.epe = epe(pred, gt, mask_ptr);
    if (kind == FieldKind::flow) {
        report.f1_all = f1_all(pred, gt, mask_ptr);
        MotionRangeEpe ranges = epe_by_motion_range(pred, gt, mask_ptr);
        report.s_0_10 = ranges.s_0_10;
        report.s_10_40 = ranges.s_10_40;
        report.s_40plus = ranges.s_40plus;
    } else {
        report.d1 = d1(pred, gt, mask_ptr);
    }
    if (report.fps && report.memory_mb && *report.epe > 0 && *report.memory_mb > 1)
        report.somer = somer(*report.fps, *report.epe, *report.memory_mb);

    std::cout << metric_report_json(report) << "\n" << metric_report_table(report);
    return kExitOk;
}

std::vector<int64_t> parse_lengths(const std::string& csv) {
    std::vector<int64_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoll(item));
    }
    if (out.empty()) throw ConfigError("no benchmark lengths given");
    return out;
}

int cmd_bench_kernels(const std::string& lengths_csv, int trials, const std::string& csv_path) {
    KernelBenchReport rep = bench_kernels(parse_lengths(lengths_csv), 64, 16, trials);
    std::cout << kernel_bench_table(rep);
    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw LoadError("cannot open '" + csv_path + "' for writing");
        out << kernel_bench_csv(rep);
        std::cout << "wrote " << csv_path << "\n";
    }
    return kExitOk;
}

int cmd_bench_pipeline(const std::string& size, int repeat, const std::string& task,
                       const std::string& weights_path, uint64_t seed, double epe_px) {
    long long h = 0, w = 0;
    if (std::sscanf(size.c_str(), "%lldx%lld", &h, &w) != 2 || h < 1 || w < 1)
        throw ConfigError("--size must look like 128x128");
    ModelWeights<float> weights;
    if (!weights_path.empty()) {
        weights = load_weights<float>(weights_path);
    } else {
        weights = init_weights<float>(ModelConfig::defaults(task), seed);
    }
    Model<float> model = Model<float>::assemble(weights);
    Xoshiro256pp rng(seed + 1);
    TaskRequest<float> req;
    req.task = weights.config.kind();
    req.images.left = Tensor<float>({3, h, w});
    req.images.right = Tensor<float>({3, h, w});
    for (int64_t i = 0; i < req.images.left.size(); ++i) {
        req.images.left.at_flat(i) = float(rng.uniform() * 2 - 1);
        req.images.right.at_flat(i) = float(rng.uniform() * 2 - 1);
    }
    const double rss_before = current_rss_mb();
    const double fps = median_fps([&] { estimate(req, model); }, repeat);
    const double mem = peak_rss_mb() - rss_before;
    std::printf("pipeline %s %lldx%lld: fps %.3f (median of %d), memory %.1f MB\n",
                weights.config.task.c_str(), h, w, fps, repeat, mem);
    if (epe_px > 0 && mem > 1)
        std::printf("somer(fps=%.3f, epe=%.3f, mem=%.1f) = %.3f\n", fps, epe_px, mem,
                    somer(fps, epe_px, mem));
    else
        std::printf("somer: not computed (pass --epe with a measured EPE > 0)\n");
    return kExitOk;
}

int cmd_init_weights(const std::string& config_path, const std::string& task, uint64_t seed,
                     const std::string& out_path) {
    ModelConfig cfg;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw LoadError("cannot open '" + config_path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = ModelConfig::from_json(ss.str());
    } else {
        cfg = ModelConfig::defaults(task);
    }
    ModelWeights<float> w = init_weights<float>(cfg, seed);
    save_weights(w, out_path);
    std::cout << "wrote " << out_path << " (" << w.size() << " tensors, task " << cfg.task
              << ", seed " << seed << ")\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    apply_thread_cap();

    CLI::App app{"non-causal selective state-space dense perception toolkit"};
    app.require_subcommand(1);

    auto* selftest_cmd = app.add_subcommand("selftest", "run the invariant/oracle suite");

    EstimateArgs est_args;
    auto* estimate_cmd = app.add_subcommand("estimate", "run flow or disparity inference");
    add_estimate_options(estimate_cmd, est_args, true);
    estimate_cmd->add_option("--out", est_args.out, "output field (.flo / .pfm)");
    estimate_cmd->add_option("--viz", est_args.viz, "visualization PNG");

    EstimateArgs eval_args;
    std::string gt_path, mask_path, pred_path;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate against ground truth");
    add_estimate_options(eval_cmd, eval_args, false);
    eval_cmd->add_option("--gt", gt_path, "ground truth (.flo / .pfm)")->required();
    eval_cmd->add_option("--mask", mask_path, "valid-pixel mask (PNG/PPM, nonzero = valid)");
    eval_cmd->add_option("--pred", pred_path,
                         "evaluate a stored prediction instead of running the model");

    auto* bench_cmd = app.add_subcommand("bench", "kernel and pipeline benchmarks");
    bool bench_kernels_flag = false, bench_pipeline_flag = false, bench_reference_flag = false;
    std::string lengths_csv = "256,512,1024,2048,4096";
    std::string csv_path, bench_size = "128x128", bench_task = "flow", bench_weights;
    int bench_trials = 5, bench_repeat = 5;
    uint64_t bench_seed = 0;
    double bench_epe = 0;
    bench_cmd->add_flag("--kernels", bench_kernels_flag, "linear vs quadratic scan scaling");
    bench_cmd->add_flag("--pipeline", bench_pipeline_flag, "end-to-end FPS / memory");
    bench_cmd->add_flag("--reference", bench_reference_flag,
                        "OpenMP kernels vs serial reference");
    bench_cmd->add_option("--lengths", lengths_csv, "comma-separated sequence lengths");
    bench_cmd->add_option("--trials", bench_trials, "timing samples per point (median)");
    bench_cmd->add_option("--csv", csv_path, "write kernel results as CSV");
    bench_cmd->add_option("--size", bench_size, "pipeline input size HxW");
    bench_cmd->add_option("--repeat", bench_repeat, "pipeline runs (median, min 5)");
    bench_cmd->add_option("--task", bench_task, "pipeline task when no weights given")
        ->check(CLI::IsMember({"flow", "disparity"}));
    bench_cmd->add_option("--weights", bench_weights, "pipeline weights (.ncsd)");
    bench_cmd->add_option("--seed", bench_seed, "seed for generated weights/inputs");
    bench_cmd->add_option("--epe", bench_epe, "measured EPE for the somer line");

    auto* init_cmd = app.add_subcommand("init-weights", "write deterministic random weights");
    std::string init_config, init_task = "flow", init_out;
    uint64_t init_seed = 0;
    init_cmd->add_option("--config", init_config, "model config JSON file");
    init_cmd->add_option("--task", init_task, "task for default config when --config absent")
        ->check(CLI::IsMember({"flow", "disparity"}));
    init_cmd->add_option("--seed", init_seed, "PRNG seed");
    init_cmd->add_option("--out", init_out, "output weight file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (selftest_cmd->parsed())
            return run_selftest(std::cout) == 0 ? kExitOk : kExitMetricFailure;
        if (estimate_cmd->parsed()) {
            ModelWeights<float> w = load_weights<float>(est_args.weights);
            const auto t0 = std::chrono::steady_clock::now();
            EstimateResult<float> result = run_estimate(est_args, w);
            const auto t1 = std::chrono::steady_clock::now();
            std::printf("%s estimate: %lldx%lld, %zu iterations, %.3f s\n",
                        est_args.task.c_str(),
                        static_cast<long long>(result.final.values.extent(1)),
                        static_cast<long long>(result.final.values.extent(2)),
                        result.per_iteration.size(),
                        std::chrono::duration<double>(t1 - t0).count());
            for (size_t it = 1; it < result.per_iteration.size(); ++it) {
                const auto& prev = result.per_iteration[it - 1].values;
                const auto& cur = result.per_iteration[it].values;
                double change = 0;
                for (int64_t i = 0; i < cur.size(); ++i)
                    change += std::abs(double(cur.at_flat(i)) - double(prev.at_flat(i)));
                std::printf("  iteration %2zu: mean |delta| %.6f px\n", it,
                            change / double(cur.size()));
            }
            write_outputs(est_args, result.final);
            return kExitOk;
        }
        if (eval_cmd->parsed()) {
            if (pred_path.empty() && eval_args.weights.empty())
                throw ConfigError("eval needs --weights (to run the model) or --pred");
            return cmd_eval(eval_args, gt_path, mask_path, pred_path);
        }
        if (bench_cmd->parsed()) {
            if (bench_repeat < 5) bench_repeat = 5;
            if (!bench_kernels_flag && !bench_pipeline_flag && !bench_reference_flag)
                throw ConfigError("bench needs one of --kernels, --pipeline, --reference");
            // scaling/pipeline timing runs on one core unless NCSSD_THREADS says
            // otherwise; the reference comparison keeps its threads
            int rc = kExitOk;
            if (bench_reference_flag)
                std::cout << compare_table(bench_compare_serial(bench_trials));
            if (!env_thread_cap_set()) pin_single_thread();
            if (rc == kExitOk && bench_kernels_flag)
                rc = cmd_bench_kernels(lengths_csv, bench_trials, csv_path);
            if (rc == kExitOk && bench_pipeline_flag)
                rc = cmd_bench_pipeline(bench_size, bench_repeat, bench_task, bench_weights,
                                        bench_seed, bench_epe);
            return rc;
        }
        if (init_cmd->parsed())
            return cmd_init_weights(init_config, init_task, init_seed, init_out);
    } catch (const MetricError& e) {
        std::cerr << "metric error: " << e.what() << "\n";
        return kExitMetricFailure;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const DimensionError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const LoadError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIoError;
    }
    return kExitOk;
}
