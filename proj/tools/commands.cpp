#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "lcs/lcs.hpp"

namespace lcs::cli {

namespace {

using nlohmann::json;

int guarded(std::ostream& err, const std::function<int()>& body)
{
    try {
        return body();
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kFormat;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kInternal;
    }
}

bool is_png(const fs::path& p)
{
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png";
}

// Sorted *.png regular files of a directory (non-recursive).
std::vector<fs::path> list_pngs(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw IoError("'" + dir.string() + "' is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && is_png(entry.path()))
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

Tensor<float> run_model(const LoadedModel& m, const Tensor<float>& lr)
{
    if (m.dtype() == DType::fp32)
        return forward(m.cfg, m.fp32(), lr);
    return forward(m.cfg, m.int8(), lr);
}

// Values as they are stored in an 8-bit PNG.
Tensor<float> quantize_8bit(Tensor<float> t)
{
    for (float& v : t.data())
        v = static_cast<float>(to_byte(v)) / 255.0f;
    return t;
}

std::string describe(const LoadedModel& m)
{
    std::ostringstream s;
    s << to_string(m.cfg.mode) << " " << to_string(m.dtype()) << " model, x" << m.cfg.scale << ", "
      << m.param_count() << " params";
    return s.str();
}

} // namespace

void apply_thread_env()
{
    const char* v = std::getenv("LCS_THREADS");
    if (v == nullptr || *v == '\0')
        return;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) {
        std::cerr << "warning: ignoring LCS_THREADS='" << v << "'\n";
        return;
    }
#ifdef _OPENMP
    omp_set_num_threads(static_cast<int>(n));
#endif
}

int cmd_upscale(const fs::path& weights, const fs::path& input, const fs::path& out_dir, std::ostream& out,
                std::ostream& err)
{
    return guarded(err, [&] {
        const LoadedModel m = load_container(weights);
        std::vector<fs::path> inputs;
        if (fs::is_directory(input)) {
            inputs = list_pngs(input);
            if (inputs.empty()) {
                err << "warning: no PNG files in '" << input.string() << "'\n";
                return static_cast<int>(kOk);
            }
        } else if (fs::exists(input)) {
            inputs.push_back(input);
        } else {
            throw IoError("input '" + input.string() + "' does not exist");
        }
        fs::create_directories(out_dir);
        int rc = kOk;
        for (const auto& path : inputs) {
            const fs::path dst = out_dir / (path.stem().string() + "_x" + std::to_string(m.cfg.scale) + ".png");
            const int file_rc = guarded(err, [&] {
                const Tensor<float> lr = load_image(path);
                save_image(dst, run_model(m, lr));
                out << path.string() << " -> " << dst.string() << "\n";
                return static_cast<int>(kOk);
            });
            if (file_rc != kOk) {
                err << "failed: " << path.string() << "\n";
                rc = std::max(rc, file_rc);
            }
        }
        return rc;
    });
}

int cmd_convert(const fs::path& in, const fs::path& out_path, bool quantize, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const LoadedModel src = load_container(in);
        if (src.cfg.mode != Mode::full)
            throw ConfigError("'" + in.string() + "' is already reparameterized");
        if (src.dtype() != DType::fp32)
            throw ConfigError("'" + in.string() + "' is quantized; conversion needs FP32 weights");
        LoadedModel dst{with_mode(src.cfg, Mode::reparam), reparameterize_model(src.cfg, src.fp32())};
        if (quantize)
            dst.weights = quantize_model(dst.fp32());
        const Bytes bytes = write_container(dst);
        write_file(out_path, bytes);
        out << "input:  " << describe(src) << "\n";
        out << "output: " << describe(dst) << " (" << std::fixed << std::setprecision(2)
            << static_cast<double>(dst.param_count()) / 1e6 << "M), " << bytes.size() << " bytes -> "
            << out_path.string() << "\n";
        return static_cast<int>(kOk);
    });
}

int cmd_eval(const fs::path& weights, const fs::path& lr_dir, const fs::path& hr_dir, const fs::path& report,
             const EvalOptions& opts, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const LoadedModel m = load_container(weights);
        std::optional<NiqeModel> niqe_model;
        if (opts.niqe_model)
            niqe_model = read_niqe_model(read_file(*opts.niqe_model));
        const auto lr_files = list_pngs(lr_dir);
        if (!fs::is_directory(hr_dir))
            throw IoError("'" + hr_dir.string() + "' is not a directory");

        std::vector<std::string> metrics = {"psnr", "ssim"};
        if (niqe_model)
            metrics.push_back("niqe");
        std::map<std::string, std::vector<std::pair<std::string, double>>> scores;
        std::size_t pairs = 0;
        for (const auto& lr_path : lr_files) {
            const std::string name = lr_path.filename().string();
            const fs::path hr_path = hr_dir / name;
            if (!fs::exists(hr_path)) {
                err << "warning: no HR match for '" << name << "', skipped\n";
                continue;
            }
            const int rc = guarded(err, [&] {
                const Tensor<float> lr = load_image(lr_path);
                const Tensor<float> hr = load_image(hr_path);
                if (hr.h() != lr.h() * m.cfg.scale || hr.w() != lr.w() * m.cfg.scale) {
                    err << "warning: '" << name << "' HR is " << hr.w() << "x" << hr.h() << ", expected "
                        << lr.w() * m.cfg.scale << "x" << lr.h() * m.cfg.scale << "; skipped\n";
                    return static_cast<int>(kFormat);
                }
                const Tensor<float> sr = quantize_8bit(run_model(m, lr));
                const double p = psnr(sr, hr);
                const double s = ssim(sr, hr);
                std::optional<double> n;
                if (niqe_model) {
                    try {
                        n = niqe(sr, *niqe_model);
                    } catch (const Error& e) {
                        err << "warning: no NIQE score for '" << name << "': " << e.what() << "\n";
                    }
                }
                scores["psnr"].emplace_back(name, p);
                scores["ssim"].emplace_back(name, s);
                if (n)
                    scores["niqe"].emplace_back(name, *n);
                return static_cast<int>(kOk);
            });
            if (rc == kOk)
                ++pairs;
        }
        for (const auto& entry : fs::directory_iterator(hr_dir))
            if (entry.is_regular_file() && is_png(entry.path()) && !fs::exists(lr_dir / entry.path().filename()))
                err << "warning: no LR match for '" << entry.path().filename().string() << "', skipped\n";
        if (pairs == 0)
            throw DataError("no matched LR/HR pairs");

        std::ofstream rep(report, std::ios::trunc);
        if (!rep)
            throw IoError("cannot open report '" + report.string() + "' for writing");
        out << std::left << std::setw(8) << "metric" << std::right << std::setw(12) << "mean" << std::setw(12) << "lo"
            << std::setw(12) << "hi" << std::setw(6) << "n" << "\n";
        for (const auto& metric : metrics) {
            auto it = scores.find(metric);
            if (it == scores.end() || it->second.empty())
                continue;
            for (const auto& [image, value] : it->second)
                rep << json{{"image", image}, {"metric", metric}, {"value", value}}.dump() << "\n";
            const auto r = MetricReport::build(metric, it->second, opts.level);
            rep << json{{"metric", metric},
                        {"mean", r.aggregate.mean},
                        {"lo", r.aggregate.lo},
                        {"hi", r.aggregate.hi},
                        {"level", r.aggregate.level},
                        {"n", r.per_image.size()}}
                       .dump()
                << "\n";
            out << std::left << std::setw(8) << metric << std::right << std::fixed << std::setprecision(4)
                << std::setw(12) << r.aggregate.mean << std::setw(12) << r.aggregate.lo << std::setw(12)
                << r.aggregate.hi << std::setw(6) << r.per_image.size() << "\n";
        }
        rep.flush();
        if (!rep)
            throw IoError("failed writing report '" + report.string() + "'");
        return static_cast<int>(kOk);
    });
}

int cmd_bench(const fs::path& weights, const BenchOptions& opts, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        if (opts.iters < 1)
            throw ConfigError("--iters must be >= 1");
        if (opts.height < 1 || opts.width < 1)
            throw ShapeError("--height and --width must be positive");
        const LoadedModel m = load_container(weights);
        const std::uint64_t macs = count_macs(m.cfg, opts.height, opts.width);
        Tensor<float> lr(Shape{1, 3, opts.height, opts.width});
        std::mt19937_64 rng(opts.seed);
        std::uniform_real_distribution<float> dist(0.0f, 1.0f);
        for (float& v : lr.data())
            v = dist(rng);

        constexpr int kWarmup = 3;
        for (int i = 0; i < kWarmup; ++i)
            run_model(m, lr);
        std::vector<double> ms;
        for (int i = 0; i < opts.iters; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            const Tensor<float> sr = run_model(m, lr);
            const auto t1 = std::chrono::steady_clock::now();
            ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        double mean = 0.0;
        for (double v : ms)
            mean += v;
        mean /= static_cast<double>(ms.size());
        double var = 0.0;
        for (double v : ms)
            var += (v - mean) * (v - mean);
        const double sd = ms.size() > 1 ? std::sqrt(var / static_cast<double>(ms.size() - 1)) : 0.0;

        out << "model:   " << describe(m) << "\n";
        out << std::fixed << std::setprecision(3);
        out << "params:  " << static_cast<double>(m.param_count()) / 1e6 << " M\n";
        out << "input:   " << opts.width << "x" << opts.height << "\n";
        out << "gmacs:   " << static_cast<double>(macs) / 1e9 << "\n";
        out << std::setprecision(1);
        out << "runtime: " << mean << " +- " << sd << " ms (" << opts.iters << " iters, " << kWarmup
            << " warmup)\n";
        return static_cast<int>(kOk);
    });
}

int cmd_fit_niqe(const fs::path& corpus_dir, const fs::path& model_out, std::int64_t patch_size, std::ostream& out,
                 std::ostream& err)
{
    return guarded(err, [&] {
        const auto files = list_pngs(corpus_dir);
        std::vector<Tensor<float>> corpus;
        corpus.reserve(files.size());
        for (const auto& f : files)
            corpus.push_back(load_image(f));
        const NiqeModel model = fit_niqe_model(std::span<const Tensor<float>>(corpus), patch_size);
        write_file(model_out, write_niqe_model(model));
        out << "fitted on " << model.fitted_on << " patches from " << corpus.size() << " images -> "
            << model_out.string() << "\n";
        return static_cast<int>(kOk);
    });
}

int cmd_init(const fs::path& out_path, const ModelConfig& cfg, std::uint64_t seed, std::ostream& out,
             std::ostream& err)
{
    return guarded(err, [&] {
        LoadedModel m{cfg, random_weights(cfg, seed)};
        const Bytes bytes = write_container(m);
        write_file(out_path, bytes);
        out << describe(m) << ", " << bytes.size() << " bytes -> " << out_path.string() << "\n";
        return static_cast<int>(kOk);
    });
}

int run(int argc, char** argv)
{
    CLI::App app{"LCS super-resolution engine"};
    app.require_subcommand(1);

    std::string weights, input, output, lr_dir, hr_dir, report, niqe_model, corpus;
    bool quantize = false;

    auto* upscale = app.add_subcommand("upscale", "Upscale a PNG file or a directory of PNGs");
    upscale->add_option("weights", weights, "Weight container")->required();
    upscale->add_option("input", input, "PNG file or directory")->required();
    upscale->add_option("output_dir", output, "Output directory")->required();

    auto* convert = app.add_subcommand("convert", "Reparameterize a full FP32 container");
    convert->add_option("weights_in", input, "Full FP32 container")->required();
    convert->add_option("weights_out", output, "Output container")->required();
    convert->add_flag("--quantize", quantize, "Also quantize to INT8");

    auto* quant = app.add_subcommand("quantize", "Reparameterize and quantize to INT8 (convert --quantize)");
    quant->add_option("weights_in", input, "Full FP32 container")->required();
    quant->add_option("weights_out", output, "Output container")->required();

    EvalOptions eval_opts;
    auto* eval = app.add_subcommand("eval", "Evaluate on paired LR/HR directories");
    eval->add_option("weights", weights, "Weight container")->required();
    eval->add_option("lr_dir", lr_dir, "Low-resolution PNGs")->required();
    eval->add_option("hr_dir", hr_dir, "High-resolution PNGs with matching names")->required();
    eval->add_option("report", report, "JSON-lines report path")->required();
    eval->add_option("--niqe-model", niqe_model, "NIQE pristine model file");
    eval->add_option("--level", eval_opts.level, "Confidence level")->check(CLI::Range(0.0, 1.0));

    BenchOptions bench_opts;
    auto* bench = app.add_subcommand("bench", "Report params, MACs and forward latency");
    bench->add_option("weights", weights, "Weight container")->required();
    bench->add_option("--height", bench_opts.height, "Input height")->capture_default_str();
    bench->add_option("--width", bench_opts.width, "Input width")->capture_default_str();
    bench->add_option("--iters", bench_opts.iters, "Timed iterations")->capture_default_str();

    std::int64_t patch_size = kNiqeDefaultPatch;
    auto* fit = app.add_subcommand("fit-niqe", "Fit a NIQE pristine model");
    fit->add_option("corpus_dir", corpus, "Directory of pristine PNGs")->required();
    fit->add_option("model_out", output, "Output model file")->required();
    fit->add_option("--patch-size", patch_size, "Patch size")->capture_default_str();

    ModelConfig cfg;
    std::uint64_t seed = 0;
    auto* init = app.add_subcommand("init", "Write a randomly initialized full FP32 container");
    init->add_option("weights_out", output, "Output container")->required();
    init->add_option("--seed", seed, "RNG seed")->capture_default_str();
    init->add_option("--blocks", cfg.num_blocks)->capture_default_str();
    init->add_option("--channels", cfg.channels)->capture_default_str();
    init->add_option("--expansion", cfg.expansion)->capture_default_str();
    init->add_option("--rrrb", cfg.rrrb_per_block)->capture_default_str();
    init->add_option("--esa-channels", cfg.esa_channels)->capture_default_str();
    init->add_option("--scale", cfg.scale)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kFormat;
    }

    apply_thread_env();
    auto& o = std::cout;
    auto& e = std::cerr;
    if (*upscale)
        return cmd_upscale(weights, input, output, o, e);
    if (*convert)
        return cmd_convert(input, output, quantize, o, e);
    if (*quant)
        return cmd_convert(input, output, true, o, e);
    if (*eval) {
        if (!niqe_model.empty())
            eval_opts.niqe_model = niqe_model;
        return cmd_eval(weights, lr_dir, hr_dir, report, eval_opts, o, e);
    }
    if (*bench)
        return cmd_bench(weights, bench_opts, o, e);
    if (*fit)
        return cmd_fit_niqe(corpus, output, patch_size, o, e);
    if (*init)
        return cmd_init(output, cfg, seed, o, e);
    return kFormat;
}

} // namespace lcs::cli
