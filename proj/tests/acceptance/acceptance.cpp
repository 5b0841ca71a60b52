// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "lcs/lcs.hpp"
#include "oracles.hpp"

using namespace lcs;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& name, bool ok, const std::string& detail)
{
    std::printf("%s %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok)
        ++g_failures;
}

template <typename F>
void run_criterion(const std::string& name, F&& body)
{
    const auto t0 = std::chrono::steady_clock::now();
    try {
        std::string detail;
        const bool ok = body(detail);
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ostringstream d;
        d << detail << " [" << std::fixed;
        d.precision(1);
        d << s << "s]";
        report(name, ok, d.str());
    } catch (const std::exception& e) {
        report(name, false, std::string("exception: ") + e.what());
    }
}

std::string fmt(double v, int prec = 6)
{
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

bool within(double value, double target, double rel) { return std::abs(value - target) <= rel * target; }

bool reparam_equivalence(std::string& detail)
{
    const ModelConfig cfg;
    const auto rcfg = with_mode(cfg, Mode::reparam);
    double worst32 = 0.0, worst64 = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto w = random_weights(cfg, 1000 + seed);
        const auto x = lcs::testing::random_tensor<float>(Shape{1, 3, 64, 64}, 5000 + seed, 0.0, 1.0);
        const auto rw = reparameterize_model(cfg, w);
        worst32 = std::max(worst32, lcs::testing::max_abs_diff(forward(cfg, w, x), forward(rcfg, rw, x)));
        const auto wd = cast_weights<double>(w);
        const auto xd = x.cast<double>();
        worst64 = std::max(worst64, lcs::testing::max_abs_diff(forward(cfg, wd, xd),
                                                               forward(rcfg, reparameterize_model(cfg, wd), xd)));
    }
    detail = "100 models, max|diff| fp32=" + fmt(worst32) + " (<=1e-4), fp64=" + fmt(worst64) + " (<=1e-10)";
    return worst32 <= 1e-4 && worst64 <= 1e-10;
}

bool parameter_counts(std::string& detail)
{
    const double full = static_cast<double>(count_params(ModelConfig{})) / 1e6;
    const double rep = static_cast<double>(count_params(with_mode(ModelConfig{}, Mode::reparam))) / 1e6;
    detail = "full=" + fmt(full) + "M (0.74 +-5%), reparam=" + fmt(rep) + "M (0.21 +-5%)";
    return within(full, 0.74, 0.05) && within(rep, 0.21, 0.05);
}

bool gmacs(std::string& detail)
{
    const ModelConfig cfg;
    const auto rcfg = with_mode(cfg, Mode::reparam);
    bool oracle_ok = true;
    for (const auto& c : {cfg, rcfg})
        for (auto [h, w] : {std::pair{720, 960}, std::pair{720, 1280}, std::pair{64, 64}, std::pair{101, 77}})
            oracle_ok = oracle_ok && count_macs(c, h, w) == lcs::testing::reference_macs(c, h, w);
    const double full = static_cast<double>(count_macs(cfg, 720, 960)) / 1e9;
    const double rep = static_cast<double>(count_macs(rcfg, 720, 960)) / 1e9;
    const double full_wide = static_cast<double>(count_macs(cfg, 720, 1280)) / 1e9;
    const double rep_wide = static_cast<double>(count_macs(rcfg, 720, 1280)) / 1e9;
    detail = "960x720: full=" + fmt(full) + " (672 +-25%), reparam=" + fmt(rep) + " (175 +-25%); oracle " +
             (oracle_ok ? "exact" : "MISMATCH") + "; 1280x720 would give " + fmt(full_wide) + " / " + fmt(rep_wide);
    return oracle_ok && within(full, 672, 0.25) && within(rep, 175, 0.25);
}

bool conv_exact(std::string& detail)
{
    std::mt19937 rng(2024);
    int exact = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> gd(1, 4), cd(1, 6), kd(0, 3), sd(1, 3), hw(1, 70);
        const std::int64_t groups = gd(rng);
        const std::int64_t k = 1 + 2 * kd(rng);
        const std::int64_t stride = sd(rng);
        const std::int64_t pad = std::uniform_int_distribution<int>(0, static_cast<int>(k / 2 + 1))(rng);
        ConvGeometry g{groups * cd(rng), groups * cd(rng), k, k, stride, pad, groups};
        const Shape s{1 + trial % 2, g.in_channels, k + hw(rng), k + hw(rng)};
        const auto x = lcs::testing::random_tensor<float>(s, 700 + static_cast<std::uint64_t>(trial));
        const auto w = lcs::testing::random_conv<float>(g, 900 + static_cast<std::uint64_t>(trial));
        exact += conv2d(x, w) == lcs::testing::reference_conv(x, w);
    }
    detail = std::to_string(exact) + "/50 shape/stride/padding/group combos bitwise equal to direct summation";
    return exact == 50;
}

bool metric_identities(std::string& detail)
{
    const auto a = lcs::testing::dead_leaves(77, 64, 64);
    const double p_same = psnr(a, a);
    Tensor<double> zero(Shape{1, 3, 32, 32}, 0.0), offset(Shape{1, 3, 32, 32}, 0.1);
    const double p_off = psnr(zero, offset);
    const double s_same = ssim(a, a);
    std::vector<double> scores(100);
    for (int i = 0; i < 100; ++i)
        scores[static_cast<std::size_t>(i)] = i + 1;
    const auto ci = aggregate_ci(scores, 0.68);
    detail = "psnr(a,a)=" + fmt(p_same) + " offset0.1=" + fmt(p_off, 15) + " ssim(a,a)=" + fmt(s_same, 15) +
             " ci=(" + fmt(ci.mean) + ", " + fmt(ci.lo) + ", " + fmt(ci.hi) + ")";
    return p_same == 100.0 && std::abs(p_off - 20.0) <= 1e-9 && s_same == 1.0 && ci.mean == 50.5 &&
           std::abs(ci.lo - 16.84) <= 1e-9 && std::abs(ci.hi - 84.16) <= 1e-9;
}

bool quantization(std::string& detail)
{
    // 1000 channels x 1000 weights, channel magnitudes spread over decades.
    auto w = ConvWeights<float>::zeros({1000, 1000, 1, 1});
    std::mt19937_64 rng(31337);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> mag(-4.0, 1.0);
    for (std::int64_t o = 0; o < 1000; ++o) {
        const double s = std::pow(10.0, mag(rng));
        for (std::int64_t i = 0; i < 1000; ++i)
            w.at(o, i, 0, 0) = static_cast<float>(nd(rng) * s);
    }
    const auto q = quantize_conv(w);
    const auto d = dequantize_conv(q);
    std::size_t violations = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < w.kernel.size(); ++i) {
        const double s = q.scales[i / 1000];
        const double e = std::abs(static_cast<double>(w.kernel[i]) - static_cast<double>(d.kernel[i]));
        worst = std::max(worst, e / s);
        violations += e > s / 2;
    }

    const ModelConfig cfg;
    const auto fw = reparameterize_model(cfg, random_weights(cfg, 4242));
    const auto rcfg = with_mode(cfg, Mode::reparam);
    const double fp_size = static_cast<double>(write_container(rcfg, fw).size());
    const double q_size = static_cast<double>(write_container(rcfg, quantize_model(fw)).size());

    double conv_diff = 0.0;
    for (std::uint64_t t = 0; t < 5; ++t) {
        const auto layer = lcs::testing::random_conv<float>({32, 24, 3, 3, 1, 1, 1}, 60 + t);
        const auto ql = quantize_conv(layer);
        const auto x = lcs::testing::random_tensor<float>(Shape{1, 24, 48, 64}, 70 + t);
        conv_diff = std::max(conv_diff, lcs::testing::max_abs_diff(conv2d_q(x, ql), conv2d(x, dequantize_conv(ql))));
    }
    detail = "1e6 weights: " + std::to_string(violations) + " over scale/2 (worst " + fmt(worst) +
             " scale); int8/fp32 container=" + fmt(q_size / fp_size, 4) + " (<0.30); conv2d_q diff=" + fmt(conv_diff) +
             " (<=1e-6)";
    return violations == 0 && q_size / fp_size < 0.30 && conv_diff <= 1e-6;
}

bool niqe_ordering(std::string& detail)
{
    constexpr std::int64_t kSize = 384;
    std::vector<Tensor<float>> pristine;
    for (std::uint64_t s = 0; s < 12; ++s)
        pristine.push_back(image_to_tensor(tensor_to_image(lcs::testing::dead_leaves(9000 + s, kSize, kSize))));
    const NiqeModel model = fit_niqe_model(std::span<const Tensor<float>>(pristine));
    int better = 0;
    std::ostringstream pairs;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto clean = image_to_tensor(tensor_to_image(lcs::testing::dead_leaves(100 + s, kSize, kSize)));
        const auto noisy = image_to_tensor(tensor_to_image(lcs::testing::add_noise(clean, 0.1, 500 + s)));
        const double a = niqe(clean, model), b = niqe(noisy, model);
        better += a < b;
        pairs << (s ? " " : "") << fmt(a, 3) << "<" << fmt(b, 3);
    }
    detail = std::to_string(better) + "/10 clean < noisy (>=9); " + pairs.str();
    return better >= 9;
}

bool end_to_end(std::string& detail)
{
    const auto dir = lcs::testing::scratch_dir("acceptance_e2e");
    std::ostringstream out, err;
    if (cli::cmd_init(dir / "full.lcsw", ModelConfig{}, 7, out, err) != 0 ||
        cli::cmd_convert(dir / "full.lcsw", dir / "int8.lcsw", true, out, err) != 0)
        throw std::runtime_error("container setup failed: " + err.str());
    fs::create_directories(dir / "lr");
    save_image(dir / "lr" / "frame.png", lcs::testing::dead_leaves(11, 720, 960));

    bool ok = true;
    std::string shapes;
    for (const char* kind : {"full", "int8"}) {
        const fs::path out_dir = dir / (std::string("out_") + kind);
        const int rc = cli::cmd_upscale(dir / (std::string(kind) + ".lcsw"), dir / "lr", out_dir, out, err);
        const fs::path png = out_dir / "frame_x2.png";
        if (rc != 0 || !fs::exists(png)) {
            ok = false;
            shapes += std::string(kind) + ": rc=" + std::to_string(rc) + " ";
            continue;
        }
        const auto sr = load_image(png);
        shapes += std::string(kind) + " -> " + std::to_string(sr.w()) + "x" + std::to_string(sr.h()) + "  ";
        ok = ok && sr.w() == 1920 && sr.h() == 1440;
    }
    detail = "960x720 PNG: " + shapes;
    return ok;
}

} // namespace

int main()
{
    cli::apply_thread_env();
    run_criterion("reparam-equivalence", reparam_equivalence);
    run_criterion("parameter-counts", parameter_counts);
    run_criterion("gmacs-960x720", gmacs);
    run_criterion("conv-exact", conv_exact);
    run_criterion("metric-identities", metric_identities);
    run_criterion("quantization-bounds", quantization);
    run_criterion("niqe-ordering", niqe_ordering);
    run_criterion("end-to-end-upscale", end_to_end);
    std::printf("%d criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
