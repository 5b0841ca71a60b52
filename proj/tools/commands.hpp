#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>

#include "lcs/model.hpp"

namespace lcs::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kInternal = 1, kFormat = 2, kIo = 3 };

/// Caps OpenMP workers from LCS_THREADS when it holds a positive integer.
void apply_thread_env();

/// Upscales one PNG or every *.png in a directory into out_dir/<stem>_x{scale}.png.
int cmd_upscale(const fs::path& weights, const fs::path& input, const fs::path& out_dir, std::ostream& out,
                std::ostream& err);

/// Full FP32 container -> reparameterized container, optionally INT8.
int cmd_convert(const fs::path& in, const fs::path& out_path, bool quantize, std::ostream& out, std::ostream& err);

struct EvalOptions {
    std::optional<fs::path> niqe_model;
    double level = 0.68;
};

/// Upscales paired LR images and writes a JSON-lines metric report.
int cmd_eval(const fs::path& weights, const fs::path& lr_dir, const fs::path& hr_dir, const fs::path& report,
             const EvalOptions& opts, std::ostream& out, std::ostream& err);

struct BenchOptions {
    std::int64_t height = 720;
    std::int64_t width = 960;
    int iters = 10;
    std::uint64_t seed = 0;
};

/// Parameter count, MACs and forward latency for a container.
int cmd_bench(const fs::path& weights, const BenchOptions& opts, std::ostream& out, std::ostream& err);

/// Fits a NIQE pristine model on every *.png of corpus_dir.
int cmd_fit_niqe(const fs::path& corpus_dir, const fs::path& model_out, std::int64_t patch_size, std::ostream& out,
                 std::ostream& err);

/// Writes a randomly initialized full FP32 container.
int cmd_init(const fs::path& out_path, const ModelConfig& cfg, std::uint64_t seed, std::ostream& out,
             std::ostream& err);

/// Parses argv and dispatches to the commands above.
int run(int argc, char** argv);

} // namespace lcs::cli
