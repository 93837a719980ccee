#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "evfuse/config.hpp"
#include "evfuse/events.hpp"
#include "evfuse/gradcheck.hpp"
#include "evfuse/train.hpp"

namespace evfuse::cli {

// ---- pure builders (shared by the CLI and the acceptance suite) ----

// Inference forward pass; the returned document is what cmd_forward writes.
// Timings never enter output files so repeated runs stay bit-identical.
nlohmann::ordered_json forward_report(const ModelConfig& cfg, const Tensor& frame,
                                      const EventStream& events);

nlohmann::ordered_json train_report(const ModelConfig& cfg, const TrainResult& result);

struct GradcheckOutcome {
    GradCheckReport report;
    // module name -> worst relative error in that module
    std::vector<std::pair<std::string, double>> per_module_worst;
    bool pass = false;
};

// Finite-difference check of the full training loss on a small config.
GradcheckOutcome gradcheck_full_loss(const ModelConfig& cfg, std::size_t samples, double tolerance);
std::string gradcheck_text(const GradcheckOutcome& outcome);

struct BenchRow {
    double rho = 1.0;
    std::size_t edge_count = 0;
    std::uint64_t score_mults = 0;
    std::uint64_t value_mults = 0;
    double wall_ms = 0.0;  // reported on the console only
};

// One row per rho (at the config's edge count), then one dense row per
// requested edge count.
std::vector<BenchRow> bench_sparsity(const ModelConfig& cfg, const std::vector<double>& rhos,
                                     const std::vector<std::size_t>& edge_counts);
// Deterministic columns only (no timings).
std::string bench_csv(const std::vector<BenchRow>& rows);

// ---- command entry points (exit code semantics: 0 ok, 1 validation) ----
// I/O and parse failures are thrown (ParseError/IoError) and mapped to exit
// code 2 by the binary.

struct ForwardOptions {
    std::string config_path, frame_path, events_path, out_path;
};
int cmd_forward(const ForwardOptions& opt, std::ostream& log);

struct TrainOptions {
    std::string config_path, out_path;
    std::uint64_t steps = 300;
};
int cmd_train_toy(const TrainOptions& opt, std::ostream& log);

struct GradcheckOptions {
    std::string config_path;
    std::size_t samples = 50;
    double tolerance = 1e-4;
};
int cmd_gradcheck(const GradcheckOptions& opt, std::ostream& log);

struct BenchOptions {
    std::string config_path, out_path;
    std::vector<double> rhos;
    std::vector<std::size_t> edge_counts;
};
int cmd_bench_sparsity(const BenchOptions& opt, std::ostream& log);

}  // namespace evfuse::cli
