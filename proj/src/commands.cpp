#include "evfuse/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>

#include "evfuse/counters.hpp"
#include "evfuse/errors.hpp"
#include "evfuse/hyperedges.hpp"
#include "evfuse/pipeline.hpp"
#include "evfuse/toy_data.hpp"

namespace evfuse::cli {

namespace {

using nlohmann::ordered_json;

ordered_json config_json(const ModelConfig& cfg) {
    ordered_json j;
    j["image_size"] = cfg.image_size;
    j["channels"] = cfg.channels;
    j["frame_channels"] = cfg.frame_channels;
    j["stride_base"] = cfg.stride_base;
    j["hyperedge_k"] = cfg.hyperedge_k;
    j["heads"] = cfg.heads;
    j["fcm_train_iters"] = cfg.fcm_train_iters;
    j["fcm_infer_iters"] = cfg.fcm_infer_iters;
    j["fuzzifier"] = cfg.fuzzifier;
    j["fcm_dist_floor"] = cfg.fcm_dist_floor;
    j["sparse"] = cfg.sparse;
    j["rho"] = cfg.rho;
    j["mask_ratio"] = cfg.mask_ratio;
    j["lambda1"] = cfg.lambda1;
    j["lambda2"] = cfg.lambda2;
    j["gen_hyperedges"] = cfg.gen_hyperedges;
    j["gen_fcm_iters"] = cfg.gen_fcm_iters;
    j["seed"] = cfg.seed;
    j["num_classes"] = cfg.num_classes;
    j["learning_rate"] = cfg.learning_rate;
    j["event_threshold"] = cfg.event_threshold;
    return j;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << content;
    if (!f) throw IoError("failed writing: " + path);
}

std::string module_of(const std::string& param_name) {
    const auto dot = param_name.find('.');
    return dot == std::string::npos ? param_name : param_name.substr(0, dot);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

ordered_json forward_report(const ModelConfig& cfg, const Tensor& frame, const EventStream& events) {
    validate_config(cfg);
    Model model = init_model(cfg);

    Tape tape;
    Model bound = bind_model(tape, model);
    counters::reset();
    PipelineOutput out = run_pipeline(tape, bound, cfg, frame, events, Phase::Infer);
    const counters::Counters counts = counters::get();

    const std::size_t grid = cfg.image_size / cfg.stride_base;
    const std::size_t cells = grid * grid;
    const std::size_t k = cfg.num_classes;

    ordered_json predictions;
    predictions["grid"] = {grid, grid};
    {
        std::vector<double> obj(cells);
        for (std::size_t i = 0; i < cells; ++i) obj[i] = sigmoid(out.head_out.at(i, 0));
        predictions["objectness"] = obj;
    }
    {
        std::vector<std::vector<double>> boxes(cells, std::vector<double>(4));
        for (std::size_t i = 0; i < cells; ++i) {
            for (std::size_t j = 0; j < 4; ++j) boxes[i][j] = out.head_out.at(i, 1 + j);
        }
        predictions["boxes"] = boxes;
    }
    {
        std::vector<std::vector<double>> probs(cells, std::vector<double>(k));
        for (std::size_t i = 0; i < cells; ++i) {
            double mx = out.head_out.at(i, 5);
            for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, out.head_out.at(i, 5 + j));
            double denom = 0.0;
            for (std::size_t j = 0; j < k; ++j) denom += std::exp(out.head_out.at(i, 5 + j) - mx);
            for (std::size_t j = 0; j < k; ++j) {
                probs[i][j] = std::exp(out.head_out.at(i, 5 + j) - mx) / denom;
            }
        }
        predictions["class_probs"] = probs;
    }

    ordered_json j;
    j["command"] = "forward";
    j["config"] = config_json(cfg);
    j["sparse_cells"] = out.selection.cells;
    j["predictions"] = predictions;
    j["counters"] = {{"attn_score_mults", counts.attn_score_mults},
                     {"attn_value_mults", counts.attn_value_mults},
                     {"attn_total_mults", counts.attn_total()},
                     {"mask_draws", counts.mask_draws},
                     {"generator_calls", counts.generator_calls}};
    return j;
}

ordered_json train_report(const ModelConfig& cfg, const TrainResult& result) {
    ordered_json steps = ordered_json::array();
    bool losses_finite = true;
    bool monotone_steps = true;
    for (std::size_t i = 0; i < result.metrics.size(); ++i) {
        const StepMetrics& m = result.metrics[i];
        steps.push_back({{"step", m.step},
                         {"base", m.base},
                         {"distill_frame", m.distill_frame},
                         {"distill_event", m.distill_event},
                         {"total", m.total}});
        losses_finite = losses_finite && std::isfinite(m.total);
        if (i > 0) monotone_steps = monotone_steps && (m.step == result.metrics[i - 1].step + 1);
    }
    bool params_finite = true;
    for_each_param(result.model, [&](const std::string&, const Tensor& t) {
        params_finite = params_finite && t.all_finite();
    });

    ordered_json j;
    j["command"] = "train-toy";
    j["config"] = config_json(cfg);
    j["steps"] = steps;
    j["attn_mults_per_step"] = result.attn_mults_per_step;
    j["final_checks"] = {{"losses_finite", losses_finite},
                         {"params_finite", params_finite},
                         {"steps_monotone", monotone_steps}};
    return j;
}

GradcheckOutcome gradcheck_full_loss(const ModelConfig& cfg, std::size_t samples, double tolerance) {
    validate_config(cfg);
    if (cfg.image_size > 32) {
        throw ConfigError("gradcheck is limited to images of at most 32x32; got " +
                          std::to_string(cfg.image_size));
    }
    Model model = init_model(cfg);
    const ToySample sample = toy_sample(cfg, 0);
    const bool with_distill = cfg.lambda1 > 0.0 || cfg.lambda2 > 0.0;

    auto loss_of = [&](Tape& tape, const Model& bound) {
        PipelineOutput out = run_pipeline(tape, bound, cfg, sample.frame, sample.events, Phase::Train);
        Tensor base = base_loss(tape, out.head_out, sample.targets, cfg.num_classes);
        if (!with_distill) return base;
        DistillLosses dl = distill_losses(tape, bound, cfg, out, 0);
        return total_loss(tape, base, dl.frame, dl.event, cfg.lambda1, cfg.lambda2);
    };

    // live parameter views (shared buffers) + analytic gradients
    std::vector<std::pair<std::string, Tensor>> params;
    for_each_param(model, [&](const std::string& name, Tensor& t) { params.emplace_back(name, t); });

    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Model bound = bind_model(tape, model);
        Tensor total = loss_of(tape, bound);
        tape.backward(total);
        std::vector<Tensor> bound_params;
        for_each_param(bound, [&](const std::string&, Tensor& t) { bound_params.push_back(t); });
        for (const Tensor& b : bound_params) {
            Tensor g = tape.grad(b);
            analytic.emplace_back(g.data(), g.data() + g.size());
        }
    }

    // deterministic global element sample without replacement
    std::size_t total_elems = 0;
    for (const auto& [name, t] : params) total_elems += t.size();
    SplitMix64 rng(SplitMix64::mix(cfg.seed, 0x67636B /* "gck" */));
    std::set<std::uint64_t> chosen;
    while (chosen.size() < std::min<std::size_t>(samples, total_elems)) {
        chosen.insert(rng.next_below(total_elems));
    }
    std::vector<GradCheckSample> sampled;
    for (std::uint64_t flat : chosen) {
        std::size_t pi = 0;
        while (flat >= params[pi].second.size()) {
            flat -= params[pi].second.size();
            ++pi;
        }
        sampled.push_back({pi, static_cast<std::size_t>(flat)});
    }

    auto f = [&]() {
        Tape tape;
        Model bound = bind_model(tape, model);
        return loss_of(tape, bound).item();
    };

    GradcheckOutcome outcome;
    outcome.report = finite_diff_check(f, params, analytic, sampled, 1e-5, tolerance);
    outcome.pass = outcome.report.pass;

    std::vector<std::pair<std::string, double>> worst;
    for (const GradCheckEntry& e : outcome.report.entries) {
        const std::string mod = module_of(e.param);
        auto it = std::find_if(worst.begin(), worst.end(),
                               [&](const auto& p) { return p.first == mod; });
        if (it == worst.end()) {
            worst.emplace_back(mod, e.rel_err);
        } else {
            it->second = std::max(it->second, e.rel_err);
        }
    }
    outcome.per_module_worst = std::move(worst);
    return outcome;
}

std::string gradcheck_text(const GradcheckOutcome& outcome) {
    char buf[160];
    std::string text = "module                worst rel err\n";
    for (const auto& [mod, err] : outcome.per_module_worst) {
        std::snprintf(buf, sizeof(buf), "%-20s  %.3e\n", mod.c_str(), err);
        text += buf;
    }
    std::snprintf(buf, sizeof(buf), "overall worst: %.3e over %zu sampled parameters -> %s\n",
                  outcome.report.worst_rel_err, outcome.report.entries.size(),
                  outcome.pass ? "PASS" : "FAIL");
    text += buf;
    return text;
}

namespace {

// Shared fixed input for every bench row.
struct BenchContext {
    ModelConfig cfg;
    Model model;
    ToySample sample;
};

BenchRow measure_attention(BenchContext& ctx, double rho, std::size_t edge_count) {
    const ModelConfig& cfg = ctx.cfg;
    Tape tape;
    Model bound = bind_model(tape, ctx.model);
    FeaturePyramid frame_pyr = encode(tape, ctx.sample.frame, bound.enc_frame);
    const auto t0 = ctx.sample.events.events.empty() ? 0 : ctx.sample.events.events.front().t;
    const auto t1 = ctx.sample.events.events.empty() ? 1 : ctx.sample.events.events.back().t + 1;
    FeaturePyramid event_pyr = encode(tape, events_to_frame(ctx.sample.events, t0, t1), bound.enc_event);

    VertexSet verts = concat_vertices(tape, frame_pyr.f5, event_pyr.f5);

    // pooling grid large enough for the requested edge count, trimmed down
    const auto half = (edge_count + 1) / 2;
    std::size_t k = cfg.hyperedge_k;
    while (2 * k * k < edge_count) ++k;
    HyperedgeSet initial = build_initial_hyperedges(tape, frame_pyr.f5, event_pyr.f5, k);
    if (initial.count() != edge_count) {
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < half; ++i) keep.push_back(i);
        for (std::size_t i = 0; i < edge_count - half; ++i) keep.push_back(k * k + i);
        initial.edges = tape.gather_rows(initial.edges, keep);
        initial.provenance.resize(edge_count);
    }
    FcmConfig fcm{cfg.fcm_infer_iters, cfg.fuzzifier, cfg.fcm_dist_floor};
    HyperedgeSet refined = fcm_refine(tape, initial, verts, fcm);

    ActivityMap am = activity_map(ctx.sample.events, t0, t1, cfg.scale5_stride());
    SparseSelection sel = select_sparse_tokens(am, rho);

    counters::reset();
    const auto start = std::chrono::steady_clock::now();
    Tensor out = sparse_hypergraph_attention(tape, verts.rows, refined.edges, bound.attention, sel);
    const auto end = std::chrono::steady_clock::now();
    (void)out;

    BenchRow row;
    row.rho = rho;
    row.edge_count = edge_count;
    row.score_mults = counters::get().attn_score_mults;
    row.value_mults = counters::get().attn_value_mults;
    row.wall_ms = std::chrono::duration<double, std::milli>(end - start).count();
    return row;
}

}  // namespace

std::vector<BenchRow> bench_sparsity(const ModelConfig& cfg, const std::vector<double>& rhos,
                                     const std::vector<std::size_t>& edge_counts) {
    validate_config(cfg);
    BenchContext ctx{cfg, init_model(cfg), toy_sample(cfg, 0)};

    std::vector<BenchRow> rows;
    for (double rho : rhos) {
        rows.push_back(measure_attention(ctx, rho, cfg.hyperedge_count()));
    }
    for (std::size_t m : edge_counts) {
        if (m == 0) throw ConfigError("hyperedge count must be positive");
        rows.push_back(measure_attention(ctx, 1.0, m));
    }
    return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::string csv = "rho,m,attn_score_mults,attn_value_mults,attn_total_mults\n";
    char buf[160];
    for (const BenchRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.6g,%zu,%llu,%llu,%llu\n", r.rho, r.edge_count,
                      static_cast<unsigned long long>(r.score_mults),
                      static_cast<unsigned long long>(r.value_mults),
                      static_cast<unsigned long long>(r.score_mults + r.value_mults));
        csv += buf;
    }
    return csv;
}

int cmd_forward(const ForwardOptions& opt, std::ostream& log) {
    const ModelConfig cfg = parse_config_file(opt.config_path);
    validate_config(cfg);
    const Tensor frame = Tensor::load_file(opt.frame_path);
    if (frame.ndim() != 3 || frame.extent(0) != cfg.frame_channels ||
        frame.extent(1) != cfg.image_size || frame.extent(2) != cfg.image_size) {
        throw ShapeError("frame tensor " + frame.shape_str() + " does not match config (" +
                         std::to_string(cfg.frame_channels) + " x " + std::to_string(cfg.image_size) +
                         " x " + std::to_string(cfg.image_size) + ")");
    }
    const EventStream events = parse_events_file(opt.events_path, cfg.image_size, cfg.image_size);

    const auto start = std::chrono::steady_clock::now();
    const ordered_json report = forward_report(cfg, frame, events);
    const auto end = std::chrono::steady_clock::now();

    write_text_file(opt.out_path, report.dump(2) + "\n");
    log << "forward: wrote " << opt.out_path << " ("
        << std::chrono::duration<double, std::milli>(end - start).count() << " ms, "
        << report["counters"]["attn_total_mults"].get<std::uint64_t>() << " attention multiplies)\n";
    return 0;
}

int cmd_train_toy(const TrainOptions& opt, std::ostream& log) {
    const ModelConfig cfg = parse_config_file(opt.config_path);
    validate_config(cfg);

    const auto start = std::chrono::steady_clock::now();
    const TrainResult result = train_toy(cfg, opt.steps);
    const auto end = std::chrono::steady_clock::now();
    if (result.diverged) {
        log << "train-toy: loss diverged (NaN/Inf) at step " << result.diverged_step << "\n";
        return 1;
    }

    write_text_file(opt.out_path, train_report(cfg, result).dump(2) + "\n");
    log << "train-toy: " << opt.steps << " steps in "
        << std::chrono::duration<double>(end - start).count() << " s; total loss "
        << result.metrics.front().total << " -> " << result.metrics.back().total << "; wrote "
        << opt.out_path << "\n";
    return 0;
}

int cmd_gradcheck(const GradcheckOptions& opt, std::ostream& log) {
    const ModelConfig cfg = parse_config_file(opt.config_path);
    validate_config(cfg);
    const GradcheckOutcome outcome = gradcheck_full_loss(cfg, opt.samples, opt.tolerance);
    log << gradcheck_text(outcome);
    return outcome.pass ? 0 : 1;
}

int cmd_bench_sparsity(const BenchOptions& opt, std::ostream& log) {
    const ModelConfig cfg = parse_config_file(opt.config_path);
    validate_config(cfg);
    const std::vector<BenchRow> rows = bench_sparsity(cfg, opt.rhos, opt.edge_counts);
    write_text_file(opt.out_path, bench_csv(rows));
    log << "rho       m      score_mults  value_mults  wall_ms\n";
    char buf[160];
    for (const BenchRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-8.4g  %-5zu  %-11llu  %-11llu  %.4f\n", r.rho, r.edge_count,
                      static_cast<unsigned long long>(r.score_mults),
                      static_cast<unsigned long long>(r.value_mults), r.wall_ms);
        log << buf;
    }
    log << "wrote " << opt.out_path << " (timings stay on the console so the file is reproducible)\n";
    return 0;
}

}  // namespace evfuse::cli
