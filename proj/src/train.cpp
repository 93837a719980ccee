#include "evfuse/train.hpp"

#include <cmath>

#include "evfuse/counters.hpp"
#include "evfuse/kernels.hpp"
#include "evfuse/pipeline.hpp"
#include "evfuse/toy_data.hpp"

namespace evfuse {

namespace {

void sgd_update(Model& model, Model& bound, Tape& tape, double lr) {
    std::vector<Tensor*> targets;
    for_each_param(model, [&](const std::string&, Tensor& t) { targets.push_back(&t); });
    std::size_t i = 0;
    for_each_param(bound, [&](const std::string&, Tensor& b) {
        Tensor g = tape.grad(b);
        Tensor updated = targets[i]->detach();
        kernels::active().axpy(-lr, g.data(), updated.mutable_data(), updated.size());
        *targets[i] = updated;
        ++i;
    });
}

}  // namespace

TrainResult train_toy(const ModelConfig& cfg, std::uint64_t steps, bool force_distill_graph) {
    validate_config(cfg);
    TrainResult result;
    result.model = init_model(cfg);
    const bool with_distill = force_distill_graph || cfg.lambda1 > 0.0 || cfg.lambda2 > 0.0;

    for (std::uint64_t step = 0; step <= steps; ++step) {
        const ToySample sample = toy_sample(cfg, step);

        Tape tape;
        Model bound = bind_model(tape, result.model);
        counters::reset();
        PipelineOutput out = run_pipeline(tape, bound, cfg, sample.frame, sample.events, Phase::Train);
        result.attn_mults_per_step = counters::get().attn_total();

        Tensor base = base_loss(tape, out.head_out, sample.targets, cfg.num_classes);
        Tensor total = base;
        StepMetrics sm;
        sm.step = step;
        sm.base = base.item();
        if (with_distill) {
            DistillLosses dl = distill_losses(tape, bound, cfg, out, step);
            sm.distill_frame = dl.frame.item();
            sm.distill_event = dl.event.item();
            total = total_loss(tape, base, dl.frame, dl.event, cfg.lambda1, cfg.lambda2);
        }
        sm.total = total.item();
        result.metrics.push_back(sm);

        if (!std::isfinite(sm.total)) {
            result.diverged = true;
            result.diverged_step = step;
            return result;
        }
        if (step == steps) break;

        tape.backward(total);
        sgd_update(result.model, bound, tape, cfg.learning_rate);
    }
    return result;
}

double feature_alignment_mse(const Model& model, const ModelConfig& cfg, std::uint64_t first_step,
                             std::size_t n_samples) {
    double acc = 0.0;
    std::size_t terms = 0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const ToySample sample = toy_sample(cfg, first_step + s);
        Tape tape;
        Model bound = bind_model(tape, model);
        PipelineOutput out = run_pipeline(tape, bound, cfg, sample.frame, sample.events, Phase::Infer);
        const FeaturePyramid* students[2] = {&out.student_frame, &out.student_event};
        for (const FeaturePyramid* student : students) {
            const Tensor* levels[3] = {&student->f3, &student->f4, &student->f5};
            const Tensor* fused[3] = {&out.fused.f3, &out.fused.f4, &out.fused.f5};
            for (std::size_t l = 0; l < 3; ++l) {
                double sq = 0.0;
                for (std::size_t i = 0; i < levels[l]->size(); ++i) {
                    const double d = levels[l]->at(i) - fused[l]->at(i);
                    sq += d * d;
                }
                acc += sq / static_cast<double>(levels[l]->size());
                ++terms;
            }
        }
    }
    return acc / static_cast<double>(terms);
}

}  // namespace evfuse
