#include "evfuse/gradcheck.hpp"

#include <cmath>
#include <cstring>

#include "evfuse/errors.hpp"

namespace evfuse {

namespace {

bool bitwise_equal(double a, double b) {
    return std::memcmp(&a, &b, sizeof(double)) == 0;
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  std::vector<std::pair<std::string, Tensor>>& params,
                                  const std::vector<std::vector<double>>& analytic,
                                  const std::vector<GradCheckSample>& samples, double step_scale,
                                  double tolerance) {
    if (params.size() != analytic.size()) {
        throw ContractError("finite_diff_check: analytic gradient count does not match params");
    }
    const double base0 = f();
    const double base1 = f();
    if (!bitwise_equal(base0, base1)) {
        throw ContractError("finite_diff_check: objective is not deterministic");
    }

    GradCheckReport report;
    report.pass = true;
    for (const GradCheckSample& s : samples) {
        if (s.param >= params.size()) throw ContractError("finite_diff_check: sample param out of range");
        Tensor& value = params[s.param].second;
        if (s.index >= value.size()) throw ContractError("finite_diff_check: sample index out of range");

        double* slot = value.mutable_data() + s.index;
        const double saved = *slot;
        const double h = step_scale * std::max(1.0, std::abs(saved));

        *slot = saved + h;
        const double up = f();
        *slot = saved - h;
        const double down = f();
        *slot = saved;

        GradCheckEntry entry;
        entry.param = params[s.param].first;
        entry.index = s.index;
        entry.analytic = analytic[s.param][s.index];
        entry.numeric = (up - down) / (2.0 * h);
        entry.rel_err = std::abs(entry.analytic - entry.numeric) /
                        std::max({1.0, std::abs(entry.analytic), std::abs(entry.numeric)});
        entry.pass = entry.rel_err <= tolerance;
        report.worst_rel_err = std::max(report.worst_rel_err, entry.rel_err);
        report.pass = report.pass && entry.pass;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace evfuse
