// evfuse command-line interface.
//
// Exit codes: 0 success, 1 validation failure, 2 I/O or parse error.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evfuse/commands.hpp"
#include "evfuse/errors.hpp"

namespace {

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t pos = 0;
        out.push_back(std::stod(item, &pos));
        if (pos != item.size()) throw evfuse::ParseError("bad number in list: '" + item + "'");
    }
    if (out.empty()) throw evfuse::ParseError("expected a comma-separated list, got '" + csv + "'");
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
    std::vector<std::size_t> out;
    for (double v : parse_double_list(csv)) {
        if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
            throw evfuse::ParseError("expected non-negative integers, got '" + csv + "'");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frame-event hypergraph fusion pipeline"};
    app.require_subcommand(1);

    evfuse::cli::ForwardOptions fwd;
    CLI::App* forward = app.add_subcommand("forward", "run inference on a frame + event file");
    forward->add_option("--config", fwd.config_path, "config file")->required();
    forward->add_option("--frame", fwd.frame_path, "frame tensor (.hft)")->required();
    forward->add_option("--events", fwd.events_path, "event CSV")->required();
    forward->add_option("--out", fwd.out_path, "output metrics JSON")->required();

    evfuse::cli::TrainOptions trn;
    CLI::App* train = app.add_subcommand("train-toy", "train on the synthetic moving-square stream");
    train->add_option("--config", trn.config_path, "config file")->required();
    train->add_option("--steps", trn.steps, "gradient steps")->default_val(300);
    train->add_option("--out", trn.out_path, "output metrics JSON")->required();

    evfuse::cli::GradcheckOptions gck;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full loss");
    gradcheck->add_option("--config", gck.config_path, "config file")->required();
    gradcheck->add_option("--samples", gck.samples, "sampled parameters")->default_val(50);

    evfuse::cli::BenchOptions bch;
    std::string rho_csv = "1.0";
    std::string m_csv;
    CLI::App* bench = app.add_subcommand("bench-sparsity", "attention cost vs. sparsity ratio");
    bench->add_option("--config", bch.config_path, "config file")->required();
    bench->add_option("--rho", rho_csv, "comma-separated sparsity ratios");
    bench->add_option("--m-list", m_csv, "comma-separated hyperedge counts (dense rows)");
    bench->add_option("--out", bch.out_path, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    try {
        if (*forward) return evfuse::cli::cmd_forward(fwd, std::cout);
        if (*train) return evfuse::cli::cmd_train_toy(trn, std::cout);
        if (*gradcheck) return evfuse::cli::cmd_gradcheck(gck, std::cout);
        if (*bench) {
            bch.rhos = parse_double_list(rho_csv);
            if (!m_csv.empty()) bch.edge_counts = parse_size_list(m_csv);
            return evfuse::cli::cmd_bench_sparsity(bch, std::cout);
        }
    } catch (const evfuse::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const evfuse::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
