#include "sparselab/data_io.hpp"
#include "sparselab/error.hpp"
#include "sparselab/experiment.hpp"
#include "sparselab/kernels.hpp"
#include "sparselab/report.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

using namespace sparselab;

namespace {

struct ConfigFlags {
    std::string config_path;
    std::optional<std::string> architecture, dataset, method, scope, direction, handling, out, data;
    std::vector<std::uint64_t> seeds;
    std::optional<std::size_t> epochs, batch_size, iterations, capture_epoch;
    std::optional<double> lr, fraction;

    void add_to(CLI::App& app) {
        app.add_option("--config", config_path, "JSON experiment config; its fields override flags");
        app.add_option("--architecture", architecture, "lenet or an architecture JSON path");
        app.add_option("--dataset", dataset, "mnist, cifar10 or synthetic");
        app.add_option("--seed", seeds, "seed (repeatable)");
        app.add_option("--epochs", epochs, "epochs per pruning iteration");
        app.add_option("--lr", lr, "SGD learning rate");
        app.add_option("--batch-size", batch_size);
        app.add_option("--iterations", iterations, "pruning iterations");
        app.add_option("--fraction", fraction, "fraction of remaining weights pruned per iteration");
        app.add_option("--method", method);
        app.add_option("--scope", scope, "local or global");
        app.add_option("--direction", direction, "prune_low or prune_high");
        app.add_option("--handling", handling, "rewind, finetune, sign_sigma or sign_only");
        app.add_option("--capture-epoch", capture_epoch, "epoch of iteration 1 whose weights are rewound to");
        app.add_option("--out", out, "output directory for run directories");
        app.add_option("--data", data, "dataset root (default $SPARSELAB_DATA or ./data)");
    }

    ExperimentConfig build() const {
        ExperimentConfig c;
        auto set_enum = [](auto& field, const std::optional<std::string>& v, auto parse, const char* what) {
            if (!v) {
                return;
            }
            const auto parsed = parse(*v);
            if (!parsed) {
                throw ConfigError(std::string("unknown ") + what + " '" + *v + "'");
            }
            field = *parsed;
        };
        if (architecture) c.architecture = *architecture;
        if (dataset) c.dataset = *dataset;
        if (!seeds.empty()) c.seeds = seeds;
        if (epochs) c.epochs_per_iteration = *epochs;
        if (lr) c.lr = *lr;
        if (batch_size) c.batch_size = *batch_size;
        if (iterations) c.iterations = *iterations;
        if (fraction) c.prune.fraction = *fraction;
        if (capture_epoch) c.checkpoint_capture_epoch = *capture_epoch;
        if (out) c.output_dir = *out;
        if (data) c.data_dir = *data;
        set_enum(c.prune.method, method, parse_method, "method");
        set_enum(c.prune.scope, scope, parse_scope, "scope");
        set_enum(c.prune.direction, direction, parse_direction, "direction");
        set_enum(c.handling, handling, parse_handling, "handling");
        if (!config_path.empty()) {
            c.merge_json(read_text(config_path));
        }
        c.validate();
        return c;
    }
};

void log_line(const std::string& s) {
    std::fprintf(stderr, "%s\n", s.c_str());
    std::fflush(stderr);
}

void emit(const std::string& text, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        write_text(out, text);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iterative pruning experiments and mask analysis"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run one experiment per seed");
    ConfigFlags run_flags;
    run_flags.add_to(*run);

    auto* sweep = app.add_subcommand("sweep", "run every cell of a grid");
    std::string grid_path;
    std::size_t jobs = 1;
    std::optional<std::string> sweep_out;
    sweep->add_option("--grid", grid_path, "grid JSON")->required();
    sweep->add_option("--jobs", jobs, "cells run in parallel");
    sweep->add_option("--out", sweep_out, "output directory, overriding the grid");

    auto* report = app.add_subcommand("report", "CSV reports over finished runs");
    ReportOptions ropt;
    std::string report_kind, report_out;
    report->add_option("--kind", report_kind, "accuracy, jaccard, hamming, stability, structuredness, ensemble, "
                                              "agreement, trajectories or quartile")
        ->required();
    report->add_option("--runs", ropt.run_globs, "run directory globs")->required();
    report->add_option("--reference", ropt.reference, "reference method for jaccard/hamming");
    report->add_option("--iteration", ropt.iteration, "iteration for ensemble/agreement (default: latest common)");
    report->add_option("--methods", ropt.methods, "ensemble/agreement member methods (default: all)")->delimiter(',');
    report->add_option("--layer", ropt.layer, "layer for trajectories");
    report->add_option("--data", ropt.data_dir, "dataset root for reports that re-evaluate networks");
    report->add_option("--out", report_out, "output file (default stdout)");

    auto* inspect = app.add_subcommand("inspect-mask", "dump one layer's mask and weights as a CSV grid");
    std::string inspect_run, inspect_layer;
    std::size_t inspect_iter = 1;
    inspect->add_option("--run", inspect_run, "run directory")->required();
    inspect->add_option("--iteration", inspect_iter, "iteration")->required();
    inspect->add_option("--layer", inspect_layer, "layer name, e.g. conv2")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const ExperimentConfig c = run_flags.build();
            int status = 0;
            for (std::uint64_t seed : c.seeds) {
                const RunRecord r = run_experiment(c, seed, nullptr, log_line);
                std::cout << r.dir.string() << "\n";
                status |= r.complete() ? 0 : 1;
            }
            return status;
        }
        if (*sweep) {
            auto cells = expand_grid(read_text(grid_path));
            if (sweep_out) {
                for (auto& cell : cells) {
                    cell.config.output_dir = *sweep_out;
                }
            }
            log_line("sweep: " + std::to_string(cells.size()) + " cells, isa " +
                     kernels::isa_name(kernels::active_isa()));
            const SweepResult r = run_sweep(cells, jobs, log_line);
            for (const auto& rec : r.records) {
                std::cout << rec.dir.string() << "\n";
            }
            for (const auto& f : r.failures) {
                std::cerr << "failed " << f.run_id << ": " << f.error << "\n";
            }
            return r.failures.empty() ? 0 : 1;
        }
        if (*report) {
            const auto kind = parse_report_kind(report_kind);
            if (!kind) {
                throw ConfigError("unknown report kind '" + report_kind + "'");
            }
            emit(make_report(*kind, ropt), report_out);
            return 0;
        }
        if (*inspect) {
            std::cout << inspect_mask_csv(inspect_run, inspect_iter, inspect_layer);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
