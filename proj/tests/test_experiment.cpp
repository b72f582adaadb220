#include "sparselab/data_io.hpp"
#include "sparselab/error.hpp"
#include "sparselab/experiment.hpp"
#include "sparselab/report.hpp"

#include <doctest.h>

#include <filesystem>

using namespace sparselab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("sparselab_test_" + name);
    fs::remove_all(p);
    return p;
}

ExperimentConfig small_config(const fs::path& out) {
    ExperimentConfig c;
    c.dataset = "synthetic";
    c.epochs_per_iteration = 2;
    c.iterations = 3;
    c.lr = 0.05;
    c.output_dir = out.string();
    return c;
}

} // namespace

TEST_CASE("config json round trip and validation") {
    ExperimentConfig c;
    c.prune.method = PruneMethod::hybrid;
    c.handling = Handling::sign_sigma;
    c.seeds = {0, 1, 2};
    const ExperimentConfig r = ExperimentConfig::from_json(c.to_json());
    CHECK(r.to_json() == c.to_json());
    CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"epochs": 3})"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"fraction": 1.5})").validate(), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"method": "l7"})"), ConfigError);
    CHECK(config_hash(c, 0) != config_hash(c, 1));
    ExperimentConfig moved = c;
    moved.output_dir = "elsewhere";
    CHECK(config_hash(c, 0) == config_hash(moved, 0));
    CHECK(run_id(c, 1).rfind("hybrid-sign_sigma-s1-", 0) == 0);
}

TEST_CASE("grid expansion") {
    const auto cells = expand_grid(R"({
        "base": {"dataset": "synthetic", "seeds": [0, 1]},
        "axes": {"method": ["l1_unstructured", "hybrid"], "handling": ["rewind", "finetune"]},
        "cells": [{"method": "fc_only", "seeds": [4]}]})");
    CHECK(cells.size() == 4 * 2 + 1);
    CHECK(cells.back().seed == 4);
    CHECK(cells.back().config.prune.method == PruneMethod::fc_only);
    const auto only = expand_grid(R"({"base": {"seeds": [0, 1, 2, 3, 4]}, "axes": {"method": [
        "l1_unstructured", "random_unstructured", "l1_structured", "l2_structured", "linf_structured",
        "random_structured", "hybrid", "fc_only"]}})");
    CHECK(only.size() == 40);
    CHECK_THROWS_AS(expand_grid(R"({"bases": {}})"), ConfigError);
}

TEST_CASE("runs are deterministic, idempotent and resumable") {
    const fs::path a = scratch("run_a"), b = scratch("run_b");
    const RunRecord ra = run_experiment(small_config(a), 0);
    const RunRecord rb = run_experiment(small_config(b), 0);
    REQUIRE(ra.complete());
    CHECK(ra.run_id == rb.run_id);
    for (std::size_t k = 1; k <= 3; ++k) {
        CHECK(found_masks(ra, k) == found_masks(rb, k));
        CHECK(bitwise_equal(trained_checkpoint(ra, k).net, trained_checkpoint(rb, k).net));
        CHECK(read_text(iteration_dir(ra.dir, k) / "metrics.csv") == read_text(iteration_dir(rb.dir, k) / "metrics.csv"));
    }

    // a finished run is left untouched
    const auto stamp = fs::last_write_time(iteration_dir(ra.dir, 3) / "metrics.csv");
    run_experiment(small_config(a), 0);
    CHECK(fs::last_write_time(iteration_dir(ra.dir, 3) / "metrics.csv") == stamp);

    // drop the last two iterations and resume: bitwise the same as uninterrupted
    fs::remove_all(iteration_dir(rb.dir, 3));
    fs::remove_all(iteration_dir(rb.dir, 2));
    const RunRecord resumed = run_experiment(small_config(b), 0);
    REQUIRE(resumed.complete());
    for (std::size_t k = 2; k <= 3; ++k) {
        CHECK(found_masks(ra, k) == found_masks(resumed, k));
        CHECK(bitwise_equal(trained_checkpoint(ra, k).net, trained_checkpoint(resumed, k).net));
    }

    const Dataset test = load_dataset("synthetic", "", false);
    for (std::size_t k = 1; k <= 3; ++k) {
        CHECK(regenerate_metrics_csv(ra.dir, k, test) == read_text(iteration_dir(ra.dir, k) / "metrics.csv"));
    }
}

TEST_CASE("masks nest across iterations and rewind resets to init") {
    const fs::path out = scratch("run_nest");
    ExperimentConfig c = small_config(out);
    c.prune.method = PruneMethod::random_unstructured;
    const RunRecord r = run_experiment(c, 2);
    for (std::size_t k = 2; k <= 3; ++k) {
        CHECK(nests_within(found_masks(r, k), found_masks(r, k - 1)));
        CHECK(trained_checkpoint(r, k).masks == found_masks(r, k - 1));
    }
    for (const auto& it : r.iterations) {
        CHECK(it.test_accuracy >= 0.0);
        CHECK(it.test_accuracy <= 100.0);
        CHECK(it.sparsity.network.effective_fraction() >= it.sparsity.network.explicit_fraction());
    }
}

TEST_CASE("late resetting captures the init checkpoint mid-iteration") {
    const fs::path out = scratch("run_late");
    ExperimentConfig c = small_config(out);
    c.iterations = 2;
    c.checkpoint_capture_epoch = 1;
    const RunRecord r = run_experiment(c, 0);
    const Checkpoint init = load_checkpoint(r.dir / "init.ckpt");
    RngStream rng(0, StreamId::init);
    CHECK_FALSE(bitwise_equal(init.net, init_network(lenet(), rng)));
}

TEST_CASE("sweep runs every cell and reports failures per cell") {
    const fs::path out = scratch("sweep");
    auto cells = expand_grid(R"({"base": {"dataset": "synthetic", "epochs_per_iteration": 1, "iterations": 2},
                                 "axes": {"method": ["l1_unstructured", "hybrid"]}})");
    for (auto& c : cells) {
        c.config.output_dir = out.string();
    }
    cells.push_back(cells.front());
    cells.back().config.dataset = "nonexistent";
    const SweepResult r = run_sweep(cells, 2);
    CHECK(r.records.size() == 2);
    REQUIRE(r.failures.size() == 1);

    ReportOptions opt;
    opt.run_globs = {(out / "*").string()};
    const std::string acc = make_report(ReportKind::accuracy, opt);
    CHECK(acc.find("hybrid") != std::string::npos);
    opt.reference = "l1_unstructured";
    const std::string jac = make_report(ReportKind::jaccard, opt);
    CHECK(jac.find("hybrid,rewind,0,2,fc1,") != std::string::npos);
    CHECK(jac.find("hybrid,rewind,0,2,all,") != std::string::npos);
    opt.reference = "l2_structured";
    CHECK_THROWS_AS(make_report(ReportKind::jaccard, opt), SelectionError);
    CHECK(make_report(ReportKind::ensemble, opt).find("mean,2") != std::string::npos);
    opt.methods = {"hybrid/rewind", "l1_unstructured/rewind"};
    CHECK(make_report(ReportKind::ensemble, opt).find("0,2,hybrid+l1_unstructured,") != std::string::npos);
    opt.methods = {"hybrid/finetune"};
    CHECK_THROWS_AS(make_report(ReportKind::ensemble, opt), SelectionError);
    opt.methods.clear();
    CHECK(make_report(ReportKind::stability, opt).find(",mean,") != std::string::npos);
    CHECK_FALSE(make_report(ReportKind::agreement, opt).empty());
    CHECK_FALSE(make_report(ReportKind::structuredness, opt).empty());
    CHECK_FALSE(make_report(ReportKind::quartile, opt).empty());
    opt.layer = "fc3";
    CHECK_FALSE(make_report(ReportKind::trajectories, opt).empty());
    CHECK_FALSE(inspect_mask_csv(r.records[0].dir, 2, "conv2").empty());
}

TEST_CASE("shipped grids expand to the expected cells") {
    const fs::path configs = fs::path(SPARSELAB_SOURCE_DIR) / "configs";
    const auto full = expand_grid(read_text(configs / "full_grid.json"));
    CHECK(full.size() == 8 * 4 * 5);
    const auto acceptance = expand_grid(read_text(configs / "acceptance_grid.json"));
    REQUIRE(acceptance.size() == 14);
    for (const auto& cell : acceptance) {
        CHECK(cell.config.iterations == 11);
        CHECK(cell.config.epochs_per_iteration == 30);
        CHECK(cell.seed < 2);
    }
}
