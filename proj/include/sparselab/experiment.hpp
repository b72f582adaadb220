#pragma once

#include "sparselab/analytics.hpp"
#include "sparselab/dataset.hpp"
#include "sparselab/pruning.hpp"
#include "sparselab/weight_handling.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace sparselab {

// Bumped whenever a change alters training results, so cached runs made by
// an older engine are not reused.
inline constexpr std::string_view kEngineVersion = "sparselab-1";

struct ExperimentConfig {
    std::string architecture = "lenet";  // "lenet" or a JSON architecture path
    std::string dataset = "mnist";
    std::vector<std::uint64_t> seeds{0};
    std::size_t epochs_per_iteration = 30;
    double lr = 0.01;
    std::size_t batch_size = 32;
    std::size_t iterations = 20;
    PruneSpec prune;
    Handling handling = Handling::rewind;
    std::size_t checkpoint_capture_epoch = 0;  // 0 = capture at initialization
    std::string output_dir = "runs";
    std::string data_dir;  // empty = default_data_root()

    void validate() const;
    std::filesystem::path data_root() const;

    // Canonical JSON with every field.
    std::string to_json() const;
    // Overrides fields present in a JSON object; unknown keys are ConfigErrors.
    void merge_json(std::string_view text);
    static ExperimentConfig from_json(std::string_view text);
    static ExperimentConfig load(const std::filesystem::path& path);
};

// FNV-1a over the canonical JSON of the single-seed configuration and the
// engine version; output and data locations do not take part.
std::string config_hash(const ExperimentConfig& config, std::uint64_t seed);
// <method>-<handling>-s<seed>-<first 12 hash digits>
std::string run_id(const ExperimentConfig& config, std::uint64_t seed);

struct IterationRecord {
    std::size_t iteration = 0;
    double test_accuracy = 0.0;  // percent, end of the final epoch
    EffectiveSparsity sparsity;  // of the mask in effect while training
    std::vector<double> epoch_accuracy;
    std::vector<double> epoch_loss;
};

struct RunRecord {
    std::string run_id;
    std::string config_hash;
    std::uint64_t seed = 0;
    ExperimentConfig config;  // seeds = {seed}
    std::filesystem::path dir;
    std::vector<IterationRecord> iterations;

    bool complete() const { return iterations.size() == config.iterations; }
};

struct DataPair {
    const Dataset* train = nullptr;
    const Dataset* test = nullptr;
};

using LogFn = std::function<void(const std::string&)>;

// Iterative pruning for one seed:
//   init (captured at checkpoint_capture_epoch of iteration 1)
//   for i in 1..iterations: train, record accuracy, prune, apply handling, persist.
// Layout under output_dir/<run_id>: config.json, init.ckpt/, record.json and
// iter_<i>/{final.ckpt/, masks/, metrics.csv, epochs.csv}. final.ckpt holds
// the trained weights with the mask they were trained under; masks/ holds
// the mask found by pruning them. A complete run is returned as is; a
// partial one resumes after its last persisted iteration.
RunRecord run_experiment(const ExperimentConfig& config, std::uint64_t seed, const DataPair* data = nullptr,
                         const LogFn& log = {});

// Reads a run directory written by run_experiment.
RunRecord load_run(const std::filesystem::path& dir);
bool is_run_dir(const std::filesystem::path& dir);
std::filesystem::path iteration_dir(const std::filesystem::path& run_dir, std::size_t iteration);

// metrics.csv of one iteration: iteration,layer,metric,value rows.
std::string metrics_csv(const IterationRecord& rec);
// Rebuilds metrics.csv from the persisted checkpoint by re-evaluating it on
// the test set.
std::string regenerate_metrics_csv(const std::filesystem::path& run_dir, std::size_t iteration, const Dataset& test);

struct SweepCell {
    ExperimentConfig config;
    std::uint64_t seed = 0;
};

// Grid document: {"base": {...}, "axes": {"field": [values...]}, "cells": [{...}]}.
// Cells are the cartesian product of the axes (or the base alone) followed
// by the explicit cells, each merged over base and expanded over its seeds.
std::vector<SweepCell> expand_grid(std::string_view grid_json);

struct SweepFailure {
    std::string run_id;
    std::string error;
};

struct SweepResult {
    std::vector<RunRecord> records;  // completed cells, in cell order
    std::vector<SweepFailure> failures;
};

// Runs cells on up to `jobs` threads; each cell is single-threaded and a
// failing cell does not stop the others.
SweepResult run_sweep(const std::vector<SweepCell>& cells, std::size_t jobs, const LogFn& log = {});

} // namespace sparselab
