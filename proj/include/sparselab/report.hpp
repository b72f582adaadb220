#pragma once

#include "sparselab/data_io.hpp"
#include "sparselab/dataset.hpp"
#include "sparselab/experiment.hpp"
#include "sparselab/mask.hpp"
#include "sparselab/nn.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sparselab {

enum class ReportKind { accuracy, jaccard, hamming, stability, structuredness, ensemble, agreement, trajectories, quartile };

std::string_view report_kind_name(ReportKind k);
std::optional<ReportKind> parse_report_kind(std::string_view name);

struct ReportOptions {
    std::vector<std::string> run_globs;
    // "method" or "method/handling"; others are paired with it by seed (and
    // by handling when the reference names none).
    std::string reference = "l2_structured";
    std::size_t iteration = 0;  // 0 = latest iteration every selected run has
    std::vector<std::string> methods;  // ensemble/agreement members, "method" or "method/handling"; empty = all
    std::string layer;
    std::string data_dir;  // empty = each run's own data root
};

// Run directories matching the globs, loaded and sorted by run id.
std::vector<RunRecord> select_runs(const std::vector<std::string>& globs);

// Persisted artifacts of one iteration.
Checkpoint trained_checkpoint(const RunRecord& run, std::size_t iteration);
MaskSet found_masks(const RunRecord& run, std::size_t iteration);
// Softmax of the iteration's trained network over `test`, (N, K).
Tensor run_probabilities(const RunRecord& run, std::size_t iteration, const Dataset& test);

std::string make_report(ReportKind kind, const ReportOptions& options);

// One row per weight of a layer's trained tensor: output unit, input slice,
// offset inside the slice, mask bit, value.
std::string inspect_mask_csv(const std::filesystem::path& run_dir, std::size_t iteration, const std::string& layer);

} // namespace sparselab
