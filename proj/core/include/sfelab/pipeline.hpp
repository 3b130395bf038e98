// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sfelab/evaluation.hpp"

namespace sfelab {

/// Resolved experiment configuration. Every field has a default; unknown
/// keys are rejected at parse time; the resolved form is echoed into the
/// run directory so every report row can be traced back to it.
struct ExperimentConfig {
    // [data]
    std::string data_dir = "data/mnist";
    int train_subset = 10000;
    int test_subset = 2000;
    // [model]
    std::string model = "cnn1";
    std::string tap = "feature";  // feature | logits
    int epochs = 6;
    int batch = 64;
    // [attacks]
    std::vector<std::string> methods = {"fgsm", "bim", "mifgsm", "pgd", "deepfool", "auna", "cra", "pwa"};
    int max_images = 2000;
    std::map<std::string, int> max_images_per_attack = {{"pgd", 1000}, {"deepfool", 1000}, {"pwa", 256},
                                                        {"cra", 1000}, {"auna", 1000}};
    // [sfe]
    int kd = 5;
    int mb = 64;
    int iterations = 2000;
    std::string disc_output = "tanh";  // tanh | sigmoid
    // [advd]
    int advd_epochs = 40;
    int advd_batch = 128;
    double threshold = 0.5;
    // [eval]
    double split_ratio = 0.7;
    // [report]
    std::string timing_mode = "measured";  // measured | zero
    // [run]
    std::uint64_t seed = 7;
    std::string out_dir = "out";
    int threads = 1;

    /// Canonical text form (also the config echo written next to results).
    std::string serialize() const;
    /// Stable 64-bit hash of the serialized form.
    std::string hash() const;
    void validate() const;
};

/// Parses the section-based key=value format. Empty path yields the
/// defaults. Unknown keys or sections raise, naming the offender.
ExperimentConfig parse_config(const std::string& path);
/// Applies one "section.key=value" override (the CLI flag layer).
void apply_config_override(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value);

/// FNV-1a 64 over a byte range / file, for cache keys.
std::uint64_t fnv1a64(const void* data, size_t len, std::uint64_t basis = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64_file(const std::string& path);

struct StageTiming {
    std::string stage;
    double seconds;
};

struct PipelineResult {
    std::vector<EvalReport> reports;
    std::vector<StageTiming> timings;
    std::string report_path;
    std::string summary_path;
    double benign_accuracy = 0.0;
    std::map<std::string, double> defended_benign_accuracy;  // per attack
    std::map<std::string, std::vector<TrendStage>> trends;   // per attack
};

/// Full staged pipeline: train-target -> attacks -> train-sfe -> train-advd
/// -> evaluate, with per-stage artifact caching keyed by config and input
/// hashes. Artifacts whose key file already exists are reused; deleting an
/// artifact regenerates exactly it.
PipelineResult run_pipeline(const ExperimentConfig& cfg);

/// Per-stage derived seeds, so stages are independently reproducible.
std::uint64_t stage_seed(const ExperimentConfig& cfg, const std::string& stage);

}  // namespace sfelab
