// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sfelab/detector.hpp"
#include "sfelab/sfe.hpp"

namespace sfelab {

/// Re-identification defense: reconstructed salient features through the
/// classifier head.
std::vector<int> defend(Classifier& clf, SfeModel& sfe, const Tensor& images);

/// Fraction of success-flagged adversarial examples whose defended label
/// equals the true label; empty when no pair succeeded.
std::optional<double> defense_success_rate(Classifier& clf, SfeModel& sfe, const PairDataset& pairs);

/// Fraction of correct verdicts over a balanced mixed benign/adversarial
/// set built from the pairs (benign rows expect verdict 0, adversarial
/// rows verdict 1).
double detection_rate(AdvDetector& det, SfeModel& sfe, Classifier& clf, const PairDataset& pairs);

/// Within-class compactness. Raw distance per class is the mean Euclidean
/// distance to the class center; scores are 1 - minmax-normalized
/// distance, averaged over classes. Empty classes are skipped.
struct FsaResult {
    std::vector<double> class_distance;  // raw D_k, -1 for empty classes
    std::vector<double> fsa_k;           // 1 - normalized D_k
    double fsa = 0.0;
    double mean_distance = 0.0;  // raw, for trend comparisons
};
FsaResult fsa(const Tensor& features, const std::vector<int>& labels, int num_classes);

/// Among-class separation: mean Euclidean distance between class centers
/// over all unordered pairs. Needs at least two nonempty classes.
double fsd(const Tensor& features, const std::vector<int>& labels, int num_classes);

/// Feature-space trends across the defense pipeline on one pair set:
/// benign features, adversarial features, defended (reconstructed salient)
/// features of adversarial, defended features of benign. Within-class
/// distances are reported raw and normalized over the four stages jointly.
struct TrendStage {
    std::string name;
    double within_raw;
    double within_normalized;
    double fsa;  // 1 - within_normalized
    double fsd;
};
std::vector<TrendStage> trend_analysis(Classifier& clf, SfeModel& sfe, const PairDataset& pairs,
                                       int num_classes = 10);

/// One experiment row: §-style metrics for a (model, attack, defense) run.
struct EvalReport {
    std::string experiment_id;
    std::string model;
    std::string attack;
    double eps = 0.0;
    double acc = 0.0;  // benign accuracy of the classifier
    double asr = 0.0;
    double dr = 0.0;
    double dsr = 0.0;
    double rho_l2 = 0.0;
    double rho_px = 0.0;
    double fsa = 0.0;  // on adversarial features, true-label grouping
    double fsd = 0.0;
    double train_s = 0.0;
    double test_s = 0.0;
    std::uint64_t seed = 0;
};

constexpr const char* kReportHeader =
    "experiment_id,model,attack,eps,acc,asr,dr,dsr,rho_l2,rho_px,fsa,fsd,train_s,test_s,seed";

enum class ReportFormat { csv, text };

std::string format_report_row(const EvalReport& r);
void export_report(const std::vector<EvalReport>& reports, const std::string& path,
                   ReportFormat format = ReportFormat::csv);
std::vector<EvalReport> parse_report_csv(const std::string& path);

/// Detector/defense transfer: SFE + AdvD trained on `train_attack` pairs,
/// evaluated against each test pair set.
struct TransferCell {
    std::string train_attack;
    std::string test_attack;
    double dr = 0.0;
    double dsr = 0.0;
    bool dsr_defined = true;
};
std::vector<TransferCell> transfer_matrix(Classifier& clf, SfeModel& sfe, AdvDetector& det,
                                          const std::string& train_attack,
                                          const std::vector<const PairDataset*>& test_sets);

}  // namespace sfelab
