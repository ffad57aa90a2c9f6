#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mia/attacks.hpp"
#include "mia/corpus.hpp"
#include "mia/encoders.hpp"

namespace mia {

enum class AggregationKind { top_k_mean, mean };

struct AggregationPolicy {
  AggregationKind kind = AggregationKind::top_k_mean;
  std::size_t k = 50;
  std::size_t window_cap = 2000;  // w

  void validate() const;
  bool operator==(const AggregationPolicy&) const = default;
};

double aggregate(std::span<const double> scores, const AggregationPolicy& policy);

/// Non-training-dataset subjects, min(round(r * |members|), available) of
/// them, sampled uniformly from the seeded rng and returned sorted.
std::vector<SubjectId> build_nonmember_pool(std::span<const SubjectId> all_subjects, const std::string& train_dataset,
                                            std::span<const SubjectId> members, double ratio, std::uint64_t seed);

struct LabeledSubject {
  SubjectId subject;
  bool member = false;
  auto operator<=>(const LabeledSubject&) const = default;
};

struct SplitFractions {
  double attacker_train = 0.4;
  double calibration = 0.3;
  double test = 0.3;

  void validate() const;
  bool operator==(const SplitFractions&) const = default;
};

struct SubjectSplit {
  std::vector<LabeledSubject> attacker_train;
  std::vector<LabeledSubject> calibration;
  std::vector<LabeledSubject> test;
};

/// Stratified by label: each label is shuffled, then cut by the fractions with
/// largest-remainder rounding. Every split must get both labels.
SubjectSplit split_subjects(std::span<const SubjectId> members, std::span<const SubjectId> nonmembers,
                            const SplitFractions& fractions, std::uint64_t seed);

struct CalibrationResult {
  double threshold = 0.0;
  double alpha = 0.0;
  double achieved_fpr = 0.0;
};

/// Smallest candidate (distinct scores plus a sentinel above the maximum)
/// whose exceedance fraction on the calibration non-members is <= alpha.
CalibrationResult calibrate_threshold(std::span<const double> nonmember_scores, double alpha);

/// Mann-Whitney AUC, ties counted 1/2.
double auc(std::span<const double> member_scores, std::span<const double> nonmember_scores);

struct OperatingPoint {
  double tpr = 0.0;
  double fpr = 0.0;
  double adv = 0.0;
};

OperatingPoint evaluate_at_threshold(std::span<const double> member_scores, std::span<const double> nonmember_scores,
                                     double threshold);

enum class Attack { score, learned, knn };
std::string to_string(Attack attack);
Attack parse_attack(const std::string& name);

struct ReportCell {
  std::string dataset;
  std::string family;
  std::string attack;
  double auc = 0.0;
  double tpr_at_alpha = 0.0;
  double adv = 0.0;
  double fpr = 0.0;
  double threshold = 0.0;
  double cal_fpr = 0.0;
  bool operator==(const ReportCell&) const = default;
};

struct DeltaCell {
  std::string dataset;
  std::string family;
  double value = 0.0;
  bool operator==(const DeltaCell&) const = default;
};

struct AuditReport {
  std::string config_fingerprint;
  std::vector<ReportCell> cells;
  std::vector<DeltaCell> delta_auc;
  bool operator==(const AuditReport&) const = default;
};

/// learned - score AUC for every (dataset, family) holding both cells.
std::vector<DeltaCell> compute_delta_auc(std::span<const ReportCell> cells);

std::string report_json(const AuditReport& report);
AuditReport parse_report_json(const std::string& text);  // FormatError when malformed
std::string cells_csv(const AuditReport& report);

struct AuditSettings {
  AggregationPolicy aggregation;
  double alpha = 0.01;
  double nonmember_ratio = 1.0;
  SplitFractions fractions;
  std::size_t rec_masks = 8;        // K fixed masks for score_rec
  std::size_t con_draws = 8;        // K view pairs for score_con
  std::optional<AugmentConfig> con_augment;  // score_con views; unset reuses the model's training config
  std::size_t knn_k = 5;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
};

struct AuditTarget {
  const EncoderModel* model = nullptr;
  std::set<SubjectId> members;  // from train_ids.json
  std::vector<Attack> attacks;
};

struct ScoreDump {
  std::string dataset;
  std::string family;
  std::vector<WindowScore> scores;
};

struct AuditRun {
  AuditReport report;
  std::vector<ScoreDump> dumps;  // one per (model, window observable)
  std::vector<SubjectSplit> splits;
};

AuditRun run_audit(const AuditSettings& settings, const WindowSource& corpus, std::span<const AuditTarget> targets);

}  // namespace mia
