#pragma once

// Classification and group-fairness metrics over prediction logs.
// Depressed (1) is the positive class; gender 1 (female) is the majority
// group and the numerator of disparate impact.

#include <optional>
#include <span>
#include <string>

#include "cfdebias/datamodel.hpp"

namespace cfd {

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;

  long total() const { return tp + fp + tn + fn; }
  long predicted_positive() const { return tp + fp; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct GroupedConfusion {
  ConfusionCounts overall;
  ConfusionCounts male;
  ConfusionCounts female;
};

/// Throws std::invalid_argument on an empty record list.
GroupedConfusion confusion(std::span<const PredictionRecord> records);

/// kMacro averages per-class scores over both classes; kPositiveClass reports
/// the Depressed class only.
enum class Averaging { kMacro, kPositiveClass };

std::string to_string(Averaging a);
Averaging averaging_from_string(const std::string& name);

struct CoreMetrics {
  double f1 = 0.0;
  double accuracy = 0.0;
  double recall = 0.0;
};

/// Zero-denominator terms count as 0.
CoreMetrics core_metrics(const ConfusionCounts& counts, Averaging averaging = Averaging::kMacro);

double accuracy(const ConfusionCounts& counts);

/// |Acc(female) - Acc(male)|. Throws if either group is empty.
double equal_accuracy(std::span<const PredictionRecord> records);
/// Pr(pred=1 | female) / Pr(pred=1 | male); nullopt when no male is
/// predicted positive. Throws if either group is empty.
std::optional<double> disparate_impact(std::span<const PredictionRecord> records);

struct FairnessReport {
  double f1 = 0.0;
  double accuracy = 0.0;
  double recall = 0.0;
  double male_f1 = 0.0;
  double female_f1 = 0.0;
  double ea = 0.0;
  std::optional<double> di;
  Averaging averaging = Averaging::kMacro;
  long n = 0;

  bool operator==(const FairnessReport&) const = default;
};

FairnessReport fairness_report(std::span<const PredictionRecord> records, Averaging averaging = Averaging::kMacro);

void to_json(Json& j, const FairnessReport& r);
void from_json(const Json& j, FairnessReport& r);

/// Column headers in report order.
inline constexpr std::array<const char*, 7> kReportColumns{"F1",        "Accuracy", "Recall", "Male-F1",
                                                           "Female-F1", "EA",       "DI"};

/// Values formatted to three decimals; DI prints NA when undefined.
std::array<std::string, 7> report_cells(const FairnessReport& r);

}  // namespace cfd
