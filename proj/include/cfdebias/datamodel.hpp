#pragma once

// Record types shared by every stage of the pipeline.

#include <array>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfdebias/autodiff.hpp"
#include "json.hpp"

namespace cfd {

using Json = nlohmann::json;

/// Gender as a single scalar model input. 0 = male (minority group),
/// 1 = female (majority group). Out-of-range values are representable so
/// that ingestion can report them instead of failing on construction.
struct GenderCode {
  int value = 0;

  static constexpr GenderCode male() { return {0}; }
  static constexpr GenderCode female() { return {1}; }

  constexpr bool valid() const { return value == 0 || value == 1; }
  constexpr GenderCode flipped() const { return {1 - value}; }
  constexpr double as_input() const { return static_cast<double>(value); }
  auto operator<=>(const GenderCode&) const = default;
};

/// 1 = Depressed, the positive class for every metric.
struct DepressionLabel {
  int value = 0;

  static constexpr DepressionLabel non_depressed() { return {0}; }
  static constexpr DepressionLabel depressed() { return {1}; }

  constexpr bool valid() const { return value == 0 || value == 1; }
  auto operator<=>(const DepressionLabel&) const = default;
};

/// Time-ordered segment-level features, one row per segment.
struct FeatureSequence {
  Matrix data;

  Eigen::Index length() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
  // Dimension after pooling the rows to one vector.
  Eigen::Index alf_dim() const { return data.cols(); }
  bool operator==(const FeatureSequence& o) const {
    return data.rows() == o.data.rows() && data.cols() == o.data.cols() && data == o.data;
  }
};

/// Provenance of a virtual sample produced by feature interpolation.
struct Augmentation {
  std::string parent_a;
  std::string parent_b;
  double lambda = 1.0;
  bool operator==(const Augmentation&) const = default;
};

struct SessionRecord {
  std::string session_id;
  GenderCode gender;
  DepressionLabel label;
  std::optional<std::string> audio_path;
  std::optional<std::string> transcript_path;
  std::optional<FeatureSequence> features;
  // Present only on augmented training samples; those never enter evaluation.
  std::optional<Augmentation> augmentation;

  bool augmented() const { return augmentation.has_value(); }
  bool operator==(const SessionRecord&) const = default;
};

/// Pre-activation scores, index 0 = Non-depressed, index 1 = Depressed.
struct LogitVector {
  std::array<double, 2> scores{0.0, 0.0};

  double operator[](std::size_t i) const { return scores[i]; }
  double& operator[](std::size_t i) { return scores[i]; }
  bool finite() const;
  // Argmax with ties resolved toward index 0.
  int argmax() const { return scores[1] > scores[0] ? 1 : 0; }
  static LogitVector from_row(const Matrix& m, Eigen::Index row = 0);
  RowVector as_row() const;
  bool operator==(const LogitVector&) const = default;
};

struct PredictionRecord {
  std::string session_id;
  GenderCode gender;
  DepressionLabel true_label;
  DepressionLabel predicted_label;
  std::optional<LogitVector> tie_scores;

  bool operator==(const PredictionRecord&) const = default;
};

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationResult validate_session(const SessionRecord& record);

void to_json(Json& j, const GenderCode& g);
void from_json(const Json& j, GenderCode& g);
void to_json(Json& j, const DepressionLabel& d);
void from_json(const Json& j, DepressionLabel& d);
void to_json(Json& j, const FeatureSequence& f);
void from_json(const Json& j, FeatureSequence& f);
void to_json(Json& j, const Augmentation& a);
void from_json(const Json& j, Augmentation& a);
void to_json(Json& j, const SessionRecord& r);
void from_json(const Json& j, SessionRecord& r);
void to_json(Json& j, const LogitVector& v);
void from_json(const Json& j, LogitVector& v);
void to_json(Json& j, const PredictionRecord& p);
void from_json(const Json& j, PredictionRecord& p);

/// Line-delimited JSON: one compact object per line.
template <typename T>
std::string to_jsonl(const std::vector<T>& items) {
  std::string out;
  for (const T& item : items) {
    out += Json(item).dump();
    out += '\n';
  }
  return out;
}

template <typename T>
std::vector<T> from_jsonl(const std::string& text) {
  std::vector<T> items;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    if (end > start) items.push_back(Json::parse(text.substr(start, end - start)).get<T>());
    start = end + 1;
  }
  return items;
}

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cfd
