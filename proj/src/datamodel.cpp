#include "cfdebias/datamodel.hpp"

#include <cmath>
#include <sstream>

namespace cfd {

bool LogitVector::finite() const {
  return std::isfinite(scores[0]) && std::isfinite(scores[1]);
}

LogitVector LogitVector::from_row(const Matrix& m, Eigen::Index row) {
  if (m.cols() != 2) throw std::invalid_argument("LogitVector needs exactly 2 columns");
  return LogitVector{{m(row, 0), m(row, 1)}};
}

RowVector LogitVector::as_row() const {
  RowVector r(2);
  r << scores[0], scores[1];
  return r;
}

ValidationResult validate_session(const SessionRecord& record) {
  ValidationResult result;
  if (record.session_id.empty()) result.violations.emplace_back("session_id is empty");
  if (!record.gender.valid()) result.violations.emplace_back("gender not in {0,1}");
  if (!record.label.valid()) result.violations.emplace_back("label not in {0,1}");
  if (!record.audio_path && !record.features) {
    result.violations.emplace_back("neither audio_path nor features is present");
  }
  if (record.features) {
    const Matrix& f = record.features->data;
    if (f.rows() < 1 || f.cols() < 1) {
      result.violations.emplace_back("features must have at least one row and one column");
    } else if (!f.allFinite()) {
      result.violations.emplace_back("features contain non-finite values");
    }
  }
  if (record.augmentation) {
    const Augmentation& a = *record.augmentation;
    if (a.parent_a == a.parent_b) result.violations.emplace_back("augmentation parents must differ");
    if (!(a.lambda >= 0.0 && a.lambda <= 1.0)) {
      result.violations.emplace_back("augmentation lambda not in [0,1]");
    }
  }
  return result;
}

void to_json(Json& j, const GenderCode& g) { j = g.value; }
void from_json(const Json& j, GenderCode& g) { g.value = j.get<int>(); }
void to_json(Json& j, const DepressionLabel& d) { j = d.value; }
void from_json(const Json& j, DepressionLabel& d) { d.value = j.get<int>(); }

void to_json(Json& j, const FeatureSequence& f) {
  j = Json::array();
  for (Eigen::Index r = 0; r < f.data.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < f.data.cols(); ++c) row.push_back(f.data(r, c));
    j.push_back(std::move(row));
  }
}

void from_json(const Json& j, FeatureSequence& f) {
  if (!j.is_array()) throw std::invalid_argument("features must be a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
  f.data.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw std::invalid_argument("features rows have differing lengths");
    }
    for (Eigen::Index c = 0; c < cols; ++c) f.data(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
}

void to_json(Json& j, const Augmentation& a) {
  j = Json{{"parents", {a.parent_a, a.parent_b}}, {"lambda", a.lambda}};
}

void from_json(const Json& j, Augmentation& a) {
  const Json& p = j.at("parents");
  a.parent_a = p.at(0).get<std::string>();
  a.parent_b = p.at(1).get<std::string>();
  a.lambda = j.at("lambda").get<double>();
}

void to_json(Json& j, const SessionRecord& r) {
  j = Json{{"session_id", r.session_id}, {"gender", r.gender}, {"label", r.label}};
  if (r.audio_path) j["audio_path"] = *r.audio_path;
  if (r.transcript_path) j["transcript_path"] = *r.transcript_path;
  if (r.features) j["features"] = *r.features;
  if (r.augmentation) {
    j["augmented"] = true;
    j["augmentation"] = *r.augmentation;
  }
}

void from_json(const Json& j, SessionRecord& r) {
  r = SessionRecord{};
  r.session_id = j.at("session_id").get<std::string>();
  r.gender = j.at("gender").get<GenderCode>();
  r.label = j.at("label").get<DepressionLabel>();
  if (auto it = j.find("audio_path"); it != j.end() && !it->is_null()) {
    r.audio_path = it->get<std::string>();
  }
  if (auto it = j.find("transcript_path"); it != j.end() && !it->is_null()) {
    r.transcript_path = it->get<std::string>();
  }
  if (auto it = j.find("features"); it != j.end() && !it->is_null()) {
    r.features = it->get<FeatureSequence>();
  }
  if (auto it = j.find("augmentation"); it != j.end() && !it->is_null()) {
    r.augmentation = it->get<Augmentation>();
  }
}

void to_json(Json& j, const LogitVector& v) { j = Json::array({v.scores[0], v.scores[1]}); }

void from_json(const Json& j, LogitVector& v) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("LogitVector must have length 2");
  v.scores = {j[0].get<double>(), j[1].get<double>()};
}

void to_json(Json& j, const PredictionRecord& p) {
  j = Json{{"session_id", p.session_id},
           {"gender", p.gender},
           {"true_label", p.true_label},
           {"predicted_label", p.predicted_label}};
  if (p.tie_scores) j["tie_scores"] = *p.tie_scores;
}

void from_json(const Json& j, PredictionRecord& p) {
  p = PredictionRecord{};
  p.session_id = j.at("session_id").get<std::string>();
  p.gender = j.at("gender").get<GenderCode>();
  p.true_label = j.at("true_label").get<DepressionLabel>();
  p.predicted_label = j.at("predicted_label").get<DepressionLabel>();
  if (auto it = j.find("tie_scores"); it != j.end() && !it->is_null()) {
    p.tie_scores = it->get<LogitVector>();
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace cfd
