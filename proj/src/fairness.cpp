#include "cfdebias/fairness.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace cfd {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double f1_of(double precision, double recall) { return ratio(2.0 * precision * recall, precision + recall); }

void tally(ConfusionCounts& c, int truth, int pred) {
  if (truth == 1) {
    (pred == 1 ? c.tp : c.fn) += 1;
  } else {
    (pred == 1 ? c.fp : c.tn) += 1;
  }
}

}  // namespace

GroupedConfusion confusion(std::span<const PredictionRecord> records) {
  if (records.empty()) throw std::invalid_argument("confusion: no prediction records");
  GroupedConfusion out;
  for (const PredictionRecord& r : records) {
    if (!r.gender.valid() || !r.true_label.valid() || !r.predicted_label.valid()) {
      throw std::invalid_argument("confusion: record " + r.session_id + " has a code outside {0,1}");
    }
    tally(out.overall, r.true_label.value, r.predicted_label.value);
    tally(r.gender == GenderCode::male() ? out.male : out.female, r.true_label.value, r.predicted_label.value);
  }
  return out;
}

std::string to_string(Averaging a) { return a == Averaging::kMacro ? "macro" : "positive"; }

Averaging averaging_from_string(const std::string& name) {
  if (name == "macro") return Averaging::kMacro;
  if (name == "positive" || name == "positive-class") return Averaging::kPositiveClass;
  throw std::invalid_argument("unknown averaging '" + name + "' (expected macro or positive)");
}

double accuracy(const ConfusionCounts& c) {
  return ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
}

CoreMetrics core_metrics(const ConfusionCounts& c, Averaging averaging) {
  const auto tp = static_cast<double>(c.tp);
  const auto fp = static_cast<double>(c.fp);
  const auto tn = static_cast<double>(c.tn);
  const auto fn = static_cast<double>(c.fn);

  const double rec_pos = ratio(tp, tp + fn);
  const double f1_pos = f1_of(ratio(tp, tp + fp), rec_pos);
  CoreMetrics m;
  m.accuracy = accuracy(c);
  if (averaging == Averaging::kPositiveClass) {
    m.recall = rec_pos;
    m.f1 = f1_pos;
    return m;
  }
  // Negative class: "positive" is tn, its false positives are fn.
  const double rec_neg = ratio(tn, tn + fp);
  const double f1_neg = f1_of(ratio(tn, tn + fn), rec_neg);
  m.recall = 0.5 * (rec_pos + rec_neg);
  m.f1 = 0.5 * (f1_pos + f1_neg);
  return m;
}

double equal_accuracy(std::span<const PredictionRecord> records) {
  const GroupedConfusion g = confusion(records);
  if (g.male.total() == 0 || g.female.total() == 0) {
    throw std::invalid_argument("equal_accuracy: both gender groups must be present");
  }
  return std::abs(accuracy(g.female) - accuracy(g.male));
}

std::optional<double> disparate_impact(std::span<const PredictionRecord> records) {
  const GroupedConfusion g = confusion(records);
  if (g.male.total() == 0 || g.female.total() == 0) {
    throw std::invalid_argument("disparate_impact: both gender groups must be present");
  }
  if (g.male.predicted_positive() == 0) return std::nullopt;
  const double female_rate =
      static_cast<double>(g.female.predicted_positive()) / static_cast<double>(g.female.total());
  const double male_rate = static_cast<double>(g.male.predicted_positive()) / static_cast<double>(g.male.total());
  return female_rate / male_rate;
}

FairnessReport fairness_report(std::span<const PredictionRecord> records, Averaging averaging) {
  const GroupedConfusion g = confusion(records);
  FairnessReport r;
  const CoreMetrics all = core_metrics(g.overall, averaging);
  r.f1 = all.f1;
  r.accuracy = all.accuracy;
  r.recall = all.recall;
  r.male_f1 = core_metrics(g.male, averaging).f1;
  r.female_f1 = core_metrics(g.female, averaging).f1;
  r.ea = equal_accuracy(records);
  r.di = disparate_impact(records);
  r.averaging = averaging;
  r.n = g.overall.total();
  return r;
}

void to_json(Json& j, const FairnessReport& r) {
  j = Json{{"f1", r.f1},
           {"accuracy", r.accuracy},
           {"recall", r.recall},
           {"male_f1", r.male_f1},
           {"female_f1", r.female_f1},
           {"ea", r.ea},
           {"di", r.di ? Json(*r.di) : Json(nullptr)},
           {"averaging", to_string(r.averaging)},
           {"n", r.n}};
}

void from_json(const Json& j, FairnessReport& r) {
  r.f1 = j.at("f1").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.recall = j.at("recall").get<double>();
  r.male_f1 = j.at("male_f1").get<double>();
  r.female_f1 = j.at("female_f1").get<double>();
  r.ea = j.at("ea").get<double>();
  const Json& di = j.at("di");
  r.di = di.is_null() ? std::nullopt : std::optional<double>(di.get<double>());
  r.averaging = averaging_from_string(j.value("averaging", std::string("macro")));
  r.n = j.value("n", 0L);
}

std::array<std::string, 7> report_cells(const FairnessReport& r) {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  return {fmt(r.f1), fmt(r.accuracy), fmt(r.recall), fmt(r.male_f1), fmt(r.female_f1), fmt(r.ea),
          r.di ? fmt(*r.di) : std::string("NA")};
}

}  // namespace cfd
