#include "cfdebias/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace cfd {

namespace fs = std::filesystem;

namespace {

std::mutex g_observer_mutex;
ManifestAccessObserver g_observer;

bool is_valid_cell(const Cell& c) {
  return (c.first == 0 || c.first == 1) && (c.second == 0 || c.second == 1);
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

struct ScoreRow {
  double score = 0.0;
  int gender_code = 0;
};

// Reads one PHQ score table. Returns an empty map if the file is not a score
// table (no Participant_ID column).
std::unordered_map<std::string, ScoreRow> read_score_table(const fs::path& path,
                                                           bool require_table) {
  std::istringstream in(read_text_file(path));
  std::string header_line;
  std::getline(in, header_line);
  const auto header = split_line(trim(header_line), ',');
  auto column = [&](std::initializer_list<const char*> names) -> int {
    for (const char* name : names) {
      auto it = std::find(header.begin(), header.end(), name);
      if (it != header.end()) return static_cast<int>(it - header.begin());
    }
    return -1;
  };
  const int id_col = column({"Participant_ID", "participant_id"});
  if (id_col < 0) {
    if (require_table) throw std::runtime_error("parse error: " + path.string() + " has no Participant_ID column");
    return {};
  }
  const int score_col = column({"PHQ8_Score", "PHQ_Score", "phq8_score", "phq_score"});
  const int gender_col = column({"Gender", "gender"});
  if (score_col < 0 || gender_col < 0) {
    throw std::runtime_error("parse error: " + path.string() +
                             " lacks a PHQ score or Gender column");
  }
  std::unordered_map<std::string, ScoreRow> rows;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_line(line, ',');
    const auto need = static_cast<std::size_t>(std::max({id_col, score_col, gender_col}));
    if (fields.size() <= need) {
      throw std::runtime_error("parse error: " + path.string() + ":" + std::to_string(line_no) +
                               " has too few columns");
    }
    try {
      std::size_t used = 0;
      ScoreRow row;
      row.score = std::stod(fields[score_col], &used);
      if (used != fields[score_col].size()) throw std::invalid_argument("trailing");
      row.gender_code = std::stoi(fields[gender_col], &used);
      if (used != fields[gender_col].size()) throw std::invalid_argument("trailing");
      rows[fields[id_col]] = row;
    } catch (const std::logic_error&) {
      throw std::runtime_error("parse error: " + path.string() + ":" + std::to_string(line_no) +
                               " has a non-numeric score or gender");
    }
  }
  return rows;
}

std::optional<fs::path> find_session_file(const fs::path& root, const std::string& id,
                                          const std::string& suffix) {
  const std::string name = id + suffix;
  for (const fs::path& candidate : {root / (id + "_P") / name, root / id / name, root / name}) {
    if (fs::exists(candidate)) return candidate;
  }
  return std::nullopt;
}

std::vector<std::string> ids_from_table(const fs::path& path) {
  std::vector<std::string> ids;
  for (const auto& [id, row] : read_score_table(path, true)) ids.push_back(id);
  std::sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  return ids;
}

}  // namespace

CellCounts table1_counts() { return {{{1, 0}, 39}, {{1, 1}, 24}, {{0, 0}, 60}, {{0, 1}, 19}}; }

CellCounts table2_counts() { return {{{1, 0}, 17}, {{1, 1}, 7}, {{0, 0}, 16}, {{0, 1}, 7}}; }

CellFractions fractions_of(const CellCounts& counts) {
  long total = 0;
  for (const auto& [cell, n] : counts) total += n;
  CellFractions out;
  for (const auto& [cell, n] : counts) {
    out[cell] = total == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(total);
  }
  return out;
}

CellCounts CorpusManifest::distribution() const {
  CellCounts counts;
  for (const Cell& c : kCells) counts[c] = 0;
  for (const SessionRecord& r : records) ++counts[{r.gender.value, r.label.value}];
  return counts;
}

std::vector<const SessionRecord*> CorpusManifest::real_records() const {
  std::vector<const SessionRecord*> out;
  for (const SessionRecord& r : records) {
    if (!r.augmented()) out.push_back(&r);
  }
  return out;
}

void to_json(Json& j, const CorpusManifest& m) {
  Json dist = Json::array();
  for (const auto& [cell, n] : m.distribution()) {
    dist.push_back({{"gender", cell.first}, {"label", cell.second}, {"count", n}});
  }
  j = Json{{"split_name", m.split_name}, {"distribution", dist}, {"records", m.records}};
}

void from_json(const Json& j, CorpusManifest& m) {
  m.split_name = j.at("split_name").get<std::string>();
  m.records = j.at("records").get<std::vector<SessionRecord>>();
  if (auto it = j.find("distribution"); it != j.end()) {
    CellCounts stored;
    for (const Json& cell : *it) {
      stored[{cell.at("gender").get<int>(), cell.at("label").get<int>()}] = cell.at("count").get<long>();
    }
    for (const auto& [cell, n] : m.distribution()) {
      const auto s = stored.find(cell);
      if ((s == stored.end() && n != 0) || (s != stored.end() && s->second != n)) {
        throw std::invalid_argument("manifest distribution does not match its records");
      }
    }
  }
}

void set_manifest_access_observer(ManifestAccessObserver observer) {
  std::lock_guard lock(g_observer_mutex);
  g_observer = std::move(observer);
}

CorpusManifest load_manifest(const fs::path& path) {
  {
    std::lock_guard lock(g_observer_mutex);
    if (g_observer) g_observer(path);
  }
  return Json::parse(read_text_file(path)).get<CorpusManifest>();
}

void save_manifest(const CorpusManifest& manifest, const fs::path& path) {
  write_text_file(path, Json(manifest).dump(1) + "\n");
}

std::uint64_t manifest_hash(const CorpusManifest& manifest) {
  const std::string text = Json(manifest).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

DistributionCheck validate_distribution(const CorpusManifest& manifest, const CellCounts& expected) {
  DistributionCheck check;
  const CellCounts actual = manifest.distribution();
  std::set<Cell> cells;
  for (const auto& [c, n] : actual) cells.insert(c);
  for (const auto& [c, n] : expected) cells.insert(c);
  for (const Cell& c : cells) {
    const auto a = actual.find(c);
    const auto e = expected.find(c);
    CellDiff d{c, e == expected.end() ? 0 : e->second, a == actual.end() ? 0 : a->second};
    if (d.delta() != 0) {
      check.pass = false;
      check.diff.push_back(d);
    }
  }
  return check;
}

IngestResult ingest_daicwoz(const fs::path& root, const SplitSpec& splits,
                            const IngestOptions& options) {
  IngestResult result;
  result.train_combined.split_name = "train_combined";
  result.test.split_name = "test";
  if (splits.train.empty() && splits.dev.empty() && splits.test.empty()) return result;

  if (!fs::is_directory(root)) throw std::runtime_error("corpus root " + root.string() + " is not a directory");

  std::unordered_map<std::string, ScoreRow> scores;
  std::vector<fs::path> tables = options.score_tables;
  const bool explicit_tables = !tables.empty();
  if (!explicit_tables) {
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") tables.push_back(entry.path());
    }
    std::sort(tables.begin(), tables.end());
  }
  for (const fs::path& table : tables) {
    for (auto& [id, row] : read_score_table(table, explicit_tables)) scores[id] = row;
  }

  const std::unordered_set<std::string> excluded(options.exclude.begin(), options.exclude.end());
  auto build = [&](const std::vector<std::string>& ids, CorpusManifest& out) {
    for (const std::string& id : ids) {
      if (excluded.contains(id)) continue;
      const auto score = scores.find(id);
      if (score == scores.end()) throw std::runtime_error("session " + id + ": no PHQ score found");
      const auto audio = find_session_file(root, id, "_AUDIO.wav");
      if (!audio) throw std::runtime_error("session " + id + ": missing " + id + "_AUDIO.wav");
      const auto transcript = find_session_file(root, id, "_TRANSCRIPT.csv");
      if (!transcript) throw std::runtime_error("session " + id + ": missing " + id + "_TRANSCRIPT.csv");
      SessionRecord r;
      r.session_id = id;
      r.gender = score->second.gender_code == options.source_male_code ? GenderCode::male()
                                                                       : GenderCode::female();
      r.label = score->second.score >= options.phq_threshold ? DepressionLabel::depressed()
                                                             : DepressionLabel::non_depressed();
      r.audio_path = audio->string();
      r.transcript_path = transcript->string();
      for (const SessionRecord& existing : out.records) {
        if (existing.session_id == id) throw std::runtime_error("session " + id + " listed twice");
      }
      out.records.push_back(std::move(r));
    }
  };
  build(splits.train, result.train_combined);
  build(splits.dev, result.train_combined);
  build(splits.test, result.test);
  return result;
}

SplitSpec discover_splits(const fs::path& root) {
  SplitSpec spec;
  if (!fs::is_directory(root)) throw std::runtime_error("corpus root " + root.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) {
    const std::string name = f.filename().string();
    if (name.starts_with("train_split")) {
      spec.train = ids_from_table(f);
    } else if (name.starts_with("dev_split")) {
      spec.dev = ids_from_table(f);
    } else if (name.find("test_split") != std::string::npos) {
      spec.test = ids_from_table(f);
    }
  }
  return spec;
}

// ---------------------------------------------------------------------------

void to_json(Json& j, const SynthConfig& c) {
  auto props = [](const CellFractions& p) {
    Json arr = Json::array();
    for (const auto& [cell, f] : p) arr.push_back({{"gender", cell.first}, {"label", cell.second}, {"fraction", f}});
    return arr;
  };
  j = Json{{"n_train", c.n_train},
           {"n_test", c.n_test},
           {"train_proportions", props(c.train_proportions)},
           {"test_proportions", props(c.test_proportions)},
           {"feature_dim", c.feature_dim},
           {"seq_len_range", {c.seq_len_range.first, c.seq_len_range.second}},
           {"signal_strength", c.signal_strength},
           {"gender_leakage", c.gender_leakage},
           {"noise_sigma", c.noise_sigma},
           {"seed", c.seed}};
}

void from_json(const Json& j, SynthConfig& c) {
  c = SynthConfig{};
  auto props = [](const Json& arr) {
    CellFractions p;
    for (const Json& e : arr) p[{e.at("gender").get<int>(), e.at("label").get<int>()}] = e.at("fraction").get<double>();
    return p;
  };
  if (j.contains("n_train")) c.n_train = j["n_train"].get<long>();
  if (j.contains("n_test")) c.n_test = j["n_test"].get<long>();
  if (j.contains("train_proportions")) c.train_proportions = props(j["train_proportions"]);
  if (j.contains("test_proportions")) c.test_proportions = props(j["test_proportions"]);
  if (j.contains("feature_dim")) c.feature_dim = j["feature_dim"].get<int>();
  if (j.contains("seq_len_range")) {
    c.seq_len_range = {j["seq_len_range"].at(0).get<int>(), j["seq_len_range"].at(1).get<int>()};
  }
  if (j.contains("signal_strength")) c.signal_strength = j["signal_strength"].get<double>();
  if (j.contains("gender_leakage")) c.gender_leakage = j["gender_leakage"].get<double>();
  if (j.contains("noise_sigma")) c.noise_sigma = j["noise_sigma"].get<double>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
}

CellCounts apportion(const CellFractions& proportions, long n) {
  if (n < 0) throw std::invalid_argument("apportion: negative total");
  double total = 0.0;
  for (const auto& [cell, f] : proportions) {
    if (!is_valid_cell(cell)) throw std::invalid_argument("apportion: cell outside {0,1}x{0,1}");
    if (!(f >= 0.0) || !std::isfinite(f)) {
      throw std::invalid_argument("apportion: proportions infeasible (negative or non-finite cell)");
    }
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("apportion: proportions must sum to 1");

  CellCounts counts;
  std::vector<std::pair<double, Cell>> remainders;
  long assigned = 0;
  for (const auto& [cell, f] : proportions) {
    const double exact = f * static_cast<double>(n);
    const long base = static_cast<long>(std::floor(exact + 1e-9));
    counts[cell] = base;
    assigned += base;
    remainders.emplace_back(exact - static_cast<double>(base), cell);
  }
  // Ties go to the earlier cell in map order so the result is deterministic.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n && i < remainders.size(); ++i, ++assigned) {
    ++counts[remainders[i].second];
  }
  if (assigned > n) throw std::invalid_argument("apportion: proportions infeasible for n");
  for (const auto& [cell, count] : counts) {
    if (count < 0) throw std::invalid_argument("apportion: proportions infeasible for n");
  }
  return counts;
}

namespace {

std::uint64_t splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

CorpusManifest synth_split(const std::string& name, const std::string& id_prefix, const CellFractions& proportions, long n,
                           const SynthConfig& c, const Vector& u_label, const Vector& u_gender,
                           std::mt19937_64& rng) {
  const CellCounts counts = apportion(proportions, n);
  std::normal_distribution<double> noise(0.0, c.noise_sigma);
  std::uniform_int_distribution<int> seq_len(c.seq_len_range.first, c.seq_len_range.second);

  std::vector<std::pair<int, int>> cells;
  for (const auto& [cell, count] : counts) {
    for (long i = 0; i < count; ++i) cells.push_back(cell);
  }
  std::shuffle(cells.begin(), cells.end(), rng);

  CorpusManifest m;
  m.split_name = name;
  m.records.reserve(cells.size());
  const int width = std::max<int>(4, static_cast<int>(std::to_string(cells.size()).size()));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto [g, d] = cells[i];
    const Vector mean = c.signal_strength * (d - 0.5) * u_label + c.gender_leakage * (g - 0.5) * u_gender;
    const int len = seq_len(rng);
    Matrix rows(len, c.feature_dim);
    for (int t = 0; t < len; ++t) {
      for (int k = 0; k < c.feature_dim; ++k) rows(t, k) = mean(k) + noise(rng);
    }
    std::string index = std::to_string(i);
    index.insert(0, static_cast<std::size_t>(std::max(0, width - static_cast<int>(index.size()))), '0');
    SessionRecord r;
    r.session_id = id_prefix + "-" + index;
    r.gender = GenderCode{g};
    r.label = DepressionLabel{d};
    r.features = FeatureSequence{std::move(rows)};
    m.records.push_back(std::move(r));
  }
  return m;
}

}  // namespace

SynthCorpus generate_synthetic(const SynthConfig& c) {
  if (c.n_train < 0 || c.n_test < 0) throw std::invalid_argument("synthetic corpus sizes must be nonnegative");
  if (c.feature_dim < 2) throw std::invalid_argument("feature_dim must be at least 2");
  if (c.seq_len_range.first < 1 || c.seq_len_range.second < c.seq_len_range.first) {
    throw std::invalid_argument("seq_len_range must satisfy 1 <= min <= max");
  }
  if (!(c.noise_sigma > 0.0)) throw std::invalid_argument("noise_sigma must be positive");
  if (!(c.signal_strength >= 0.0) || !(c.gender_leakage >= 0.0)) {
    throw std::invalid_argument("signal_strength and gender_leakage must be nonnegative");
  }
  // Validate both tables before drawing anything.
  apportion(c.train_proportions, c.n_train);
  apportion(c.test_proportions, c.n_test);

  std::uint64_t state = c.seed;
  std::mt19937_64 rotation_rng(splitmix(state));
  std::mt19937_64 train_rng(splitmix(state));
  std::mt19937_64 test_rng(splitmix(state));

  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix gaussian(c.feature_dim, c.feature_dim);
  for (Eigen::Index r = 0; r < gaussian.rows(); ++r) {
    for (Eigen::Index k = 0; k < gaussian.cols(); ++k) gaussian(r, k) = unit(rotation_rng);
  }
  const Matrix q = Eigen::HouseholderQR<Matrix>(gaussian).householderQ();

  SynthCorpus out;
  out.label_direction = q.col(0);
  out.gender_direction = q.col(1);
  out.train = synth_split("train_combined", "syn-train", c.train_proportions, c.n_train, c, out.label_direction,
                          out.gender_direction, train_rng);
  out.test = synth_split("test", "syn-test", c.test_proportions, c.n_test, c, out.label_direction,
                         out.gender_direction, test_rng);
  return out;
}

}  // namespace cfd
