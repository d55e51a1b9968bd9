#include "cfdebias/baselines.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace cfd {

namespace {

// Per-cell stream so that cells can be processed independently.
std::uint64_t cell_seed(std::uint64_t seed, const Cell& cell) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(1 + 2 * cell.first + cell.second);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double draw_beta(std::mt19937_64& rng, double alpha, double beta) {
  std::gamma_distribution<double> ga(alpha, 1.0);
  std::gamma_distribution<double> gb(beta, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

}  // namespace

std::map<Cell, std::vector<std::size_t>> cell_members(const CorpusManifest& manifest) {
  std::map<Cell, std::vector<std::size_t>> members;
  for (const Cell& c : kCells) members[c];
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const SessionRecord& r = manifest.records[i];
    members[{r.gender.value, r.label.value}].push_back(i);
  }
  return members;
}

CorpusManifest sub_sample(const CorpusManifest& manifest, std::uint64_t seed) {
  auto members = cell_members(manifest);
  std::size_t smallest = manifest.records.size();
  for (const auto& [cell, idx] : members) {
    if (idx.empty()) {
      throw std::invalid_argument("sub_sample: cell (gender " + std::to_string(cell.first) + ", label " +
                                  std::to_string(cell.second) + ") is empty");
    }
    smallest = std::min(smallest, idx.size());
  }
  std::vector<std::size_t> keep;
  for (auto& [cell, idx] : members) {
    std::mt19937_64 rng(cell_seed(seed, cell));
    std::shuffle(idx.begin(), idx.end(), rng);
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(smallest));
  }
  std::sort(keep.begin(), keep.end());
  CorpusManifest out;
  out.split_name = manifest.split_name;
  for (std::size_t i : keep) out.records.push_back(manifest.records[i]);
  return out;
}

void to_json(Json& j, const MixOptions& o) {
  j = Json{{"alpha", o.alpha}, {"beta", o.beta}};
  if (o.fixed_lambda) j["fixed_lambda"] = *o.fixed_lambda;
}

void from_json(const Json& j, MixOptions& o) {
  o = MixOptions{};
  o.alpha = j.value("alpha", o.alpha);
  o.beta = j.value("beta", o.beta);
  if (j.contains("fixed_lambda") && !j.at("fixed_lambda").is_null()) o.fixed_lambda = j.at("fixed_lambda").get<double>();
}

std::vector<MixPlan> plan_mixes(std::size_t cell_size, std::size_t n_new, std::uint64_t seed,
                                const MixOptions& options) {
  if (n_new == 0) return {};
  if (cell_size < 2) throw std::invalid_argument("mixfeat: a cell needs at least two members to interpolate");
  if (!(options.alpha > 0.0) || !(options.beta > 0.0)) {
    throw std::invalid_argument("mixfeat: Beta parameters must be positive");
  }
  if (options.fixed_lambda && !(*options.fixed_lambda >= 0.0 && *options.fixed_lambda <= 1.0)) {
    throw std::invalid_argument("mixfeat: fixed lambda must lie in [0, 1]");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> first(0, cell_size - 1);
  std::uniform_int_distribution<std::size_t> other(0, cell_size - 2);
  std::vector<MixPlan> plans(n_new);
  for (MixPlan& p : plans) {
    p.i = first(rng);
    p.j = other(rng);
    if (p.j >= p.i) ++p.j;
    p.lambda = options.fixed_lambda ? *options.fixed_lambda : draw_beta(rng, options.alpha, options.beta);
  }
  return plans;
}

std::vector<AugmentedFeature> mixfeat_augment(const CellFeatures& cell, std::size_t n_new, std::uint64_t seed,
                                              const MixOptions& options) {
  if (cell.ids.size() != cell.features.size()) {
    throw std::invalid_argument("mixfeat: ids and features differ in length");
  }
  if (cell.features.size() < 2) throw std::invalid_argument("mixfeat: a cell needs at least two members to interpolate");
  std::vector<AugmentedFeature> out;
  out.reserve(n_new);
  for (const MixPlan& p : plan_mixes(cell.features.size(), n_new, seed, options)) {
    AugmentedFeature a;
    a.features = p.lambda * cell.features[p.i] + (1.0 - p.lambda) * cell.features[p.j];
    a.gender = GenderCode{cell.cell.first};
    a.label = DepressionLabel{cell.cell.second};
    a.parents = {cell.ids[p.i], cell.ids[p.j]};
    a.lambda = p.lambda;
    out.push_back(std::move(a));
  }
  return out;
}

CellCounts plan_balance(const CellCounts& counts) {
  long largest = 0;
  for (const auto& [cell, n] : counts) largest = std::max(largest, n);
  CellCounts need;
  for (const auto& [cell, n] : counts) need[cell] = largest - n;
  return need;
}

CorpusManifest balance_by_augmentation(const CorpusManifest& manifest, std::uint64_t seed,
                                       const MixOptions& options) {
  const auto members = cell_members(manifest);
  const CellCounts need = plan_balance(manifest.distribution());
  CorpusManifest out = manifest;
  for (const auto& [cell, idx] : members) {
    const auto n_new = static_cast<std::size_t>(need.at(cell));
    if (n_new == 0) continue;
    CellFeatures cf;
    cf.cell = cell;
    for (std::size_t i : idx) {
      const SessionRecord& r = manifest.records[i];
      if (!r.features) throw std::invalid_argument("balance_by_augmentation: record " + r.session_id + " has no features");
      cf.ids.push_back(r.session_id);
      cf.features.push_back(r.features->data.colwise().mean().transpose());
    }
    const auto made = mixfeat_augment(cf, n_new, cell_seed(seed, cell), options);
    for (std::size_t k = 0; k < made.size(); ++k) {
      const AugmentedFeature& a = made[k];
      SessionRecord r;
      r.session_id = "mix-g" + std::to_string(cell.first) + "-d" + std::to_string(cell.second) + "-" + std::to_string(k);
      r.gender = a.gender;
      r.label = a.label;
      r.features = FeatureSequence{Matrix(a.features.transpose())};
      r.augmentation = Augmentation{a.parents.first, a.parents.second, a.lambda};
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace cfd
