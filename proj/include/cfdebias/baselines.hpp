#pragma once

// Comparison debiasing strategies: per-cell sub-sampling to the smallest
// (gender, label) cell, and MixFeat interpolation of same-cell ALF vectors.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cfdebias/corpus.hpp"

namespace cfd {

/// Down-samples every cell without replacement to the smallest cell count.
/// Surviving records keep their original order. Throws on an empty cell.
CorpusManifest sub_sample(const CorpusManifest& manifest, std::uint64_t seed);

struct MixOptions {
  // lambda ~ Beta(alpha, beta); Beta(1, 1) is uniform on [0, 1].
  double alpha = 1.0;
  double beta = 1.0;
  // When set, every lambda takes this value instead of being drawn.
  std::optional<double> fixed_lambda;
};

void to_json(Json& j, const MixOptions& o);
void from_json(const Json& j, MixOptions& o);

/// One planned interpolation between members i and j of a cell.
struct MixPlan {
  std::size_t i = 0;
  std::size_t j = 0;
  double lambda = 1.0;
};

/// n_new draws of (i != j, lambda) for a cell with `cell_size` members.
std::vector<MixPlan> plan_mixes(std::size_t cell_size, std::size_t n_new, std::uint64_t seed,
                                const MixOptions& options = {});

struct CellFeatures {
  Cell cell;
  std::vector<std::string> ids;
  std::vector<Vector> features;  // ALF per member, same order as ids
};

struct AugmentedFeature {
  Vector features;
  GenderCode gender;
  DepressionLabel label;
  std::pair<std::string, std::string> parents;
  double lambda = 1.0;
};

/// C_k = lambda C_i + (1 - lambda) C_j for planned (i, j, lambda).
/// Throws when the cell has fewer than two members.
std::vector<AugmentedFeature> mixfeat_augment(const CellFeatures& cell, std::size_t n_new, std::uint64_t seed,
                                              const MixOptions& options = {});

/// Number of virtual samples each cell needs to reach the largest cell.
CellCounts plan_balance(const CellCounts& counts);

/// Raises every cell to the largest cell count with MixFeat samples built
/// from the records' ALFs (the mean of their feature rows). Augmented records
/// carry a single feature row and their parents. Throws when a cell that
/// needs samples has fewer than two members.
CorpusManifest balance_by_augmentation(const CorpusManifest& manifest, std::uint64_t seed,
                                       const MixOptions& options = {});

/// Per-cell member indices of a manifest, in record order.
std::map<Cell, std::vector<std::size_t>> cell_members(const CorpusManifest& manifest);

}  // namespace cfd
