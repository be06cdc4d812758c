#pragma once

#include <string>
#include <vector>

#include "vctl/experience.hpp"
#include "vctl/scenario.hpp"

namespace vctl {

struct EmptyStore : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// (max, min, mean, population std) per quantity.
struct StatFeatures {
  std::vector<double> load_stats;
  std::vector<double> pv_stats;
};

struct ScoredId {
  std::string id;
  double score = 0.0;
};

/// Two labeled top lists: profile-similar entries cue action timing,
/// statistically-similar ones cue action magnitude. An experience may
/// appear in both.
struct RetrievalResult {
  std::vector<ScoredId> profile_matches;
  std::vector<ScoredId> statistical_matches;
};

/// Product of PV and load cosine similarities over the hourly series.
/// Zero-vector convention: cos(0,0) = 1, cos(0, nonzero) = 0.
double profile_similarity(const Forecast& a, const Forecast& b);

StatFeatures stat_features(const Forecast& f);

/// Product of PV and load cosine similarities over the stat vectors.
double statistical_similarity(const Forecast& a, const Forecast& b);

/// Top-k_p by profile similarity and top-k_s by statistical similarity,
/// both sorted by score descending with ties going to the older id.
RetrievalResult retrieve(const ExperienceStore& store, const Forecast& query,
                         int k_p, int k_s);

}  // namespace vctl
