#include "vctl/retrieval.hpp"

#include <algorithm>
#include <cmath>

namespace vctl {

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw DimensionMismatch("cosine over vectors of different length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 && nb == 0.0) return 1.0;  // identical degenerate vectors
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<ScoredId> top_k(
    const std::vector<Experience>& entries, int k,
    double (*metric)(const Forecast&, const Forecast&), const Forecast& query) {
  std::vector<ScoredId> scored;
  scored.reserve(entries.size());
  for (const Experience& e : entries)
    scored.push_back({e.id, metric(e.context, query)});
  std::sort(scored.begin(), scored.end(), [](const ScoredId& a, const ScoredId& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  scored.resize(static_cast<size_t>(std::min<int>(k, static_cast<int>(scored.size()))));
  return scored;
}

}  // namespace

double profile_similarity(const Forecast& a, const Forecast& b) {
  return cosine(a.pv, b.pv) * cosine(a.load, b.load);
}

StatFeatures stat_features(const Forecast& f) {
  auto stats = [](const std::vector<double>& v) {
    if (v.size() < 2) throw DimensionMismatch("stat_features needs length >= 2");
    double mx = v[0], mn = v[0], sum = 0.0;
    for (const double x : v) {
      mx = std::max(mx, x);
      mn = std::min(mn, x);
      sum += x;
    }
    const double mean = sum / static_cast<double>(v.size());
    double var = 0.0;
    for (const double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());  // population variance
    return std::vector<double>{mx, mn, mean, std::sqrt(var)};
  };
  StatFeatures out;
  out.load_stats = stats(f.load);
  out.pv_stats = stats(f.pv);
  return out;
}

double statistical_similarity(const Forecast& a, const Forecast& b) {
  const StatFeatures fa = stat_features(a);
  const StatFeatures fb = stat_features(b);
  return cosine(fa.pv_stats, fb.pv_stats) * cosine(fa.load_stats, fb.load_stats);
}

RetrievalResult retrieve(const ExperienceStore& store, const Forecast& query,
                         int k_p, int k_s) {
  if (store.entries().empty()) throw EmptyStore("retrieve() on an empty store");
  if (k_p < 0 || k_s < 0 || k_p > store.capacity() || k_s > store.capacity())
    throw std::invalid_argument("need 0 <= k_p, k_s <= store capacity");
  RetrievalResult out;
  out.profile_matches = top_k(store.entries(), k_p, profile_similarity, query);
  out.statistical_matches =
      top_k(store.entries(), k_s, statistical_similarity, query);
  return out;
}

}  // namespace vctl
