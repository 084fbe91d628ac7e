#include "morphogen/reranker.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "morphogen/error.hpp"

namespace morphogen {

namespace {

using Vec = Eigen::Matrix<double, kNumFeatures, 1>;
using Mat = Eigen::Matrix<double, kNumFeatures, kNumFeatures>;

Vec as_vec(const FeatureVector& f) { return Eigen::Map<const Vec>(f.data()); }

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

// Seeds each group's sampler from its content, so duplicated groups draw
// identical pairs.
std::uint64_t group_seed(const FeatureGroup& group, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ull;
  h = fnv1a(h, &seed, sizeof seed);
  for (const auto& f : group.features) h = fnv1a(h, f.data(), sizeof(double) * f.size());
  h = fnv1a(h, group.quality.data(), sizeof(double) * group.quality.size());
  return h;
}

double log1p_exp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double objective(const std::vector<Vec>& diffs, const Vec& w, double l2) {
  double loss = 0.0;
  for (const Vec& d : diffs) loss += log1p_exp(-w.dot(d));
  return loss / static_cast<double>(diffs.size()) + 0.5 * l2 * w.squaredNorm();
}

}  // namespace

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

bool is_subsequence(std::u32string_view needle, std::u32string_view haystack) {
  std::size_t i = 0;
  for (char32_t c : haystack)
    if (i < needle.size() && needle[i] == c) ++i;
  return i == needle.size();
}

std::size_t common_prefix_length(std::u32string_view a, std::u32string_view b) {
  const auto [ia, ib] = std::mismatch(a.begin(), a.end(), b.begin(), b.end());
  return static_cast<std::size_t>(ia - a.begin());
}

std::size_t common_suffix_length(std::u32string_view a, std::u32string_view b) {
  const auto [ia, ib] = std::mismatch(a.rbegin(), a.rend(), b.rbegin(), b.rend());
  return static_cast<std::size_t>(ia - a.rbegin());
}

FeatureVector extract_features(std::u32string_view x, std::u32string_view y, double model_logprob,
                               const WittenBellLM& lm) {
  FeatureVector f{};
  f[0] = lm.score_word(y);
  f[1] = model_logprob;
  f[2] = static_cast<double>(y.size()) - static_cast<double>(x.size());
  f[3] = static_cast<double>(levenshtein(y, x));
  f[4] = common_suffix_length(y, x) >= kAffixThreshold ? 1.0 : 0.0;
  f[5] = common_prefix_length(y, x) >= kAffixThreshold ? 1.0 : 0.0;
  f[6] = is_subsequence(y, x) ? 1.0 : 0.0;
  f[7] = is_subsequence(x, y) ? 1.0 : 0.0;
  return f;
}

double RerankModel::score(const FeatureVector& f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < kNumFeatures; ++i) s += weights[i] * f[i];
  return s;
}

void RerankModel::save(std::ostream& out) const {
  char buffer[64];
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    std::snprintf(buffer, sizeof buffer, "%.17g", weights[i]);
    out << kFeatureNames[i] << '\t' << buffer << '\n';
  }
}

void RerankModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  save(out);
}

RerankModel RerankModel::load(std::istream& in) {
  RerankModel model;
  std::array<bool, kNumFeatures> seen{};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("reranker weights: expected 'name TAB weight'");
    const std::string name = line.substr(0, tab);
    const auto it = std::find(kFeatureNames.begin(), kFeatureNames.end(), name);
    if (it == kFeatureNames.end()) throw DataError("reranker weights: unknown feature '" + name + "'");
    const auto idx = static_cast<std::size_t>(it - kFeatureNames.begin());
    try {
      model.weights[idx] = std::stod(line.substr(tab + 1));
    } catch (const std::logic_error&) {
      throw DataError("reranker weights: bad value for " + name);
    }
    if (!std::isfinite(model.weights[idx])) throw DataError("reranker weights: non-finite value for " + name);
    seen[idx] = true;
  }
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (!seen[i]) throw DataError("reranker weights: missing feature " + std::string(kFeatureNames[i]));
  }
  return model;
}

RerankModel RerankModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return load(in);
}

FeatureGroup featurize(const RerankGroup& group, const WittenBellLM& lm) {
  if (group.candidates.size() != group.model_logprobs.size()) {
    throw DataError("candidate and score counts differ");
  }
  FeatureGroup out;
  for (std::size_t i = 0; i < group.candidates.size(); ++i) {
    out.features.push_back(extract_features(group.source, group.candidates[i], group.model_logprobs[i], lm));
    out.quality.push_back(-static_cast<double>(levenshtein(group.candidates[i], group.gold)));
  }
  return out;
}

std::vector<FeatureVector> sample_pro_pairs(std::span<const FeatureGroup> groups, const ProConfig& config) {
  std::vector<FeatureVector> diffs;
  for (const FeatureGroup& group : groups) {
    const std::size_t n = group.features.size();
    if (group.quality.size() != n) throw DataError("feature and quality counts differ");
    if (n < 2) continue;

    std::vector<std::pair<std::size_t, std::size_t>> drawn;
    if (n * (n - 1) / 2 <= config.samples_per_group) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) drawn.emplace_back(i, j);
    } else {
      std::mt19937_64 rng(group_seed(group, config.seed));
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      while (drawn.size() < config.samples_per_group) {
        const std::size_t i = pick(rng), j = pick(rng);
        if (i != j) drawn.emplace_back(i, j);
      }
    }

    struct Pair {
      std::size_t better, worse;
      double gap;
    };
    std::vector<Pair> kept;
    for (auto [i, j] : drawn) {
      const double gap = std::abs(group.quality[i] - group.quality[j]);
      if (gap < config.min_quality_gap) continue;
      if (group.quality[i] > group.quality[j]) {
        kept.push_back({i, j, gap});
      } else {
        kept.push_back({j, i, gap});
      }
    }
    std::stable_sort(kept.begin(), kept.end(), [](const Pair& a, const Pair& b) { return a.gap > b.gap; });
    if (kept.size() > config.pairs_per_group) kept.resize(config.pairs_per_group);
    for (const Pair& p : kept) {
      FeatureVector d{};
      for (std::size_t k = 0; k < kNumFeatures; ++k)
        d[k] = group.features[p.better][k] - group.features[p.worse][k];
      diffs.push_back(d);
    }
  }
  return diffs;
}

RerankModel pro_train(std::span<const FeatureGroup> groups, const ProConfig& config) {
  const auto pairs = sample_pro_pairs(groups, config);
  if (pairs.empty()) throw ModelError("PRO: no candidate pairs differ in quality");
  std::vector<Vec> diffs;
  diffs.reserve(pairs.size());
  for (const auto& p : pairs) diffs.push_back(as_vec(p));
  const auto count = static_cast<double>(diffs.size());

  Vec w = Vec::Zero();
  double current = objective(diffs, w, config.l2);
  for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
    Vec grad = config.l2 * w;
    Mat hess = config.l2 * Mat::Identity();
    for (const Vec& d : diffs) {
      const double s = sigmoid(-w.dot(d));
      grad -= (s / count) * d;
      hess += (s * (1.0 - s) / count) * d * d.transpose();
    }
    if (grad.norm() < 1e-12) break;
    const Vec step = hess.ldlt().solve(-grad);
    double t = 1.0;
    bool improved = false;
    for (int k = 0; k < 50; ++k, t *= 0.5) {
      const Vec candidate = w + t * step;
      const double value = objective(diffs, candidate, config.l2);
      if (value <= current + 1e-4 * t * grad.dot(step)) {
        w = candidate;
        improved = value < current;
        current = value;
        break;
      }
    }
    if (!improved) break;
  }

  RerankModel model;
  for (std::size_t i = 0; i < kNumFeatures; ++i) model.weights[i] = w[static_cast<Eigen::Index>(i)];
  return model;
}

RerankModel pro_train(std::span<const RerankGroup> groups, const WittenBellLM& lm, const ProConfig& config) {
  std::vector<FeatureGroup> featurized;
  featurized.reserve(groups.size());
  for (const RerankGroup& g : groups) featurized.push_back(featurize(g, lm));
  return pro_train(featurized, config);
}

double pairwise_accuracy(std::span<const FeatureGroup> groups, const RerankModel& model,
                         const ProConfig& config) {
  const auto pairs = sample_pro_pairs(groups, config);
  if (pairs.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& d : pairs)
    if (model.score(d) > 0.0) ++correct;
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

std::size_t rerank(std::span<const FeatureVector> candidates, const RerankModel& model) {
  if (candidates.empty()) throw ModelError("cannot rerank an empty candidate list");
  std::size_t best = 0;
  double best_score = model.score(candidates[0]);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double s = model.score(candidates[i]);
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

std::size_t rerank(std::span<const std::u32string> candidates, std::span<const double> model_logprobs,
                   const RerankModel& model, const WittenBellLM& lm, std::u32string_view x) {
  if (candidates.size() != model_logprobs.size()) throw DataError("candidate and score counts differ");
  std::vector<FeatureVector> features;
  features.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    features.push_back(extract_features(x, candidates[i], model_logprobs[i], lm));
  return rerank(features, model);
}

}  // namespace morphogen
