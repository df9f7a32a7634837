#include "rulforge/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "rulforge/error.hpp"

namespace rulforge {

using nlohmann::json;

std::size_t NormStats::retained_count() const {
  return static_cast<std::size_t>(
      std::count(retained_mask.begin(), retained_mask.end(), true));
}

std::vector<std::size_t> NormStats::retained_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < retained_mask.size(); ++i) {
    if (retained_mask[i]) idx.push_back(i);
  }
  return idx;
}

std::string NormStats::to_json() const {
  json j;
  j["format"] = "rulforge.norm_stats";
  j["format_version"] = kNormStatsFormatVersion;
  j["epsilon_const"] = epsilon_const;
  j["means"] = means;
  j["stds"] = stds;
  j["retained_mask"] = retained_mask;
  return j.dump(2);
}

NormStats NormStats::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("norm stats: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kNormStatsFormatVersion) {
      throw CorruptionError("norm stats: unsupported format_version " +
                            j.at("format_version").dump());
    }
    NormStats s;
    s.epsilon_const = j.at("epsilon_const").get<double>();
    s.means = j.at("means").get<std::vector<double>>();
    s.stds = j.at("stds").get<std::vector<double>>();
    s.retained_mask = j.at("retained_mask").get<std::vector<bool>>();
    if (s.means.size() != kNumRawFeatures || s.stds.size() != kNumRawFeatures ||
        s.retained_mask.size() != kNumRawFeatures) {
      throw CorruptionError("norm stats: expected 24 entries per array");
    }
    for (std::size_t i = 0; i < kNumRawFeatures; ++i) {
      if (s.retained_mask[i] && !(s.stds[i] > 0.0)) {
        throw CorruptionError("norm stats: retained feature " + std::to_string(i) +
                              " has non-positive std");
      }
    }
    return s;
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("norm stats: ") + e.what());
  }
}

void NormStats::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw NotFoundError("cannot write " + path.string());
  f << to_json() << '\n';
}

NormStats NormStats::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw NotFoundError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

NormStats fit_normalizer(const std::vector<EngineTrajectory>& trajectories,
                         const NormalizerOptions& options) {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.length();
  if (n == 0) throw ValidationError("fit_normalizer: no training frames");

  NormStats s;
  s.epsilon_const = options.epsilon_const;
  s.means.assign(kNumRawFeatures, 0.0);
  s.stds.assign(kNumRawFeatures, 0.0);
  s.retained_mask.assign(kNumRawFeatures, false);

  for (const auto& t : trajectories) {
    for (const auto& f : t.frames) {
      for (std::size_t i = 0; i < kNumRawFeatures; ++i) s.means[i] += f.values[i];
    }
  }
  for (auto& m : s.means) m /= static_cast<double>(n);

  std::vector<double> sq(kNumRawFeatures, 0.0);
  for (const auto& t : trajectories) {
    for (const auto& f : t.frames) {
      for (std::size_t i = 0; i < kNumRawFeatures; ++i) {
        const double d = f.values[i] - s.means[i];
        sq[i] += d * d;
      }
    }
  }
  for (std::size_t i = 0; i < kNumRawFeatures; ++i) {
    s.stds[i] = std::sqrt(sq[i] / static_cast<double>(n));
    const bool is_setting = i < kNumSettings;
    s.retained_mask[i] =
        s.stds[i] >= s.epsilon_const && (options.include_settings || !is_setting);
  }
  if (s.retained_count() == 0) {
    throw ValidationError("fit_normalizer: every feature is constant");
  }
  return s;
}

Tensor<double> apply_normalizer(const NormStats& stats, const EngineTrajectory& trajectory) {
  if (trajectory.frames.empty()) throw ValidationError("apply_normalizer: empty trajectory");
  if (stats.means.size() != kNumRawFeatures) {
    throw ValidationError("apply_normalizer: statistics are not fitted");
  }
  const auto idx = stats.retained_indices();
  Tensor<double> out({trajectory.length(), idx.size()});
  for (std::size_t t = 0; t < trajectory.length(); ++t) {
    const auto& v = trajectory.frames[t].values;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const std::size_t i = idx[j];
      out(t, j) = (v[i] - stats.means[i]) / stats.stds[i];
    }
  }
  return out;
}

std::vector<double> label_rul_truncated(int length, int final_rul, int r_max) {
  if (length < 1) throw ValidationError("label_rul: length must be >= 1");
  if (r_max < 1) throw ValidationError("label_rul: r_max must be >= 1");
  if (final_rul < 0) throw ValidationError("label_rul: final RUL must be >= 0");
  std::vector<double> y(static_cast<std::size_t>(length));
  for (int t = 1; t <= length; ++t) {
    y[static_cast<std::size_t>(t - 1)] = std::min(r_max, final_rul + length - t);
  }
  return y;
}

std::vector<double> label_rul(int length, int r_max) {
  return label_rul_truncated(length, 0, r_max);
}

LabeledSequence make_labeled_sequence(const NormStats& stats,
                                      const EngineTrajectory& trajectory, int r_max) {
  LabeledSequence s;
  s.unit_id = trajectory.unit_id;
  s.features = apply_normalizer(stats, trajectory);
  s.labels = label_rul(static_cast<int>(trajectory.length()), r_max);
  s.original_length = trajectory.length();
  return s;
}

int draw_trim(std::size_t length, Rng& rng) {
  const int T = static_cast<int>(length);
  if (T < kMinTrim + kMinTrimmedLength) return 0;
  const int hi = std::min(kMaxTrim, T - kMinTrimmedLength);
  std::uniform_int_distribution<int> dist(kMinTrim, hi);
  return dist(rng);
}

LabeledSequence trim_end(const LabeledSequence& seq, std::size_t steps) {
  if (steps == 0) return seq;
  if (steps >= seq.length()) throw ValidationError("trim_end: would remove every step");
  const std::size_t keep = seq.length() - steps;
  const std::size_t F = seq.num_features();
  LabeledSequence out;
  out.unit_id = seq.unit_id;
  out.original_length = seq.original_length;
  out.labels.assign(seq.labels.begin(), seq.labels.begin() + static_cast<std::ptrdiff_t>(keep));
  std::vector<double> data(seq.features.vec().begin(),
                           seq.features.vec().begin() + static_cast<std::ptrdiff_t>(keep * F));
  out.features = Tensor<double>({keep, F}, std::move(data));
  return out;
}

LabeledSequence trim_random_end(const LabeledSequence& seq, Rng& rng) {
  return trim_end(seq, static_cast<std::size_t>(draw_trim(seq.length(), rng)));
}

std::vector<LabeledSequence> window_segment(const LabeledSequence& seq,
                                            std::size_t window, std::size_t stride) {
  if (window < 1) throw ValidationError("window_segment: window must be >= 1");
  if (stride < 1) throw ValidationError("window_segment: stride must be >= 1");
  const std::size_t T = seq.length();
  const std::size_t F = seq.num_features();

  std::vector<LabeledSequence> out;
  auto emit = [&](std::size_t end) {  // window covers [end - window, end)
    LabeledSequence w;
    w.unit_id = seq.unit_id;
    w.original_length = seq.original_length;
    w.labels.resize(window);
    std::vector<double> data(window * F, 0.0);
    const std::size_t real = std::min(window, end);
    const std::size_t pad = window - real;
    const std::size_t start = end - real;
    for (std::size_t i = 0; i < real; ++i) {
      std::copy_n(&seq.features(start + i, 0), F, data.begin() + static_cast<std::ptrdiff_t>((pad + i) * F));
      w.labels[pad + i] = seq.labels[start + i];
    }
    // Padded steps carry the first real label so the sequence stays non-increasing.
    for (std::size_t i = 0; i < pad; ++i) w.labels[i] = seq.labels[start];
    w.features = Tensor<double>({window, F}, std::move(data));
    out.push_back(std::move(w));
  };

  if (T < window) {
    emit(T);
    return out;
  }
  for (std::size_t end = window; end <= T; end += stride) emit(end);
  return out;
}

PaddedBatch make_batch(const std::vector<LabeledSequence>& seqs,
                       const std::vector<std::size_t>& indices, Supervision supervision,
                       std::size_t pad_to) {
  if (indices.empty()) throw ValidationError("make_batch: no sequences");
  const std::size_t F = seqs.at(indices.front()).num_features();
  std::size_t L = pad_to;
  for (auto i : indices) {
    const auto& s = seqs.at(i);
    if (s.num_features() != F) throw ShapeError("make_batch: feature counts differ");
    if (s.length() == 0) throw ValidationError("make_batch: empty sequence");
    L = std::max(L, s.length());
  }
  const std::size_t B = indices.size();

  PaddedBatch batch;
  batch.features = Tensor<double>({B, F, L});
  batch.labels = Tensor<double>({B, L});
  batch.mask = Mask({B, L});
  batch.target_mask = Mask({B, L});
  batch.source_indices = indices;
  for (std::size_t b = 0; b < B; ++b) {
    const auto& s = seqs[indices[b]];
    const std::size_t T = s.length();
    batch.lengths.push_back(T);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) batch.features(b, f, t) = s.features(t, f);
      batch.labels(b, t) = s.labels[t];
      batch.mask(b, t) = 1;
      batch.target_mask(b, t) = supervision == Supervision::Dense || t + 1 == T ? 1 : 0;
    }
  }
  return batch;
}

std::vector<PaddedBatch> build_batches(const std::vector<LabeledSequence>& seqs, Rng& rng,
                                       const BatchingOptions& options) {
  if (seqs.empty()) throw ValidationError("build_batches: no sequences");
  if (options.batch_size < 1) throw ValidationError("build_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t pool = options.batch_size * std::max<std::size_t>(1, options.pool_batches);
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t p = 0; p < order.size(); p += pool) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(p);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), p + pool));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return seqs[a].length() < seqs[b].length();
    });
    for (auto it = first; it < last; it += static_cast<std::ptrdiff_t>(options.batch_size)) {
      auto end = std::min(last, it + static_cast<std::ptrdiff_t>(options.batch_size));
      groups.emplace_back(it, end);
    }
  }
  std::shuffle(groups.begin(), groups.end(), rng);

  std::vector<PaddedBatch> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(make_batch(seqs, g, options.supervision));
  return out;
}

std::vector<PaddedBatch> build_batches_in_order(const std::vector<LabeledSequence>& seqs,
                                                std::size_t batch_size,
                                                Supervision supervision) {
  if (seqs.empty()) throw ValidationError("build_batches: no sequences");
  if (batch_size < 1) throw ValidationError("build_batches: batch_size must be >= 1");
  std::vector<PaddedBatch> out;
  for (std::size_t i = 0; i < seqs.size(); i += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t j = i; j < std::min(seqs.size(), i + batch_size); ++j) idx.push_back(j);
    out.push_back(make_batch(seqs, idx, supervision));
  }
  return out;
}

}  // namespace rulforge
