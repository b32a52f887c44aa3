// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecoref/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "ecoref/error.hpp"

namespace ecoref {

bool BoundingBox::is_valid() const {
  const bool finite = std::isfinite(xmin) && std::isfinite(ymin) && std::isfinite(xmax) &&
                      std::isfinite(ymax);
  return finite && xmin >= 0.0 && ymin >= 0.0 && xmin < xmax && ymin < ymax;
}

void validate_box(const BoundingBox& box) {
  if (!box.is_valid()) {
    throw Error(ErrorKind::kInvalidInput,
                "invalid bounding box (" + std::to_string(box.xmin) + ", " +
                    std::to_string(box.ymin) + ", " + std::to_string(box.xmax) + ", " +
                    std::to_string(box.ymax) + ")");
  }
}

void validate_detection(const Detection& det, int num_classes) {
  if (det.class_id < 1 || det.class_id > num_classes) {
    throw Error(ErrorKind::kInvalidInput, "class_id " + std::to_string(det.class_id) +
                                              " outside label space 1.." +
                                              std::to_string(num_classes));
  }
  if (!(det.confidence >= 0.0 && det.confidence <= 1.0)) {
    throw Error(ErrorKind::kInvalidInput,
                "confidence " + std::to_string(det.confidence) + " outside [0, 1]");
  }
  validate_box(det.box);
}

}  // namespace ecoref

namespace ecoref::scoring {

double iou(const BoundingBox& a, const BoundingBox& b) {
  validate_box(a);
  validate_box(b);
  const double iw = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double ih = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

namespace {

// Stable descending-confidence order of detection indices.
std::vector<std::size_t> rank_by_confidence(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    return dets[l].confidence > dets[r].confidence;
  });
  return order;
}

}  // namespace

MatchResult match_detections(std::span<const Detection> dets,
                             std::span<const GroundTruthObject> gts, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw Error(ErrorKind::kInvalidInput, "iou_threshold must lie in (0, 1]");
  }
  std::unordered_map<std::string_view, std::vector<std::size_t>> gts_by_image;
  for (std::size_t i = 0; i < gts.size(); ++i) gts_by_image[gts[i].image_id].push_back(i);

  std::vector<bool> taken(gts.size(), false);
  MatchResult result;
  result.flags.reserve(dets.size());
  std::size_t matched = 0;

  for (std::size_t d : rank_by_confidence(dets)) {
    const Detection& det = dets[d];
    bool tp = false;
    if (auto it = gts_by_image.find(det.image_id); it != gts_by_image.end()) {
      double best = -1.0;
      std::size_t best_gt = 0;
      for (std::size_t g : it->second) {
        if (taken[g]) continue;
        const double overlap = iou(det.box, gts[g].box);
        if (overlap >= iou_threshold && overlap > best) {
          best = overlap;
          best_gt = g;
        }
      }
      if (best >= 0.0) {
        taken[best_gt] = true;
        ++matched;
        tp = true;
      }
    }
    result.flags.push_back(RankedFlag{det.confidence, tp});
  }
  result.unmatched_gt = gts.size() - matched;
  return result;
}

std::optional<double> average_precision(std::span<const RankedFlag> flags,
                                        std::int64_t num_gt) {
  if (num_gt < 0) throw Error(ErrorKind::kInvalidInput, "num_gt must be non-negative");
  if (num_gt == 0) {
    if (flags.empty()) return std::nullopt;
    return 0.0;
  }

  std::vector<RankedFlag> ranked(flags.begin(), flags.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedFlag& l, const RankedFlag& r) {
    return l.confidence > r.confidence;
  });

  const std::size_t n = ranked.size();
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked[i].is_true_positive ? 1 : 0;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  if (tp > static_cast<std::size_t>(num_gt)) {
    throw Error(ErrorKind::kInvalidInput, "more true positives than ground-truth objects");
  }
  // precision envelope, non-increasing in rank
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double area = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ranked[i].is_true_positive) area += precision[i];
  }
  return area / static_cast<double>(num_gt);
}

double mean_average_precision(std::span<const Detection> dets,
                              std::span<const GroundTruthObject> gts, int num_classes,
                              double iou_threshold) {
  for (const auto& d : dets) validate_detection(d, num_classes);
  for (const auto& g : gts) {
    if (g.class_id < 1 || g.class_id > num_classes) {
      throw Error(ErrorKind::kInvalidInput,
                  "ground truth class_id " + std::to_string(g.class_id) + " outside label space");
    }
    validate_box(g.box);
  }
  if (gts.empty()) throw Error(ErrorKind::kInvalidInput, "ground truth is empty");

  std::map<ClassId, std::vector<GroundTruthObject>> gts_by_class;
  for (const auto& g : gts) gts_by_class[g.class_id].push_back(g);
  std::map<ClassId, std::vector<Detection>> dets_by_class;
  for (const auto& d : dets) {
    if (gts_by_class.count(d.class_id)) dets_by_class[d.class_id].push_back(d);
  }

  double sum = 0.0;
  for (const auto& [cls, class_gts] : gts_by_class) {
    const auto& class_dets = dets_by_class[cls];
    const MatchResult m = match_detections(class_dets, class_gts, iou_threshold);
    sum += average_precision(m.flags, static_cast<std::int64_t>(class_gts.size())).value();
  }
  return sum / static_cast<double>(gts_by_class.size());
}

double final_score(double map_value, double energy_wh) {
  if (!(energy_wh > 0.0) || !std::isfinite(energy_wh)) {
    throw Error(ErrorKind::kInvalidInput,
                "energy must be positive, got " + std::to_string(energy_wh) + " Wh");
  }
  if (!(map_value >= 0.0 && map_value <= 1.0)) {
    throw Error(ErrorKind::kInvalidInput, "mAP must lie in [0, 1]");
  }
  return map_value / energy_wh;
}

ScoreReport make_score_report(std::span<const Detection> dets,
                              std::span<const GroundTruthObject> gts, int num_classes,
                              std::size_t images_total, double energy_wh) {
  ScoreReport report;
  report.map_value = mean_average_precision(dets, gts, num_classes);
  report.energy_wh = energy_wh;
  report.score = final_score(report.map_value, energy_wh);
  std::unordered_set<std::string_view> images;
  for (const auto& d : dets) images.insert(d.image_id);
  report.images_processed = images.size();
  report.images_total = images_total;
  if (report.images_processed > images_total) {
    throw Error(ErrorKind::kInvalidInput, "detections reference more images than exist");
  }
  return report;
}

Track1Report track1_metrics(std::span<const Track1Record> records, double per_image_budget_ms,
                            std::size_t num_total) {
  if (!(per_image_budget_ms > 0.0) || !std::isfinite(per_image_budget_ms)) {
    throw Error(ErrorKind::kInvalidInput, "per-image budget must be positive");
  }
  if (records.size() > num_total) {
    throw Error(ErrorKind::kInvalidInput, std::to_string(records.size()) +
                                              " records exceed total of " +
                                              std::to_string(num_total));
  }
  Track1Report report;
  report.num_total = num_total;
  if (records.empty()) return report;

  const double wall_budget = static_cast<double>(num_total) * per_image_budget_ms;
  double elapsed = 0.0;
  std::size_t correct_classified = 0;
  for (const auto& r : records) {
    if (!std::isfinite(r.latency_ms) || r.latency_ms < 0.0) {
      throw Error(ErrorKind::kInvalidInput, "latency for " + r.image_id + " must be finite and >= 0");
    }
    elapsed += r.latency_ms;
    if (elapsed <= wall_budget) {
      ++report.num_classified;
      correct_classified += r.correct ? 1 : 0;
    }
  }

  report.mean_latency_ms = elapsed / static_cast<double>(records.size());
  report.test_metric = num_total == 0 ? 0.0
                                      : static_cast<double>(correct_classified) /
                                            static_cast<double>(num_total);
  if (report.num_classified > 0) {
    report.accuracy_on_classified =
        static_cast<double>(correct_classified) / static_cast<double>(report.num_classified);
  }
  const double denom = std::max(elapsed, wall_budget);
  report.accuracy_per_time = denom > 0.0 ? report.accuracy_on_classified / denom : 0.0;
  return report;
}

ScoreStatistics score_statistics(std::span<const double> scores, double bin_width) {
  if (scores.empty()) throw Error(ErrorKind::kInvalidInput, "no scores");
  if (!(bin_width > 0.0)) throw Error(ErrorKind::kInvalidInput, "bin width must be positive");

  const double n = static_cast<double>(scores.size());
  ScoreStatistics stats;
  stats.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double sq = 0.0;
  for (double s : scores) sq += (s - stats.mean) * (s - stats.mean);
  stats.stddev = std::sqrt(sq / n);

  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  stats.median = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);

  // sorted input makes equal bins contiguous; first longest run is the lowest bin
  long best_bin = 0;
  std::size_t best_count = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const long bin = static_cast<long>(std::floor(sorted[i] / bin_width));
    std::size_t j = i;
    while (j < sorted.size() && static_cast<long>(std::floor(sorted[j] / bin_width)) == bin) ++j;
    if (j - i > best_count) {
      best_count = j - i;
      best_bin = bin;
    }
    i = j;
  }
  stats.mode = (static_cast<double>(best_bin) + 0.5) * bin_width;
  return stats;
}

}  // namespace ecoref::scoring
