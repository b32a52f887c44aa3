// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0
//
// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failing criteria.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "champions.hpp"
#include "ecoref/cli.hpp"
#include "ecoref/energy.hpp"
#include "ecoref/scoring.hpp"
#include "images.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"

using namespace ecoref;
using namespace ecoref::testing;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Verdict champion_table() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_score = 0.0, worst_ratio = 0.0;
  const double base = scoring::final_score(kChampions[0].map_value, kChampions[0].energy_wh);
  for (const auto& row : kChampions) {
    const double s = scoring::final_score(row.map_value, row.energy_wh);
    worst_score = std::max(worst_score, std::abs(s - row.score));
    worst_ratio = std::max(worst_ratio, std::abs(s / base - row.ratio));
  }

  // The same rows through persisted reports and the `report` command.
  const auto dir = scratch_dir("acceptance_champions");
  std::vector<std::string> args{"report", "--csv"};
  for (const auto& row : kChampions) {
    const auto path = dir / (std::string(row.label) + ".report");
    std::ofstream out(path);
    const double s = scoring::final_score(row.map_value, row.energy_wh);
    formats::write_score_report(out, scoring::ScoreReport{row.map_value, row.energy_wh, s, 0, 0},
                                {{"label", row.label}});
    args.push_back(path.string());
  }
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  std::size_t matched = 0;
  for (const auto& row : kChampions) {
    if (!std::getline(lines, line)) break;
    const auto last = line.rfind(',');
    const auto prev = line.rfind(',', last - 1);
    const double printed_score = std::strtod(line.c_str() + prev + 1, nullptr);
    const double printed_ratio = std::strtod(line.c_str() + last + 1, nullptr);
    if (line.rfind(row.label, 0) == 0 && std::abs(printed_score - row.score) <= 5e-4 &&
        std::abs(printed_ratio - row.ratio) <= 0.1) {
      ++matched;
    }
  }
  const double elapsed = seconds_since(t0);
  const bool pass = worst_score <= 5e-4 && worst_ratio <= 0.1 && code == 0 && matched == 5 && elapsed < 1.0;
  return {pass, "max |score err| " + fmt("%.2e", worst_score) + ", max |ratio err| " + fmt("%.3f", worst_ratio) +
                    ", report rows ok " + std::to_string(matched) + "/5, " + fmt("%.3f", elapsed) + " s"};
}

Verdict winner_tables() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t ok = 0;
  for (const auto& row : kWinners) {
    const double err = std::abs(scoring::final_score(row.map_value, row.energy_wh) - row.score);
    worst = std::max(worst, err);
    if (err <= 5e-4) ++ok;
  }
  const double elapsed = seconds_since(t0);
  return {ok == 7 && elapsed < 1.0, std::to_string(ok) + "/7 rows, max |err| " + fmt("%.2e", worst) + ", " +
                                        fmt("%.3f", elapsed) + " s"};
}

Verdict track1_table() {
  std::vector<scoring::Track1Record> validation(20000);
  for (std::size_t i = 0; i < validation.size(); ++i) validation[i] = {std::to_string(i), 1, 28.0, i < 12941};
  const auto v = scoring::track1_metrics(validation, 30.0, validation.size());
  std::vector<scoring::Track1Record> holdout(10927);
  for (std::size_t i = 0; i < holdout.size(); ++i) holdout[i] = {std::to_string(i), 1, 27.0, i < 7941};
  const auto h = scoring::track1_metrics(holdout, 30.0, holdout.size());
  const double ev = std::abs(v.accuracy_per_time / 1.078e-6 - 1.0);
  const double eh = std::abs(h.accuracy_per_time / 2.217e-6 - 1.0);
  const bool pass = ev < 0.01 && eh < 0.01 && std::abs(v.test_metric - 0.64705) < 1e-12 &&
                    v.num_classified == 20000 && h.num_classified == 10927 &&
                    std::abs(h.accuracy_on_classified - 0.72673) < 5e-6;
  return {pass, "validation " + fmt("%.4g", v.accuracy_per_time) + " /ms (" + fmt("%.3f%%", 100 * ev) +
                    "), holdout " + fmt("%.4g", h.accuracy_per_time) + " /ms (" + fmt("%.3f%%", 100 * eh) + ")"};
}

BoundingBox random_box(std::mt19937_64& rng, int span) {
  const int x0 = static_cast<int>(rng() % span), y0 = static_cast<int>(rng() % span);
  const int w = 1 + static_cast<int>(rng() % (span - x0)), h = 1 + static_cast<int>(rng() % (span - y0));
  return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x0 + w),
          static_cast<double>(y0 + h)};
}

Verdict map_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20260);
  const char* images[] = {"i0", "i1", "i2"};
  const std::size_t cases = 5000;
  std::size_t mismatches = 0;
  double worst = 0.0;
  for (std::size_t trial = 0; trial < cases; ++trial) {
    const int num_images = 1 + static_cast<int>(rng() % 3);
    const int num_classes = 1 + static_cast<int>(rng() % 2);
    std::vector<GroundTruthObject> gts;
    std::vector<Detection> dets;
    for (int c = 1; c <= num_classes; ++c) {
      const int ng = static_cast<int>(rng() % 4);
      for (int k = 0; k < ng; ++k) gts.push_back({images[rng() % num_images], c, random_box(rng, 6)});
      const int nd = static_cast<int>(rng() % 4);
      for (int k = 0; k < nd; ++k) {
        dets.push_back({images[rng() % num_images], c, static_cast<double>(rng() % 5) / 4.0, random_box(rng, 6)});
      }
    }
    if (gts.empty()) gts.push_back({images[0], 1, random_box(rng, 6)});
    const double err = std::abs(scoring::mean_average_precision(dets, gts, num_classes) -
                                oracle::brute_force_map(dets, gts, num_classes));
    worst = std::max(worst, err);
    if (err > 1e-12) ++mismatches;
  }
  const double elapsed = seconds_since(t0);
  return {mismatches == 0 && elapsed < 30.0, std::to_string(cases) + " instances, " + std::to_string(mismatches) +
                                                 " mismatches, max |err| " + fmt("%.1e", worst) + ", " +
                                                 fmt("%.2f", elapsed) + " s"};
}

Verdict end_to_end() {
  const auto r = run_end_to_end(20000, "acceptance_e2e");
  const double rel = r.analytic_wh > 0.0 ? std::abs(r.energy_wh / r.analytic_wh - 1.0) : 1.0;
  const bool pass = r.summary.completed && r.summary.images_fetched == 20000 && r.map_value == 1.0 && rel < 0.01 &&
                    r.wall_s < 600.0;
  std::string detail = "images " + std::to_string(r.summary.images_fetched) + ", mAP " + fmt("%.17g", r.map_value) +
                       ", energy " + fmt("%.6f", r.energy_wh) + " Wh vs " + fmt("%.6f", r.analytic_wh) +
                       " Wh analytic (" + fmt("%.2e", rel) + "), window " + fmt("%.2f", r.window_s) + " s, wall " +
                       fmt("%.1f", r.wall_s) + " s";
  if (!r.summary.error.empty()) detail += ", error: " + r.summary.error;
  return {pass, detail};
}

Verdict deadline_fuzz() {
  const auto r = run_deadline_fuzz(12000, 7);
  const bool pass = r.cases >= 10000 && r.violations == 0 && r.liveness_failures == 0 && r.window_failures == 0;
  std::string detail = std::to_string(r.cases) + " cases, " + std::to_string(r.posts) + " posts, " +
                       std::to_string(r.violations) + " violations, " + std::to_string(r.liveness_failures) +
                       " refused in-time posts, " + std::to_string(r.window_failures) + " window errors";
  if (!r.first_failure.empty()) detail += "; first: " + r.first_failure;
  return {pass, detail};
}

Verdict energy_analytics() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  auto rel = [](double got, double want) { return std::abs(got - want) / std::abs(want); };
  std::size_t windows = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const double t_end = 10.0 + 600.0 * u(rng);
    const double rate = 0.5 + 20.0 * u(rng);
    const double w0 = 0.5 + 10.0 * u(rng);
    const double slope = (u(rng) - 0.5) * 0.02;  // stays positive over the trace
    std::vector<energy::PowerSample> constant, ramp;
    for (double t = 0.0; t <= t_end; t += 1.0 / rate) {
      constant.push_back({t, w0});
      ramp.push_back({t, w0 + 4.0 + slope * t});
    }
    const double a = t_end * 0.4 * u(rng);
    const double b = a + (t_end - a) * (0.2 + 0.8 * u(rng));
    const double c = a + (b - a) * u(rng);
    const double want_const = w0 * (b - a) / 3600.0;
    const double want_ramp = ((w0 + 4.0) * (b - a) + slope * (b * b - a * a) / 2.0) / 3600.0;
    worst = std::max(worst, rel(energy::integrate_energy(constant, a, b).energy_wh, want_const));
    worst = std::max(worst, rel(energy::integrate_energy(ramp, a, b).energy_wh, want_ramp));
    const double split = energy::integrate_energy(ramp, a, c).energy_wh + energy::integrate_energy(ramp, c, b).energy_wh;
    worst = std::max(worst, rel(split, energy::integrate_energy(ramp, a, b).energy_wh));
    windows += 3;
  }
  return {worst <= 1e-9, std::to_string(windows) + " windows, max relative error " + fmt("%.2e", worst)};
}

Verdict batch_integrity() {
  const auto m = fixture_manifest("acceptance_batches", 450, 24, 24, 31);
  const auto r = run_batch_integrity(m, 150, 11);
  std::string detail = std::to_string(r.trials) + " trials, " + std::to_string(r.entries_checked) + " entries, " +
                       std::to_string(r.mismatches) + " mismatches";
  if (!r.first_failure.empty()) detail += "; first: " + r.first_failure;
  return {r.trials >= 100 && r.mismatches == 0, detail};
}

Verdict dedup() {
  using dataset::kDefaultDuplicateThreshold;
  std::mt19937_64 rng(4);
  std::size_t exact_ok = 0, exact_total = 0, rescale_ok = 0, rescale_total = 0;
  double worst_rescale = 0.0;
  for (int size : {30, 48, 60, 120}) {
    dataset::FixtureSpec spec;
    spec.num_images = 5;
    spec.width = spec.height = size;
    spec.seed = static_cast<std::uint64_t>(size);
    auto corpus = dataset::render_fixture_images(spec, nullptr);
    const std::size_t originals = corpus.size();
    for (std::size_t i = 0; i < originals; ++i) {
      corpus.push_back(corpus[i]);
      corpus.push_back(upscale2(corpus[i]));
      if (size % 60 == 0) corpus.push_back(downscale2(corpus[i]));
    }
    const auto found = dataset::find_duplicates(corpus, kDefaultDuplicateThreshold);
    auto reported = [&](std::size_t i, std::size_t j) {
      return std::find(found.begin(), found.end(), dataset::IndexPair{i, j}) != found.end();
    };
    std::size_t at = originals;
    for (std::size_t i = 0; i < originals; ++i) {
      ++exact_total;
      if (dataset::thumbnail_distance(corpus[i], corpus[at]) == 0.0 && reported(i, at)) ++exact_ok;
      ++at;
      const std::size_t variants = size % 60 == 0 ? 2 : 1;
      for (std::size_t k = 0; k < variants; ++k, ++at) {
        ++rescale_total;
        worst_rescale = std::max(worst_rescale, dataset::thumbnail_distance(corpus[i], corpus[at]));
        if (reported(i, at)) ++rescale_ok;
      }
    }
  }
  dataset::FixtureSpec distinct;
  distinct.num_images = 50;
  distinct.seed = 5;
  const auto fifty = dataset::render_fixture_images(distinct, nullptr);
  const auto false_pairs = dataset::find_duplicates(fifty, kDefaultDuplicateThreshold).size();
  const bool pass = exact_ok == exact_total && rescale_ok == rescale_total && false_pairs == 0;
  return {pass, "exact " + std::to_string(exact_ok) + "/" + std::to_string(exact_total) + " at distance 0, 2x " +
                    std::to_string(rescale_ok) + "/" + std::to_string(rescale_total) + " (max distance " +
                    fmt("%.1f", worst_rescale) + " <= " + fmt("%.0f", kDefaultDuplicateThreshold) + "), " +
                    std::to_string(false_pairs) + " pairs among 50 distinct fixtures"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"champion score table", champion_table},
      {"winner score tables", winner_tables},
      {"track1 winner table", track1_table},
      {"mAP equals brute-force oracle", map_oracle},
      {"end-to-end oracle run, 20000 images", end_to_end},
      {"deadline fuzz", deadline_fuzz},
      {"energy analytics", energy_analytics},
      {"batch integrity", batch_integrity},
      {"near-duplicate detection", dedup},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << v.detail
              << std::endl;
  }
  std::cout << criteria.size() - failed << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed;
}
