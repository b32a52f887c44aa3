// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecoref/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecoref/client.hpp"
#include "ecoref/dataset.hpp"
#include "ecoref/digest.hpp"
#include "ecoref/energy.hpp"
#include "ecoref/error.hpp"
#include "ecoref/formats.hpp"
#include "ecoref/http_server.hpp"
#include "ecoref/referee.hpp"
#include "ecoref/scoring.hpp"

namespace ecoref::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_shutdown{false};

extern "C" void on_signal(int) { g_shutdown.store(true); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

// Writes `text` to --out when given, otherwise to stdout.
void emit(const std::string& out_path, std::ostream& out, const std::string& text) {
  if (out_path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  f << text;
  if (!f.flush()) throw Error(ErrorKind::kIo, "cannot write " + out_path);
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

struct ServeArgs {
  std::string config;
  int port = -1;
};

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  auto cfg = referee::load_config(a.config);
  if (a.port >= 0) cfg.port = a.port;
  auto referee = referee::Referee::from_config(cfg, std::make_shared<SteadyClock>());
  referee::HttpServer server(*referee);

  g_shutdown.store(false);
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  const int port = server.start(cfg.host, cfg.port);
  out << "ecoref referee listening on http://" << cfg.host << ':' << port << " (" << referee->image_count()
      << " images, " << cfg.session_seconds << " s sessions, batch_max " << cfg.batch_max << ")" << std::endl;

  while (!g_shutdown.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);

  server.stop();
  for (const auto& r : referee->close_all()) {
    out << "closed session for team " << r.team_id << ": map " << fixed(r.score.map_value, 6) << ", "
        << fixed(r.score.energy_wh, 6) << " Wh, score " << fixed(r.score.score, 4);
    if (!r.persisted_to.empty()) out << " -> " << r.persisted_to.string();
    out << '\n';
  }
  out << "referee stopped" << std::endl;
  return 0;
}

struct SimulateArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string team;
  std::string secret;
  std::string manifest;
  std::string referee_config;
  std::string profile;
  std::string strategy;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> batch_size;
  std::optional<double> drop_prob, flip_prob, jitter, delay_ms, fraction;
  bool no_pipeline = false;
  bool no_logout = false;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  client::ContestantProfile p;
  if (!a.profile.empty()) p = client::load_profile(a.profile);
  if (!a.strategy.empty()) {
    const auto base = client::ContestantProfile::preset(client::parse_strategy(a.strategy));
    const auto seed = p.seed;
    p = base;
    p.seed = seed;
  }
  if (a.seed) p.seed = *a.seed;
  if (a.batch_size) p.batch_size = *a.batch_size;
  if (a.drop_prob) p.drop_prob = *a.drop_prob;
  if (a.flip_prob) p.label_flip_prob = *a.flip_prob;
  if (a.jitter) p.box_jitter_px = *a.jitter;
  if (a.delay_ms) p.per_image_delay_ms = *a.delay_ms;
  if (a.fraction) p.image_fraction = *a.fraction;
  if (a.no_pipeline) p.pipeline = false;
  if (a.no_logout) p.logout = false;
  p.validate();

  std::unique_ptr<referee::Referee> embedded;
  std::unique_ptr<referee::HttpServer> server;
  client::Credentials creds{a.team, a.secret};
  std::string host = a.host;
  int port = a.port;
  dataset::DatasetManifest answers;
  if (!a.referee_config.empty()) {
    auto cfg = referee::load_config(a.referee_config);
    embedded = referee::Referee::from_config(cfg, std::make_shared<SteadyClock>());
    server = std::make_unique<referee::HttpServer>(*embedded);
    host = "127.0.0.1";
    port = server->start(host, 0);
    if (creds.team_id.empty()) creds = {cfg.teams.front().team_id, cfg.teams.front().secret};
    answers = embedded->manifest();
  }
  if (!a.manifest.empty()) answers = dataset::load_manifest(a.manifest);
  if (answers.images.empty()) throw Error(ErrorKind::kInvalidInput, "simulate needs --manifest or --referee");
  if (creds.team_id.empty()) throw Error(ErrorKind::kInvalidInput, "simulate needs --team and --secret");

  const auto summary = client::run_contestant(p, host, port, creds, answers);

  json j{{"team", creds.team_id},
         {"strategy", std::string(client::to_string(p.strategy))},
         {"seed", p.seed},
         {"images_fetched", summary.images_fetched},
         {"detections_posted", summary.detections_posted},
         {"detections_rejected", summary.detections_rejected},
         {"elapsed_s", summary.elapsed_s},
         {"completed", summary.completed},
         {"error", summary.error}};
  out << "team " << creds.team_id << " (" << client::to_string(p.strategy) << ", seed " << p.seed << ")\n"
      << "images fetched       " << summary.images_fetched << '\n'
      << "detections posted    " << summary.detections_posted << '\n'
      << "detections rejected  " << summary.detections_rejected << '\n'
      << "elapsed              " << fixed(summary.elapsed_s, 3) << " s\n"
      << "completed            " << (summary.completed ? "yes" : "no") << '\n';
  if (!summary.error.empty()) out << "error                " << summary.error << '\n';
  if (summary.score) {
    const auto& s = *summary.score;
    j["map_value"] = s.report.map_value;
    j["energy_wh"] = s.report.energy_wh;
    j["score"] = s.report.score;
    j["window_s"] = s.window_s;
    out << "map_value            " << fixed(s.report.map_value, 6) << '\n'
        << "energy_wh            " << fixed(s.report.energy_wh, 6) << '\n'
        << "score                " << fixed(s.report.score, 4) << '\n';
  }
  if (!a.out.empty()) emit(a.out, out, j.dump(2) + "\n");
  if (server) {
    server->stop();
    embedded->close_all();
  }
  if (!summary.completed) throw Error(ErrorKind::kNetwork, "contestant run incomplete: " + summary.error);
  return 0;
}

struct ScoreArgs {
  std::string detections;
  std::string manifest;
  std::optional<double> energy_wh;
  std::string trace;
  std::optional<double> window_start, window_end;
  std::string label;
  std::string format = "text";
  std::string out;
};

int cmd_score(const ScoreArgs& a, std::ostream& out) {
  const auto manifest = dataset::load_manifest(a.manifest);
  const auto body = read_file(a.detections);
  const auto dets = formats::parse_detections(body, &manifest, a.detections);

  double wh = 0.0;
  std::vector<std::pair<std::string, std::string>> meta;
  if (!a.label.empty()) meta.emplace_back("label", a.label);
  meta.emplace_back("detections", a.detections);
  if (a.energy_wh) {
    if (!a.trace.empty()) throw Error(ErrorKind::kInvalidInput, "give either --energy-wh or --trace, not both");
    wh = *a.energy_wh;
  } else if (!a.trace.empty()) {
    const auto samples = energy::load_power_trace(a.trace);
    if (samples.empty()) throw Error(ErrorKind::kParse, a.trace + ": trace has no samples");
    const double ws = a.window_start.value_or(samples.front().t_seconds);
    const double we = a.window_end.value_or(samples.back().t_seconds);
    const auto e = energy::integrate_energy(samples, ws, we);
    wh = e.energy_wh;
    meta.emplace_back("trace", a.trace);
    meta.emplace_back("window_s", formats::exact(we - ws));
  } else {
    throw Error(ErrorKind::kInvalidInput, "score needs --energy-wh or --trace");
  }

  const auto report =
      scoring::make_score_report(dets, manifest.ground_truth, manifest.num_classes(), manifest.images.size(), wh);
  if (a.format == "json") {
    out << formats::report_json(report) << '\n';
  } else {
    out << "map_value         " << fixed(report.map_value, 6) << '\n'
        << "energy_wh         " << fixed(report.energy_wh, 6) << '\n'
        << "score             " << fixed(report.score, 4) << '\n'
        << "images_processed  " << report.images_processed << " / " << report.images_total << '\n';
  }
  if (!a.out.empty()) {
    std::ostringstream persisted;
    formats::write_score_report(persisted, report, meta);
    emit(a.out, out, persisted.str());
  }
  return 0;
}

struct Track1Args {
  std::string log;
  double budget_ms = scoring::kDefaultTrack1BudgetMs;
  std::optional<std::size_t> total;
  std::string format = "text";
  std::string out;
};

int cmd_track1(const Track1Args& a, std::ostream& out) {
  std::ifstream in(a.log);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + a.log);
  const auto records = formats::parse_track1_log(in, a.log);
  const auto r = scoring::track1_metrics(records, a.budget_ms, a.total.value_or(records.size()));
  if (a.format == "json") {
    out << formats::track1_json(r) << '\n';
  } else {
    char per_time[32];
    std::snprintf(per_time, sizeof per_time, "%.4g", r.accuracy_per_time);
    out << "images               " << r.num_classified << " classified of " << r.num_total << '\n'
        << "mean_latency_ms      " << fixed(r.mean_latency_ms, 3) << '\n'
        << "test_metric          " << fixed(r.test_metric, 5) << '\n'
        << "accuracy_classified  " << fixed(r.accuracy_on_classified, 5) << '\n'
        << "accuracy_per_time    " << per_time << " /ms\n";
  }
  if (!a.out.empty()) emit(a.out, out, formats::track1_json(r) + "\n");
  return 0;
}

struct Corpus {
  std::vector<std::string> labels;
  std::vector<dataset::PixelMatrix> images;
};

Corpus load_corpus(const fs::path& path) {
  Corpus c;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      c.labels.push_back(f.filename().string());
      c.images.push_back(dataset::read_image(f));
    }
  } else if (path.extension() == ".json") {
    const auto m = dataset::load_manifest(path);
    for (std::size_t i = 0; i < m.images.size(); ++i) {
      c.labels.push_back(m.images[i].id);
      c.images.push_back(dataset::read_image(m.image_path(i)));
    }
  } else {
    c.labels.push_back(path.filename().string());
    c.images.push_back(dataset::read_image(path));
  }
  return c;
}

struct DedupArgs {
  std::vector<std::string> inputs;
  std::string reference;
  double threshold = dataset::kDefaultDuplicateThreshold;
  unsigned threads = 0;
  bool md5 = false;
  std::string out;
};

int cmd_dedup(const DedupArgs& a, std::ostream& out) {
  std::ostringstream csv;
  if (a.md5) {
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& f : a.inputs) groups[md5_hex(read_file(f))].push_back(f);
    csv << "md5,files\n";
    std::size_t dup_groups = 0;
    for (const auto& [digest, files] : groups) {
      if (files.size() < 2) continue;
      ++dup_groups;
      csv << digest;
      for (const auto& f : files) csv << ',' << f;
      csv << '\n';
    }
    out << dup_groups << " duplicate group(s) among " << a.inputs.size() << " file(s)\n";
    emit(a.out, out, csv.str());
    return 0;
  }

  Corpus corpus;
  for (const auto& in : a.inputs) {
    auto part = load_corpus(in);
    corpus.labels.insert(corpus.labels.end(), part.labels.begin(), part.labels.end());
    std::move(part.images.begin(), part.images.end(), std::back_inserter(corpus.images));
  }
  csv << "first,second,distance\n";
  std::size_t pairs = 0;
  if (a.reference.empty()) {
    for (const auto& [i, j] : dataset::find_duplicates(corpus.images, a.threshold, a.threads)) {
      csv << corpus.labels[i] << ',' << corpus.labels[j] << ','
          << fixed(dataset::thumbnail_distance(corpus.images[i], corpus.images[j]), 3) << '\n';
      ++pairs;
    }
  } else {
    const auto ref = load_corpus(a.reference);
    for (const auto& [i, j] : dataset::find_cross_duplicates(corpus.images, ref.images, a.threshold, a.threads)) {
      csv << corpus.labels[i] << ',' << ref.labels[j] << ','
          << fixed(dataset::thumbnail_distance(corpus.images[i], ref.images[j]), 3) << '\n';
      ++pairs;
    }
  }
  if (!a.out.empty()) {
    out << pairs << " near-duplicate pair(s) at threshold " << a.threshold << " among " << corpus.images.size()
        << " image(s)\n";
  }
  emit(a.out, out, csv.str());
  return 0;
}

int cmd_fixture(const dataset::FixtureSpec& spec, const std::string& dir, std::ostream& out) {
  const auto m = dataset::generate_fixture(spec, dir);
  out << "wrote " << m.images.size() << " images with " << m.ground_truth.size() << " objects in "
      << m.num_classes() << " classes to " << (fs::path(dir) / "manifest.json").string() << '\n';
  return 0;
}

struct ReportArgs {
  std::vector<std::string> reports;
  bool csv = false;
  double bin_width = scoring::kDefaultModeBinWidth;
  std::string out;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  std::vector<formats::PersistedReport> rows;
  for (const auto& path : a.reports) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
    auto r = formats::read_score_report(in, path);
    if (r.label.empty()) r.label = fs::path(path).stem().string();
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw Error(ErrorKind::kInvalidInput, "report needs at least one score report");
  const double base = rows.front().report.score;

  std::ostringstream text;
  if (a.csv) {
    text << "label,map_value,energy_wh,score,ratio\n";
    for (const auto& r : rows) {
      text << r.label << ',' << formats::exact(r.report.map_value) << ',' << formats::exact(r.report.energy_wh)
           << ',' << fixed(r.report.score, 4) << ',' << (base > 0.0 ? fixed(r.report.score / base, 1) : "nan")
           << '\n';
    }
  } else {
    std::size_t width = 5;
    for (const auto& r : rows) width = std::max(width, r.label.size());
    text << std::left << std::setw(static_cast<int>(width)) << "label" << "  " << std::right << std::setw(9)
         << "mAP" << "  " << std::setw(9) << "energy_Wh" << "  " << std::setw(8) << "score" << "  "
         << std::setw(6) << "ratio" << '\n';
    for (const auto& r : rows) {
      text << std::left << std::setw(static_cast<int>(width)) << r.label << "  " << std::right << std::setw(9)
           << fixed(r.report.map_value, 5) << "  " << std::setw(9) << fixed(r.report.energy_wh, 3) << "  "
           << std::setw(8) << fixed(r.report.score, 4) << "  " << std::setw(6)
           << (base > 0.0 ? fixed(r.report.score / base, 1) : "nan") << '\n';
    }
  }
  if (rows.size() >= 2) {
    std::vector<double> scores;
    for (const auto& r : rows) scores.push_back(r.report.score);
    const auto st = scoring::score_statistics(scores, a.bin_width);
    if (a.csv) {
      text << "\nstatistic,value\nmean," << formats::exact(st.mean) << "\nmedian," << formats::exact(st.median)
           << "\nmode," << formats::exact(st.mode) << "\nstddev," << formats::exact(st.stddev) << '\n';
    } else {
      text << "\n" << scores.size() << " scores, mode bin width " << a.bin_width << '\n'
           << "  mean    " << fixed(st.mean, 4) << '\n'
           << "  median  " << fixed(st.median, 4) << '\n'
           << "  mode    " << fixed(st.mode, 4) << '\n'
           << "  stddev  " << fixed(st.stddev, 4) << '\n';
    }
  }
  emit(a.out, out, text.str());
  return 0;
}

}  // namespace

void request_shutdown() { g_shutdown.store(true); }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ecoref: energy-aware recognition benchmark referee", "ecoref"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ecoref 0.1.0");

  ServeArgs serve;
  auto* s_serve = app.add_subcommand("serve", "Run the HTTP referee");
  s_serve->add_option("-c,--config", serve.config, "Referee config (JSON)")->required();
  s_serve->add_option("--port", serve.port, "Override the configured port (0 = any free port)");

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "Run a mock contestant against a referee");
  s_sim->add_option("--host", sim.host, "Referee host");
  s_sim->add_option("--port", sim.port, "Referee port");
  s_sim->add_option("--team", sim.team, "Team id");
  s_sim->add_option("--secret", sim.secret, "Team secret");
  s_sim->add_option("--manifest", sim.manifest, "Manifest with the answers the contestant 'detects'");
  s_sim->add_option("--referee", sim.referee_config, "Start an in-process referee from this config");
  s_sim->add_option("-c,--config", sim.profile, "Contestant profile (JSON)");
  s_sim->add_option("--strategy", sim.strategy, "oracle | noisy | lazy | slow");
  s_sim->add_option("--seed", sim.seed, "Noise seed");
  s_sim->add_option("--batch-size", sim.batch_size, "Images per batch request");
  s_sim->add_option("--drop-prob", sim.drop_prob, "Probability of missing an object");
  s_sim->add_option("--flip-prob", sim.flip_prob, "Probability of a wrong label");
  s_sim->add_option("--jitter", sim.jitter, "Uniform box jitter in pixels");
  s_sim->add_option("--delay-ms", sim.delay_ms, "Processing delay per image");
  s_sim->add_option("--fraction", sim.fraction, "Share of images to process");
  s_sim->add_flag("--no-pipeline", sim.no_pipeline, "Fetch and post sequentially");
  s_sim->add_flag("--no-logout", sim.no_logout, "Leave the session to time out");
  s_sim->add_option("-o,--out", sim.out, "Write the run summary as JSON");

  ScoreArgs score;
  auto* s_score = app.add_subcommand("score", "Score a detections file offline");
  s_score->add_option("-d,--detections", score.detections, "Detection rows or JSON array")->required();
  s_score->add_option("-m,--manifest", score.manifest, "Dataset manifest with ground truth")->required();
  s_score->add_option("--energy-wh", score.energy_wh, "Measured energy in Wh");
  s_score->add_option("--trace", score.trace, "Power trace (t_seconds,watts)");
  s_score->add_option("--window-start", score.window_start, "Integration window start (s)");
  s_score->add_option("--window-end", score.window_end, "Integration window end (s)");
  s_score->add_option("--label", score.label, "Label stored in the report");
  s_score->add_option("--format", score.format, "text | json")->check(CLI::IsMember({"text", "json"}));
  s_score->add_option("-o,--out", score.out, "Persist the report (key=value)");

  Track1Args t1;
  auto* s_t1 = app.add_subcommand("track1", "Track-1 wall-time metrics from a per-image log");
  s_t1->add_option("-l,--log", t1.log, "CSV log: image_id,predicted_class,latency_ms,correct")->required();
  s_t1->add_option("--budget-ms", t1.budget_ms, "Per-image time budget in ms");
  s_t1->add_option("--total", t1.total, "Images in the test set (default: log length)");
  s_t1->add_option("--format", t1.format, "text | json")->check(CLI::IsMember({"text", "json"}));
  s_t1->add_option("-o,--out", t1.out, "Write the metrics as JSON");

  DedupArgs dd;
  auto* s_dd = app.add_subcommand("dedup", "Find near-duplicate images or identical files");
  s_dd->add_option("inputs", dd.inputs, "Image directories, manifests or files")->required();
  s_dd->add_option("--reference", dd.reference, "Compare against this corpus instead of within inputs");
  s_dd->add_option("--threshold", dd.threshold, "Maximum thumbnail L2 distance");
  s_dd->add_option("--threads", dd.threads, "Worker threads (0 = all cores)");
  s_dd->add_flag("--md5", dd.md5, "Group input files by MD5 instead");
  s_dd->add_option("-o,--out", dd.out, "Write pairs as CSV");

  dataset::FixtureSpec fx;
  std::string fx_dir;
  auto* s_fx = app.add_subcommand("fixture", "Generate a synthetic dataset");
  s_fx->add_option("-o,--out", fx_dir, "Output directory")->required();
  s_fx->add_option("--images", fx.num_images, "Number of images");
  s_fx->add_option("--classes", fx.num_classes, "Number of classes");
  s_fx->add_option("--width", fx.width, "Image width");
  s_fx->add_option("--height", fx.height, "Image height");
  s_fx->add_option("--channels", fx.channels, "1 or 3")->check(CLI::IsMember({1, 3}));
  s_fx->add_option("--min-objects", fx.min_objects, "Minimum objects per image");
  s_fx->add_option("--max-objects", fx.max_objects, "Maximum objects per image");
  s_fx->add_option("--seed", fx.seed, "Generator seed");

  ReportArgs rep;
  auto* s_rep = app.add_subcommand("report", "Compare persisted score reports");
  s_rep->add_option("reports", rep.reports, "Report files; the first is the ratio baseline")->required();
  s_rep->add_flag("--csv", rep.csv, "CSV instead of a text table");
  s_rep->add_option("--bin-width", rep.bin_width, "Histogram bin width for the mode");
  s_rep->add_option("-o,--out", rep.out, "Write the table to a file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*s_serve) return cmd_serve(serve, out);
    if (*s_sim) return cmd_simulate(sim, out);
    if (*s_score) return cmd_score(score, out);
    if (*s_t1) return cmd_track1(t1, out);
    if (*s_dd) return cmd_dedup(dd, out);
    if (*s_fx) return cmd_fixture(fx, fx_dir, out);
    if (*s_rep) return cmd_report(rep, out);
  } catch (const Error& e) {
    err << "error[" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error[" << to_string(ErrorKind::kInvalidInput) << "]: " << e.what() << '\n';
    return exit_code(ErrorKind::kInvalidInput);
  }
  return 1;
}

}  // namespace ecoref::cli
