// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecoref/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <json.hpp>

#include "ecoref/error.hpp"

namespace ecoref::dataset {

using nlohmann::json;

std::optional<std::size_t> DatasetManifest::index_of(std::string_view image_id) const {
  if (index_.size() != images.size()) {
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (images[i].id == image_id) return i;
    }
    return std::nullopt;
  }
  const auto it = index_.find(std::string(image_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void DatasetManifest::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < images.size(); ++i) index_.emplace(images[i].id, i);
}

std::string content_type_for(const std::filesystem::path& file) {
  std::string ext = file.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ppm") return "image/x-portable-pixmap";
  if (ext == ".pgm") return "image/x-portable-graymap";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

std::vector<std::string> default_class_labels(int count) {
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(count));
  char buf[32];
  for (int k = 1; k <= count; ++k) {
    std::snprintf(buf, sizeof buf, "class_%03d", k);
    labels.emplace_back(buf);
  }
  return labels;
}

void validate_manifest(const DatasetManifest& m, bool check_files) {
  if (m.images.empty()) throw Error(ErrorKind::kInvalidInput, "manifest lists no images");
  if (m.classes.empty()) throw Error(ErrorKind::kInvalidInput, "manifest label space is empty");
  std::unordered_set<std::string_view> ids;
  for (std::size_t i = 0; i < m.images.size(); ++i) {
    const auto& img = m.images[i];
    if (img.id.empty()) throw Error(ErrorKind::kInvalidInput, "image " + std::to_string(i) + " has an empty id");
    if (std::any_of(img.id.begin(), img.id.end(), [](unsigned char c) { return std::isspace(c); })) {
      throw Error(ErrorKind::kInvalidInput, "image id '" + img.id + "' contains whitespace");
    }
    if (!ids.insert(img.id).second) throw Error(ErrorKind::kInvalidInput, "duplicate image id '" + img.id + "'");
    if (check_files && !std::filesystem::is_regular_file(m.image_path(i))) {
      throw Error(ErrorKind::kIo, "image '" + img.id + "' file not found: " + m.image_path(i).string());
    }
  }
  for (const auto& g : m.ground_truth) {
    if (!ids.count(g.image_id)) {
      throw Error(ErrorKind::kInvalidInput, "annotation references unknown image '" + g.image_id + "'");
    }
    if (g.class_id < 1 || g.class_id > m.num_classes()) {
      throw Error(ErrorKind::kInvalidInput, "annotation on '" + g.image_id + "' has unknown class " +
                                                std::to_string(g.class_id));
    }
    if (!g.box.is_valid()) {
      throw Error(ErrorKind::kInvalidInput, "annotation on '" + g.image_id + "' has an invalid box");
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  try {
    const json doc = json::parse(in);
    if (doc.contains("classes")) {
      m.classes = doc.at("classes").get<std::vector<std::string>>();
    } else {
      m.classes = default_class_labels(doc.value("num_classes", kDefaultNumClasses));
    }
    for (const auto& row : doc.at("images")) {
      ImageEntry e;
      e.id = row.at("id").get<std::string>();
      e.file = row.at("file").get<std::string>();
      e.content_type = row.value("content_type", content_type_for(e.file));
      m.images.push_back(std::move(e));
    }
    for (const auto& row : doc.value("annotations", json::array())) {
      GroundTruthObject g;
      g.image_id = row.at("image_id").get<std::string>();
      g.class_id = row.at("class_id").get<int>();
      g.box = BoundingBox{row.at("xmin").get<double>(), row.at("ymin").get<double>(),
                          row.at("xmax").get<double>(), row.at("ymax").get<double>()};
      m.ground_truth.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, "manifest " + path.string() + ": " + e.what());
  }
  try {
    validate_manifest(m);
  } catch (const Error& e) {
    throw Error(e.kind(), "manifest " + path.string() + ": " + e.what());
  }
  m.reindex();
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  json doc;
  doc["classes"] = m.classes;
  json images = json::array();
  for (const auto& img : m.images) {
    images.push_back({{"id", img.id}, {"file", img.file}, {"content_type", img.content_type}});
  }
  doc["images"] = std::move(images);
  json annotations = json::array();
  for (const auto& g : m.ground_truth) {
    annotations.push_back({{"image_id", g.image_id},
                           {"class_id", g.class_id},
                           {"xmin", g.box.xmin},
                           {"ymin", g.box.ymin},
                           {"xmax", g.box.xmax},
                           {"ymax", g.box.ymax}});
  }
  doc["annotations"] = std::move(annotations);
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write manifest " + path.string());
  out << doc.dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// PNM

namespace {

// Reads one header token, skipping whitespace and `#` comments.
std::string next_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') {
    tok.push_back(static_cast<char>(bytes[pos++]));
  }
  return tok;
}

int parse_dim(const std::string& tok, const char* what) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); }) ||
      tok.size() > 6) {
    throw Error(ErrorKind::kParse, std::string("PNM header: bad ") + what + " '" + tok + "'");
  }
  return std::stoi(tok);
}

}  // namespace

PixelMatrix decode_pnm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  PixelMatrix img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    throw Error(ErrorKind::kParse, "not a binary PGM/PPM (magic '" + magic + "')");
  }
  img.width = parse_dim(next_token(bytes, pos), "width");
  img.height = parse_dim(next_token(bytes, pos), "height");
  const int maxval = parse_dim(next_token(bytes, pos), "maxval");
  if (maxval != 255) throw Error(ErrorKind::kParse, "only 8-bit PNM (maxval 255) is supported");
  if (img.width == 0 || img.height == 0) throw Error(ErrorKind::kInvalidInput, "PNM image has zero size");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw Error(ErrorKind::kParse, "PNM header not terminated");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (bytes.size() - pos < need) throw Error(ErrorKind::kParse, "PNM pixel data truncated");
  img.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

std::string encode_pnm(const PixelMatrix& img) {
  if (img.channels != 1 && img.channels != 3) throw Error(ErrorKind::kInvalidInput, "PNM needs 1 or 3 channels");
  if (img.values.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw Error(ErrorKind::kInvalidInput, "pixel buffer size does not match dimensions");
  }
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.append(img.values.begin(), img.values.end());
  return out;
}

PixelMatrix read_image(const std::filesystem::path& path, const ImageDecoder& decoder) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open image " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decoder(bytes);
}

// ---------------------------------------------------------------------------
// Thumbnails and dedup

namespace {

void check_matrix(const PixelMatrix& img) {
  if (img.width <= 0 || img.height <= 0) throw Error(ErrorKind::kInvalidInput, "image has a zero dimension");
  if (img.channels != 1 && img.channels != 3) throw Error(ErrorKind::kInvalidInput, "image must have 1 or 3 channels");
  if (img.values.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw Error(ErrorKind::kInvalidInput, "pixel buffer size does not match dimensions");
  }
}

struct Tap {
  int src;
  double weight;
};

// For each output cell, the source pixels it overlaps and the overlap length
// divided by the cell length.
std::vector<std::vector<Tap>> box_taps(int src_len, int out_len) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(out_len));
  const double scale = static_cast<double>(src_len) / out_len;
  for (int o = 0; o < out_len; ++o) {
    const double lo = static_cast<double>(o) * src_len / out_len;
    const double hi = static_cast<double>(o + 1) * src_len / out_len;
    for (int s = static_cast<int>(std::floor(lo)); s < src_len && s < hi; ++s) {
      const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
      if (overlap > 0.0) taps[static_cast<std::size_t>(o)].push_back({s, overlap / scale});
    }
  }
  return taps;
}

constexpr double kLuma[3] = {0.299, 0.587, 0.114};

std::vector<double> to_grey(const std::vector<double>& rgb) {
  std::vector<double> grey(rgb.size() / 3);
  for (std::size_t i = 0; i < grey.size(); ++i) {
    grey[i] = kLuma[0] * rgb[3 * i] + kLuma[1] * rgb[3 * i + 1] + kLuma[2] * rgb[3 * i + 2];
  }
  return grey;
}

double l2(const std::vector<double>& a, const std::vector<double>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sum);
}

struct Thumb {
  int channels;
  std::vector<double> native;
  std::vector<double> grey;  // luma of native; pooling and luma are both linear
};

Thumb make_thumb(const PixelMatrix& img) {
  Thumb t{img.channels, thumbnail(img), {}};
  t.grey = t.channels == 3 ? to_grey(t.native) : t.native;
  return t;
}

double thumb_distance(const Thumb& a, const Thumb& b) {
  return a.channels == b.channels ? l2(a.native, b.native) : l2(a.grey, b.grey);
}

unsigned worker_count(unsigned requested, std::size_t rows) {
  unsigned n = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(rows, 1)));
}

// Runs row_fn(i, out) for i in [0, rows) striped over workers, then merges.
template <typename RowFn>
std::vector<IndexPair> scan_rows(std::size_t rows, unsigned threads, RowFn row_fn) {
  const unsigned workers = worker_count(threads, rows);
  std::vector<std::vector<IndexPair>> partial(workers);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < rows; i += workers) row_fn(i, partial[w]);
    });
  }
  for (auto& t : pool) t.join();
  std::vector<IndexPair> out;
  for (auto& p : partial) out.insert(out.end(), p.begin(), p.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<double> thumbnail(const PixelMatrix& img) {
  check_matrix(img);
  const auto xs = box_taps(img.width, kThumbnailSide);
  const auto ys = box_taps(img.height, kThumbnailSide);
  const int c = img.channels;

  // horizontal pass: height x 30 x c
  std::vector<double> rows(static_cast<std::size_t>(img.height) * kThumbnailSide * c, 0.0);
  for (int y = 0; y < img.height; ++y) {
    for (int ox = 0; ox < kThumbnailSide; ++ox) {
      for (const Tap& t : xs[static_cast<std::size_t>(ox)]) {
        for (int ch = 0; ch < c; ++ch) {
          rows[(static_cast<std::size_t>(y) * kThumbnailSide + ox) * c + ch] += t.weight * img.at(t.src, y, ch);
        }
      }
    }
  }
  std::vector<double> out(static_cast<std::size_t>(kThumbnailSide) * kThumbnailSide * c, 0.0);
  for (int oy = 0; oy < kThumbnailSide; ++oy) {
    for (const Tap& t : ys[static_cast<std::size_t>(oy)]) {
      for (int ox = 0; ox < kThumbnailSide; ++ox) {
        for (int ch = 0; ch < c; ++ch) {
          out[(static_cast<std::size_t>(oy) * kThumbnailSide + ox) * c + ch] +=
              t.weight * rows[(static_cast<std::size_t>(t.src) * kThumbnailSide + ox) * c + ch];
        }
      }
    }
  }
  return out;
}

double thumbnail_distance(const PixelMatrix& a, const PixelMatrix& b) {
  return thumb_distance(make_thumb(a), make_thumb(b));
}

std::vector<IndexPair> find_duplicates(std::span<const PixelMatrix> corpus, double threshold,
                                       unsigned threads) {
  if (!(threshold >= 0.0)) throw Error(ErrorKind::kInvalidInput, "threshold must be >= 0");
  std::vector<Thumb> thumbs;
  thumbs.reserve(corpus.size());
  for (const auto& img : corpus) thumbs.push_back(make_thumb(img));
  return scan_rows(thumbs.size(), threads, [&](std::size_t i, std::vector<IndexPair>& out) {
    for (std::size_t j = i + 1; j < thumbs.size(); ++j) {
      if (thumb_distance(thumbs[i], thumbs[j]) <= threshold) out.emplace_back(i, j);
    }
  });
}

std::vector<IndexPair> find_cross_duplicates(std::span<const PixelMatrix> candidates,
                                             std::span<const PixelMatrix> reference,
                                             double threshold, unsigned threads) {
  if (!(threshold >= 0.0)) throw Error(ErrorKind::kInvalidInput, "threshold must be >= 0");
  std::vector<Thumb> cand, ref;
  for (const auto& img : candidates) cand.push_back(make_thumb(img));
  for (const auto& img : reference) ref.push_back(make_thumb(img));
  return scan_rows(cand.size(), threads, [&](std::size_t i, std::vector<IndexPair>& out) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (thumb_distance(cand[i], ref[j]) <= threshold) out.emplace_back(i, j);
    }
  });
}

// ---------------------------------------------------------------------------
// Fixtures

namespace {

std::string fixture_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

void check_spec(const FixtureSpec& s) {
  if (s.num_images == 0) throw Error(ErrorKind::kInvalidInput, "fixture needs at least one image");
  if (s.num_classes < 1) throw Error(ErrorKind::kInvalidInput, "fixture needs at least one class");
  if (s.width < 8 || s.height < 8) throw Error(ErrorKind::kInvalidInput, "fixture images must be at least 8x8");
  if (s.channels != 1 && s.channels != 3) throw Error(ErrorKind::kInvalidInput, "fixture channels must be 1 or 3");
  if (s.min_objects < 0 || s.max_objects < s.min_objects) {
    throw Error(ErrorKind::kInvalidInput, "fixture object count range is invalid");
  }
}

}  // namespace

std::vector<PixelMatrix> render_fixture_images(const FixtureSpec& spec,
                                               std::vector<GroundTruthObject>* ground_truth) {
  check_spec(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> object_count(spec.min_objects, spec.max_objects);
  std::uniform_int_distribution<int> class_pick(1, spec.num_classes);
  std::uniform_int_distribution<int> colour(0, 255);
  const int min_side = std::max(4, std::min(spec.width, spec.height) / 8);

  std::vector<PixelMatrix> images;
  images.reserve(spec.num_images);
  for (std::size_t n = 0; n < spec.num_images; ++n) {
    PixelMatrix img{spec.width, spec.height, spec.channels, {}};
    img.values.resize(static_cast<std::size_t>(spec.width) * spec.height * spec.channels);
    for (std::size_t i = 0; i < img.values.size(); i += 8) {
      std::uint64_t bits = rng();
      for (std::size_t k = i; k < std::min(i + 8, img.values.size()); ++k, bits >>= 8) {
        img.values[k] = static_cast<std::uint8_t>(bits & 0xff);
      }
    }
    const int objects = object_count(rng);
    for (int o = 0; o < objects; ++o) {
      const int w = std::uniform_int_distribution<int>(min_side, spec.width / 2)(rng);
      const int h = std::uniform_int_distribution<int>(min_side, spec.height / 2)(rng);
      const int x0 = std::uniform_int_distribution<int>(0, spec.width - w)(rng);
      const int y0 = std::uniform_int_distribution<int>(0, spec.height - h)(rng);
      const int cls = class_pick(rng);
      std::uint8_t fill[3];
      for (auto& v : fill) v = static_cast<std::uint8_t>(colour(rng));
      for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x)
          for (int ch = 0; ch < spec.channels; ++ch) img.at(x, y, ch) = fill[ch];
      if (ground_truth) {
        ground_truth->push_back(GroundTruthObject{fixture_id(n), cls,
                                                  BoundingBox{double(x0), double(y0), double(x0 + w), double(y0 + h)}});
      }
    }
    images.push_back(std::move(img));
  }
  return images;
}

DatasetManifest generate_fixture(const FixtureSpec& spec, const std::filesystem::path& out_dir) {
  check_spec(spec);
  std::filesystem::create_directories(out_dir / "images");
  DatasetManifest m;
  m.base_dir = out_dir;
  m.classes = default_class_labels(spec.num_classes);
  const auto images = render_fixture_images(spec, &m.ground_truth);
  const char* ext = spec.channels == 1 ? ".pgm" : ".ppm";
  for (std::size_t n = 0; n < images.size(); ++n) {
    ImageEntry e{fixture_id(n), "images/" + fixture_id(n) + ext, ""};
    e.content_type = content_type_for(e.file);
    const std::string bytes = encode_pnm(images[n]);
    std::ofstream out(out_dir / e.file, std::ios::binary);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + (out_dir / e.file).string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    m.images.push_back(std::move(e));
  }
  m.reindex();
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace ecoref::dataset
