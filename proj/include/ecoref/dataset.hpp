// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ecoref/detection.hpp"

namespace ecoref::dataset {

inline constexpr int kDefaultNumClasses = 200;
inline constexpr int kThumbnailSide = 30;
// Thumbnail L2 distance at or below which two images count as near
// duplicates. A distance of 300 is an RMS difference of 10 grey levels per
// thumbnail pixel.
inline constexpr double kDefaultDuplicateThreshold = 300.0;

struct ImageEntry {
  std::string id;
  std::string file;  // as written in the manifest, relative to its directory
  std::string content_type;

  bool operator==(const ImageEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ImageEntry> images;
  std::vector<std::string> classes;  // class id k is classes[k - 1]
  std::vector<GroundTruthObject> ground_truth;
  std::filesystem::path base_dir;

  int num_classes() const { return static_cast<int>(classes.size()); }
  std::filesystem::path image_path(std::size_t index) const { return base_dir / images[index].file; }
  std::optional<std::size_t> index_of(std::string_view image_id) const;

  bool operator==(const DatasetManifest& other) const {
    return images == other.images && classes == other.classes &&
           ground_truth == other.ground_truth;
  }

  // Rebuild the id lookup after editing `images` by hand.
  void reindex();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// Reads and validates a manifest. Image ids must be unique and free of
// whitespace, image files must exist, and every annotation must reference a
// listed image and a class in the label space.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
void validate_manifest(const DatasetManifest& manifest, bool check_files = true);

std::string content_type_for(const std::filesystem::path& file);
std::vector<std::string> default_class_labels(int count);

// 8-bit raster, row-major, interleaved channels.
struct PixelMatrix {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 (grey) or 3 (RGB)
  std::vector<std::uint8_t> values;

  std::uint8_t& at(int x, int y, int c = 0) {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const PixelMatrix&) const = default;
};

// Binary PGM (P5) and PPM (P6), maxval 255.
PixelMatrix decode_pnm(std::span<const std::uint8_t> bytes);
std::string encode_pnm(const PixelMatrix& image);

// Compressed formats plug in here; the dedup math only sees PixelMatrix.
using ImageDecoder = std::function<PixelMatrix(std::span<const std::uint8_t>)>;
PixelMatrix read_image(const std::filesystem::path& path, const ImageDecoder& decoder = decode_pnm);

// Area-weighted box average down (or up) to kThumbnailSide squared, keeping
// the channel count. Values are in [0, 255].
std::vector<double> thumbnail(const PixelMatrix& image);

// L2 norm between 30x30 thumbnails. Images with different channel counts are
// compared in greyscale (ITU-R BT.601 luma).
double thumbnail_distance(const PixelMatrix& a, const PixelMatrix& b);

using IndexPair = std::pair<std::size_t, std::size_t>;

// Every unordered pair (i < j) within `corpus` at distance <= threshold,
// sorted. Scans fan out over `threads` workers (0 = hardware concurrency).
std::vector<IndexPair> find_duplicates(std::span<const PixelMatrix> corpus, double threshold,
                                       unsigned threads = 0);

// Pairs (candidate index, reference index) across two corpora, sorted.
std::vector<IndexPair> find_cross_duplicates(std::span<const PixelMatrix> candidates,
                                             std::span<const PixelMatrix> reference,
                                             double threshold, unsigned threads = 0);

struct FixtureSpec {
  std::size_t num_images = 20;
  int num_classes = 5;
  int width = 32;
  int height = 32;
  int channels = 3;
  int min_objects = 0;
  int max_objects = 3;
  std::uint64_t seed = 1;
};

// Noise-background images with flat-colour rectangles as objects, written as
// PNM under `out_dir/images` with `out_dir/manifest.json`. Byte-for-byte
// reproducible for a given spec on one standard library implementation.
DatasetManifest generate_fixture(const FixtureSpec& spec, const std::filesystem::path& out_dir);

// In-memory variant: images plus the manifest rows that describe them.
std::vector<PixelMatrix> render_fixture_images(const FixtureSpec& spec,
                                               std::vector<GroundTruthObject>* ground_truth);

}  // namespace ecoref::dataset
