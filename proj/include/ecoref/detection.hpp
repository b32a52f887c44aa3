// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

namespace ecoref {

// Axis-aligned box in continuous pixel coordinates, origin top-left.
struct BoundingBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }

  // Finite, non-negative coordinates and strictly positive area.
  bool is_valid() const;

  bool operator==(const BoundingBox&) const = default;
};

using ClassId = int;

struct Detection {
  std::string image_id;
  ClassId class_id = 0;
  double confidence = 0.0;
  BoundingBox box;

  bool operator==(const Detection&) const = default;
};

struct GroundTruthObject {
  std::string image_id;
  ClassId class_id = 0;
  BoundingBox box;

  bool operator==(const GroundTruthObject&) const = default;
};

// Throws Error(kInvalidInput) naming the offending field.
void validate_box(const BoundingBox& box);
void validate_detection(const Detection& det, int num_classes);

}  // namespace ecoref
