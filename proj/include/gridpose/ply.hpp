#pragma once

#include <filesystem>

#include "gridpose/mesh.hpp"

namespace gridpose {

enum class PlyFormat { ascii, binary_little_endian };

struct PlyLoadOptions {
  // Divide coordinates by 1000 on load. Model banks following the benchmark
  // convention store vertices in millimeters; the pipeline works in meters.
  bool millimeter_units = false;
};

struct PlySaveOptions {
  PlyFormat format = PlyFormat::binary_little_endian;
  // Multiply coordinates by 1000 on save (write millimeters).
  bool millimeter_units = false;
};

// Reads ascii or binary_little_endian PLY with at least float/double x, y, z
// vertex properties and optional triangulated (or fan-triangulatable) faces;
// unknown vertex/face properties are skipped. Throws ParseError with the byte
// offset on malformed input (including zero vertices) and UnsupportedFormat
// for big-endian files or unsupported elements.
TriangleMesh load_ply(const std::filesystem::path& path,
                      const PlyLoadOptions& options = {});

// Writes vertices as float32 x, y, z and faces as uchar-count int32 lists.
void save_ply(const std::filesystem::path& path, const TriangleMesh& mesh,
              const PlySaveOptions& options = {});

}  // namespace gridpose
