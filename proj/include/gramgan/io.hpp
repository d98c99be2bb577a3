#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "gramgan/tensor.hpp"

namespace gramgan {

/// Raised for unreadable or malformed input files (images, point lists).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads an 8- or 16-bit PNG (gray, gray+alpha, RGB or RGBA) into a
/// [1 x 3 x H x W] tensor with values in [0, 1]. Alpha is dropped.
Tensor read_png(const std::string& path);

/// Writes sample 0 of a [n x 3 x H x W] tensor as 8-bit RGB, clamping to
/// [0, 1] and rounding to the nearest level.
void write_png(const std::string& path, const Tensor& image);

/// 8-bit level used by write_png for a value.
std::uint8_t quantize(Real v);

/// Square crop of sample 0 at row y, column x.
Tensor crop(const Tensor& image, int y, int x, int size);

/// Concatenates same-height images side by side.
Tensor hconcat(const std::vector<Tensor>& images);

/// Plain-text point list: one "x y z" per line, '#' starts a comment,
/// blank lines ignored. Errors report the 1-based line number.
std::vector<Vec3> read_points(const std::string& path);
std::vector<Vec3> parse_points(const std::string& text);

struct VolumeHeader {
  std::array<std::uint32_t, 3> dims{1, 1, 1};
  /// World-space size of the lattice along each axis.
  std::array<float, 3> extent{1, 1, 1};
  std::array<float, 3> origin{0, 0, 0};

  std::uint64_t payload_bytes() const {
    return 3ull * dims[0] * dims[1] * dims[2] * 4ull;
  }
  /// World coordinate of voxel (x, y, z): origin + index * extent / dims.
  Vec3 voxel_position(int x, int y, int z) const;
};

/// Streams a GGVX volume: magic, version, dims, extent, origin, then float32
/// RGB voxels in x-fastest order, written one z-slab at a time.
class VolumeWriter {
 public:
  VolumeWriter(const std::string& path, const VolumeHeader& header);
  /// rgb holds dims[0] * dims[1] voxels of slab z, x-fastest.
  void write_slab(std::span<const Real> rgb);
  /// Flushes and verifies that every slab was written.
  void close();

 private:
  std::ofstream out_;
  VolumeHeader header_;
  std::string path_;
  std::uint32_t slabs_ = 0;
};

struct Volume {
  VolumeHeader header;
  std::vector<float> rgb;
};

Volume read_volume(const std::string& path);

}  // namespace gramgan
