#include "gramgan/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <memory>
#include <sstream>

namespace gramgan {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

void ensure_parent(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

constexpr char kVolumeMagic[4] = {'G', 'G', 'V', 'X'};
constexpr std::uint32_t kVolumeVersion = 1;

}  // namespace

std::uint8_t quantize(Real v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

Tensor read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot read PNG " + path + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path + ": " + image.message);
  }
  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  Tensor t(1, 3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        t.at(0, c, y, x) = static_cast<Real>(buffer[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255;
  return t;
}

void write_png(const std::string& path, const Tensor& image) {
  if (image.c != 3 || image.n < 1)
    throw std::invalid_argument("write_png: expected an RGB image, got " + image.shape_string());
  const int h = image.h, w = image.w;
  std::vector<png_byte> rows(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        rows[(static_cast<std::size_t>(y) * w + x) * 3 + c] = quantize(image.at(0, c, y, x));

  ensure_parent(path);
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // Fixed compression settings keep output bytes reproducible.
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) png_write_row(png, rows.data() + static_cast<std::size_t>(y) * w * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor crop(const Tensor& image, int y, int x, int size) {
  if (y < 0 || x < 0 || size < 1 || y + size > image.h || x + size > image.w)
    throw std::invalid_argument("crop: window outside image " + image.shape_string());
  Tensor out(1, image.c, size, size);
  for (int c = 0; c < image.c; ++c)
    for (int r = 0; r < size; ++r)
      std::copy_n(&image.data[((static_cast<std::size_t>(c)) * image.h + y + r) * image.w + x], size,
                  &out.data[(static_cast<std::size_t>(c) * size + r) * size]);
  return out;
}

Tensor hconcat(const std::vector<Tensor>& images) {
  if (images.empty()) throw std::invalid_argument("hconcat: no images");
  const int h = images[0].h, c = images[0].c;
  int w = 0;
  for (const Tensor& t : images) {
    if (t.h != h || t.c != c) throw std::invalid_argument("hconcat: height or channel mismatch");
    w += t.w;
  }
  Tensor out(1, c, h, w);
  int offset = 0;
  for (const Tensor& t : images) {
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < t.w; ++x) out.at(0, ch, y, offset + x) = t.at(0, ch, y, x);
    offset += t.w;
  }
  return out;
}

std::vector<Vec3> parse_points(const std::string& text) {
  std::vector<Vec3> points;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    double v[3];
    int got = 0;
    std::string token;
    while (fields >> token) {
      if (got == 3) throw IoError("points line " + std::to_string(number) + ": more than three values");
      try {
        std::size_t used = 0;
        v[got] = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw IoError("points line " + std::to_string(number) + ": \"" + token + "\" is not a number");
      }
      if (!std::isfinite(v[got]))
        throw IoError("points line " + std::to_string(number) + ": non-finite value");
      ++got;
    }
    if (got == 0) continue;
    if (got != 3)
      throw IoError("points line " + std::to_string(number) + ": expected \"x y z\", found " +
                    std::to_string(got) + " value(s)");
    points.push_back({static_cast<Real>(v[0]), static_cast<Real>(v[1]), static_cast<Real>(v[2])});
  }
  return points;
}

std::vector<Vec3> read_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read points file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_points(ss.str());
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

Vec3 VolumeHeader::voxel_position(int x, int y, int z) const {
  return {static_cast<Real>(origin[0] + static_cast<double>(x) * extent[0] / dims[0]),
          static_cast<Real>(origin[1] + static_cast<double>(y) * extent[1] / dims[1]),
          static_cast<Real>(origin[2] + static_cast<double>(z) * extent[2] / dims[2])};
}

VolumeWriter::VolumeWriter(const std::string& path, const VolumeHeader& header)
    : header_(header), path_(path) {
  for (auto d : header.dims)
    if (d == 0) throw std::invalid_argument("volume dimensions must be positive");
  ensure_parent(path);
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open " + path + " for writing");
  out_.write(kVolumeMagic, 4);
  out_.write(reinterpret_cast<const char*>(&kVolumeVersion), 4);
  out_.write(reinterpret_cast<const char*>(header.dims.data()), 12);
  out_.write(reinterpret_cast<const char*>(header.extent.data()), 12);
  out_.write(reinterpret_cast<const char*>(header.origin.data()), 12);
}

void VolumeWriter::write_slab(std::span<const Real> rgb) {
  const std::size_t want = 3ull * header_.dims[0] * header_.dims[1];
  if (rgb.size() != want) throw std::invalid_argument("volume slab has the wrong size");
  if (slabs_ >= header_.dims[2]) throw std::logic_error("volume already has all slabs");
  std::vector<float> f(rgb.begin(), rgb.end());
  out_.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
  ++slabs_;
}

void VolumeWriter::close() {
  if (slabs_ != header_.dims[2])
    throw IoError("volume closed after " + std::to_string(slabs_) + " of " +
                           std::to_string(header_.dims[2]) + " slabs");
  out_.close();
  if (!out_) throw IoError("failed writing volume " + path_);
}

Volume read_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read volume " + path);
  char magic[4];
  std::uint32_t version = 0;
  Volume v;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(v.header.dims.data()), 12);
  in.read(reinterpret_cast<char*>(v.header.extent.data()), 12);
  in.read(reinterpret_cast<char*>(v.header.origin.data()), 12);
  if (!in || std::memcmp(magic, kVolumeMagic, 4) != 0 || version != kVolumeVersion)
    throw IoError(path + " is not a GGVX volume");
  v.rgb.resize(v.header.payload_bytes() / 4);
  in.read(reinterpret_cast<char*>(v.rgb.data()), static_cast<std::streamsize>(v.header.payload_bytes()));
  if (!in) throw IoError(path + ": payload shorter than the header promises");
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes after payload");
  return v;
}

}  // namespace gramgan
