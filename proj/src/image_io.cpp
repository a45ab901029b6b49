#include "gms/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

namespace gms {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

ImageGrid load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng init failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<unsigned char> raw;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path + ": PNG decode error", 0);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  // Normalize to 8-bit gray or RGB.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = static_cast<int>(png_get_channels(png, info));
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path + ": unsupported PNG channel count", 0);
  }
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  raw.resize(row_bytes * height);
  row_ptrs.resize(height);
  for (int y = 0; y < height; ++y) row_ptrs[y] = raw.data() + row_bytes * y;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageGrid img = make_image(width, height, channels);
  const std::size_t n = img.data.size();
  for (std::size_t y = 0; y < static_cast<std::size_t>(height); ++y) {
    const unsigned char* src = raw.data() + row_bytes * y;
    double* dst = img.data.data() + y * static_cast<std::size_t>(width) * channels;
    for (std::size_t i = 0; i < static_cast<std::size_t>(width) * channels; ++i)
      dst[i] = src[i] / 255.0;
  }
  (void)n;
  return img;
}

void skip_pnm_space(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

ImageGrid load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw ParseError(path + ": not a PGM file", 1);
  int width = 0, height = 0, maxval = 0;
  skip_pnm_space(in);
  in >> width;
  skip_pnm_space(in);
  in >> height;
  skip_pnm_space(in);
  in >> maxval;
  if (!in || width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
    throw ParseError(path + ": bad PGM header", 1);
  ImageGrid img = make_image(width, height, 1);
  const std::size_t n = img.pixel_count();
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) {
      long v;
      in >> v;
      if (!in) throw ParseError(path + ": truncated PGM data", 0);
      img.data[i] = std::clamp(static_cast<double>(v) / maxval, 0.0, 1.0);
    }
  } else {
    in.get();  // single whitespace after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(n * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
      throw ParseError(path + ": truncated PGM data", 0);
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = bytes == 1 ? raw[i] : (raw[2 * i] << 8 | raw[2 * i + 1]);
      img.data[i] = std::clamp(static_cast<double>(v) / maxval, 0.0, 1.0);
    }
  }
  return img;
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

}  // namespace

ImageGrid load_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open " + path);
  unsigned char magic[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(magic), 2);
  probe.close();
  if (magic[0] == 0x89 && magic[1] == 'P') {
    ImageGrid img = load_png(path);
    img.validate();
    return img;
  }
  if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '2')) {
    ImageGrid img = load_pgm(path);
    img.validate();
    return img;
  }
  throw ParseError(path + ": unrecognized image format", 0);
}

void save_image_png(const ImageGrid& img, const std::string& path) {
  img.validate();
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed");
  }
  std::vector<unsigned char> raw;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path + ": PNG encode error");
  }
  png_init_io(png, fp.get());
  const int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width, img.height, 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t row_bytes = static_cast<std::size_t>(img.width) * img.channels;
  raw.resize(row_bytes * img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) raw[i] = to_byte(img.data[i]);
  row_ptrs.resize(img.height);
  for (int y = 0; y < img.height; ++y) row_ptrs[y] = raw.data() + row_bytes * y;
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void save_image_pgm(const ImageGrid& img, const std::string& path) {
  img.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<double> lum = img.channels == 1 ? img.data : luminance(img);
  std::vector<unsigned char> raw(lum.size());
  for (std::size_t i = 0; i < lum.size(); ++i) raw[i] = to_byte(lum[i]);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace gms
