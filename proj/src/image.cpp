#include "erf/dataset.hpp"
#include "erf/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace xrf {

std::vector<int> Dataset::indices(Split s) const {
  std::vector<int> out;
  for (size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(static_cast<int>(i));
  return out;
}

namespace {

Image box_down(const Image& src) {
  const int w = (src.width + 1) / 2;
  const int h = (src.height + 1) / 2;
  Image dst(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int x0 = 2 * x, y0 = 2 * y;
      const int x1 = std::min(x0 + 1, src.width - 1), y1 = std::min(y0 + 1, src.height - 1);
      for (int c = 0; c < 3; ++c)
        dst.at(x, y, c) = 0.25f * (src.at(x0, y0, c) + src.at(x1, y0, c) + src.at(x0, y1, c) + src.at(x1, y1, c));
    }
  return dst;
}

Image binomial_blur(const Image& src) {
  static constexpr float kTaps[5] = {1.0f / 16, 4.0f / 16, 6.0f / 16, 4.0f / 16, 1.0f / 16};
  Image tmp(src.width, src.height), dst(src.width, src.height);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = 0.0f;
        for (int k = -2; k <= 2; ++k) v += kTaps[k + 2] * src.at(std::clamp(x + k, 0, src.width - 1), y, c);
        tmp.at(x, y, c) = v;
      }
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = 0.0f;
        for (int k = -2; k <= 2; ++k) v += kTaps[k + 2] * tmp.at(x, std::clamp(y + k, 0, src.height - 1), c);
        dst.at(x, y, c) = v;
      }
  return dst;
}

}  // namespace

std::vector<Image> build_pyramid(const Image& image, PyramidFilter filter) {
  if (image.width < 1 || image.height < 1) throw InvalidArgument("build_pyramid: empty image");
  std::vector<Image> levels{image};
  while (levels.back().width > 1 || levels.back().height > 1) {
    const Image& prev = levels.back();
    levels.push_back(filter == PyramidFilter::Box ? box_down(prev) : box_down(binomial_blur(prev)));
  }
  return levels;
}

Image read_png(const std::string& path, const Rgb& background) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw DataError("cannot read PNG '" + path + "': " + png.message);
  png.format = PNG_FORMAT_RGBA;
  std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&png);
    throw DataError("cannot decode PNG '" + path + "': " + png.message);
  }
  Image img(static_cast<int>(png.width), static_cast<int>(png.height));
  for (size_t i = 0; i < static_cast<size_t>(img.width) * static_cast<size_t>(img.height); ++i) {
    const float a = buffer[i * 4 + 3] / 255.0f;
    for (int c = 0; c < 3; ++c)
      img.data[i * 3 + static_cast<size_t>(c)] =
          a * (buffer[i * 4 + static_cast<size_t>(c)] / 255.0f) + (1.0f - a) * static_cast<float>(background[c]);
  }
  return img;
}

void write_png(const std::string& path, const Image& image) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> buffer(image.data.size());
  for (size_t i = 0; i < buffer.size(); ++i)
    buffer[i] = static_cast<uint8_t>(std::lround(std::clamp(image.data[i], 0.0f, 1.0f) * 255.0f));
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw DataError("cannot write PNG '" + path + "': " + png.message);
}

void write_npy(const std::string& path, const Image& image, int channel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(image.height) + ", " +
                       std::to_string(image.width) + "), }";
  const size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  const auto len = static_cast<uint16_t>(header.size());
  out.write("\x93NUMPY\x01\x00", 8);
  const char len_bytes[2] = {static_cast<char>(len & 0xFF), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const float v = image.at(x, y, channel);
      out.write(reinterpret_cast<const char*>(&v), sizeof(float));
    }
  if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace xrf
