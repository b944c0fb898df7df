// SPDX-License-Identifier: Apache-2.0
#include "vigunet/image_io.hpp"

#include <png.h>

#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "vigunet/errors.hpp"

namespace vigunet {

namespace {

std::vector<std::uint8_t> slurp(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DatasetError("cannot read image: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image decode_png(const std::vector<std::uint8_t> &bytes, const std::string &path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw DatasetError("cannot decode PNG " + path + ": " + img.message);
  const bool gray = !(img.format & PNG_FORMAT_FLAG_COLOR);
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image out;
  out.width = img.width;
  out.height = img.height;
  out.channels = gray ? 1 : 3;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DatasetError("cannot decode PNG " + path + ": " + img.message);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto *err = reinterpret_cast<JpegErrorManager *>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image decode_jpeg(const std::vector<std::uint8_t> &bytes, const std::string &path) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  Image out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DatasetError("cannot decode JPEG " + path + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = cinfo.output_width;
  out.height = cinfo.output_height;
  out.channels = std::size_t(cinfo.output_components);
  out.pixels.resize(out.width * out.height * out.channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + std::size_t(cinfo.output_scanline) * out.width * out.channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

Image decode_pnm(const std::vector<std::uint8_t> &bytes, const std::string &path) {
  const std::string text(bytes.begin(), bytes.end());
  std::size_t pos = 2;
  auto next_token = [&]() -> std::string {
    while (pos < text.size()) {
      if (text[pos] == '#') {
        while (pos < text.size() && text[pos] != '\n')
          ++pos;
      } else if (std::isspace(static_cast<unsigned char>(text[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos])))
      ++pos;
    if (start == pos)
      throw DatasetError("truncated PNM header: " + path);
    return text.substr(start, pos - start);
  };
  const char kind = text[1];
  Image out;
  out.channels = (kind == '3' || kind == '6') ? 3 : 1;
  out.width = std::stoul(next_token());
  out.height = std::stoul(next_token());
  const unsigned long maxval = std::stoul(next_token());
  if (maxval == 0 || maxval > 255)
    throw DatasetError("only 8-bit PNM files are supported: " + path);
  const std::size_t count = out.width * out.height * out.channels;
  out.pixels.resize(count);
  if (kind == '5' || kind == '6') {
    ++pos; // single whitespace after maxval
    if (pos + count > bytes.size())
      throw DatasetError("truncated PNM data: " + path);
    std::copy(bytes.begin() + std::ptrdiff_t(pos), bytes.begin() + std::ptrdiff_t(pos + count),
              out.pixels.begin());
  } else {
    for (auto &p : out.pixels)
      p = static_cast<std::uint8_t>(std::stoul(next_token()));
  }
  if (maxval != 255)
    for (auto &p : out.pixels)
      p = static_cast<std::uint8_t>((p * 255 + maxval / 2) / maxval);
  return out;
}

Image convert(Image img, std::size_t channels) {
  if (img.channels == channels)
    return img;
  Image out;
  out.width = img.width;
  out.height = img.height;
  out.channels = channels;
  const std::size_t n = img.width * img.height;
  out.pixels.resize(n * channels);
  for (std::size_t i = 0; i < n; ++i) {
    if (channels == 1) {
      const unsigned r = img.pixels[3 * i], g = img.pixels[3 * i + 1], b = img.pixels[3 * i + 2];
      out.pixels[i] = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
    } else {
      for (std::size_t c = 0; c < 3; ++c)
        out.pixels[3 * i + c] = img.pixels[i];
    }
  }
  return out;
}

} // namespace

Image read_image(const std::string &path, std::size_t channels) {
  if (channels != 1 && channels != 3)
    throw std::invalid_argument("read_image: channels must be 1 or 3");
  const auto bytes = slurp(path);
  Image img;
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0)
    img = decode_png(bytes, path);
  else if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8)
    img = decode_jpeg(bytes, path);
  else if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] >= '2' && bytes[1] <= '6' &&
           bytes[1] != '4')
    img = decode_pnm(bytes, path);
  else
    throw DatasetError("unrecognized image format: " + path);
  if (img.width == 0 || img.height == 0)
    throw DatasetError("empty image: " + path);
  return convert(std::move(img), channels);
}

void write_png(const std::string &path, const Image &img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png: channels must be 1 or 3");
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(img.width);
  out.height = static_cast<png_uint_32>(img.height);
  out.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&out, path.c_str(), 0, img.pixels.data(), 0, nullptr))
    throw DatasetError("cannot write PNG " + path + ": " + out.message);
}

} // namespace vigunet
