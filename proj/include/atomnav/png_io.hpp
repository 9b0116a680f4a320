#pragma once

// In-memory PNG encode/decode built on libpng. Depth images are 16-bit
// grayscale millimeters, masks 8-bit grayscale, renders 8-bit RGB. Encoded
// bytes are deterministic for identical input (fixed filter + compression,
// no time chunk). tEXt chunks carry machine-readable metadata.

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "atomnav/errors.hpp"

namespace atomnav {

struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  int bit_depth = 8;
  std::vector<std::uint8_t> data8;    // bit_depth 8: channels*w*h
  std::vector<std::uint16_t> data16;  // bit_depth 16: w*h (grayscale only)
  std::vector<std::pair<std::string, std::string>> texts;
};

using PngTexts = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline void png_append(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), len);
}

inline void png_flush(png_structp) {}

struct PngReadCursor {
  const unsigned char* data;
  std::size_t size;
  std::size_t pos;
};

inline void png_consume(png_structp png, png_bytep out, png_size_t len) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + len > cur->size) png_error(png, "png stream truncated");
  std::memcpy(out, cur->data + cur->pos, len);
  cur->pos += len;
}

inline std::string encode_png(int width, int height, int color_type,
                              int bit_depth, const void* rows_data,
                              std::size_t row_bytes, const PngTexts& texts) {
  std::string out;
  std::vector<png_bytep> rows(std::size_t(height));
  for (int y = 0; y < height; ++y)
    rows[std::size_t(y)] = const_cast<png_bytep>(
        static_cast<const png_byte*>(rows_data) + std::size_t(y) * row_bytes);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png encode failed");
  }
  png_set_write_fn(png, &out, &png_append, &png_flush);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), bit_depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_text> txt(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::memset(&txt[i], 0, sizeof(png_text));
    txt[i].compression = PNG_TEXT_COMPRESSION_NONE;
    txt[i].key = const_cast<char*>(texts[i].first.c_str());
    txt[i].text = const_cast<char*>(texts[i].second.c_str());
    txt[i].text_length = texts[i].second.size();
  }
  if (!txt.empty()) png_set_text(png, info, txt.data(), int(txt.size()));
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // host arrays are little-endian
  png_write_image(png, rows.data());
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace detail

inline std::string encode_png_gray16(int width, int height,
                                     const std::uint16_t* data,
                                     const PngTexts& texts = {}) {
  return detail::encode_png(width, height, PNG_COLOR_TYPE_GRAY, 16, data,
                            std::size_t(width) * 2, texts);
}

inline std::string encode_png_gray8(int width, int height,
                                    const std::uint8_t* data,
                                    const PngTexts& texts = {}) {
  return detail::encode_png(width, height, PNG_COLOR_TYPE_GRAY, 8, data,
                            std::size_t(width), texts);
}

inline std::string encode_png_rgb8(int width, int height,
                                   const std::uint8_t* data,
                                   const PngTexts& texts = {}) {
  return detail::encode_png(width, height, PNG_COLOR_TYPE_RGB, 8, data,
                            std::size_t(width) * 3, texts);
}

inline PngImage decode_png(std::string_view bytes) {
  if (bytes.size() < 8 ||
      png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8))
    throw ParseError("not a png stream", 0);

  detail::PngReadCursor cur{
      reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), 0};
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("png_create_info_struct failed");
  }
  PngImage img;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> raw;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("png decode failed", cur.pos);
  }
  png_set_read_fn(png, &cur, &detail::png_consume);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);
  png_read_update_info(png, info);

  bit_depth = png_get_bit_depth(png, info);
  color_type = png_get_color_type(png, info);
  const int channels = png_get_channels(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);

  img.width = int(w);
  img.height = int(h);
  img.channels = channels;
  img.bit_depth = bit_depth;
  raw.resize(row_bytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, info);

  png_textp texts = nullptr;
  int num_texts = 0;
  if (png_get_text(png, info, &texts, &num_texts) > 0)
    for (int i = 0; i < num_texts; ++i)
      img.texts.emplace_back(texts[i].key ? texts[i].key : "",
                             texts[i].text ? std::string(texts[i].text)
                                           : std::string());

  if (bit_depth == 16) {
    img.data16.resize(std::size_t(w) * h * std::size_t(channels));
    std::memcpy(img.data16.data(), raw.data(), raw.size());
  } else {
    img.data8 = std::move(raw);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline std::string png_text_chunk(std::string_view png_bytes,
                                  std::string_view key) {
  const PngImage img = decode_png(png_bytes);
  for (const auto& [k, v] : img.texts)
    if (k == key) return v;
  throw Error("png text chunk not found: " + std::string(key));
}

}  // namespace atomnav
