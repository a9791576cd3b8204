#include "cgan/image_io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>

namespace cgan {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("cannot open file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail("cannot open file for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail("short write: " + path);
}

uint32_t be32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void put_be32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(uint8_t(x >> 24));
  v.push_back(uint8_t(x >> 16));
  v.push_back(uint8_t(x >> 8));
  v.push_back(uint8_t(x));
}

const uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

ImageU8 read_png(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
    fail("not a PNG file: " + path);

  uint32_t w = 0, h = 0;
  int bit_depth = 0, color_type = 0;
  std::vector<uint8_t> idat;
  size_t off = 8;
  bool saw_iend = false;
  while (off + 12 <= bytes.size()) {
    const uint32_t len = be32(&bytes[off]);
    if (off + 12 + len > bytes.size()) fail("truncated PNG chunk: " + path);
    const char* type = reinterpret_cast<const char*>(&bytes[off + 4]);
    const uint8_t* data = &bytes[off + 8];
    const uint32_t crc_stored = be32(&bytes[off + 8 + len]);
    uint32_t crc = crc32(0, &bytes[off + 4], len + 4);
    if (crc != crc_stored) fail("PNG CRC mismatch in " + std::string(type, 4) + ": " + path);
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) fail("bad IHDR: " + path);
      w = be32(data);
      h = be32(data + 4);
      bit_depth = data[8];
      color_type = data[9];
      if (data[12] != 0) fail("interlaced PNG not supported: " + path);
      if (bit_depth != 8) fail("only 8-bit PNG supported: " + path);
      if (color_type != 0 && color_type != 2 && color_type != 6)
        fail("unsupported PNG color type " + std::to_string(color_type) + ": " + path);
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_iend = true;
      break;
    }
    off += 12 + len;
  }
  if (w == 0 || h == 0) fail("PNG missing IHDR: " + path);
  if (!saw_iend) fail("truncated PNG (no IEND): " + path);
  if (idat.empty()) fail("PNG missing IDAT: " + path);

  const int src_c = (color_type == 0) ? 1 : (color_type == 2 ? 3 : 4);
  const size_t stride = static_cast<size_t>(w) * src_c;
  std::vector<uint8_t> raw(static_cast<size_t>(h) * (stride + 1));
  uLongf raw_len = raw.size();
  const int zrc = uncompress(raw.data(), &raw_len, idat.data(), idat.size());
  if (zrc != Z_OK || raw_len != raw.size()) fail("PNG inflate failed: " + path);

  ImageU8 out = make_u8(static_cast<int>(h), static_cast<int>(w), src_c == 4 ? 3 : src_c);
  std::vector<uint8_t> prev(stride, 0);
  std::vector<uint8_t> cur(stride);
  for (uint32_t y = 0; y < h; ++y) {
    const uint8_t* row = &raw[static_cast<size_t>(y) * (stride + 1)];
    const int filter = row[0];
    const uint8_t* src = row + 1;
    for (size_t i = 0; i < stride; ++i) {
      const int a = i >= static_cast<size_t>(src_c) ? cur[i - src_c] : 0;
      const int b = prev[i];
      const int c = i >= static_cast<size_t>(src_c) ? prev[i - src_c] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: fail("bad PNG filter " + std::to_string(filter) + ": " + path);
      }
      cur[i] = static_cast<uint8_t>(v);
    }
    uint8_t* dst = &out.pix[static_cast<size_t>(y) * w * out.c];
    if (src_c == 4) {
      for (uint32_t x = 0; x < w; ++x) {
        dst[3 * x] = cur[4 * x];
        dst[3 * x + 1] = cur[4 * x + 1];
        dst[3 * x + 2] = cur[4 * x + 2];
      }
    } else {
      std::memcpy(dst, cur.data(), stride);
    }
    prev.swap(cur);
  }
  return out;
}

void write_png(const std::string& path, const ImageU8& img) {
  if (img.c != 1 && img.c != 3) fail("write_png: channels must be 1 or 3");
  if (img.h < 1 || img.w < 1) fail("write_png: empty image");
  const size_t stride = static_cast<size_t>(img.w) * img.c;
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.h) * (stride + 1));
  for (int y = 0; y < img.h; ++y) {
    raw.push_back(0);  // filter: none
    const uint8_t* row = &img.pix[static_cast<size_t>(y) * stride];
    raw.insert(raw.end(), row, row + stride);
  }
  uLongf bound = compressBound(raw.size());
  std::vector<uint8_t> z(bound);
  if (compress2(z.data(), &bound, raw.data(), raw.size(), 6) != Z_OK) fail("write_png: deflate failed");
  z.resize(bound);

  std::vector<uint8_t> out(kPngSig, kPngSig + 8);
  auto chunk = [&out](const char* type, const std::vector<uint8_t>& body) {
    put_be32(out, static_cast<uint32_t>(body.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), body.begin(), body.end());
    put_be32(out, crc32(0, &out[start], static_cast<uInt>(4 + body.size())));
  };
  std::vector<uint8_t> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(img.w));
  put_be32(ihdr, static_cast<uint32_t>(img.h));
  ihdr.push_back(8);                             // bit depth
  ihdr.push_back(img.c == 1 ? 0 : 2);            // gray / truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  chunk("IHDR", ihdr);
  chunk("IDAT", z);
  chunk("IEND", {});
  write_file(path, out);
}

ImageU8 read_ppm(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  size_t off = 0;
  auto token = [&]() -> std::string {
    while (off < bytes.size()) {
      if (bytes[off] == '#') {
        while (off < bytes.size() && bytes[off] != '\n') ++off;
      } else if (std::isspace(bytes[off])) {
        ++off;
      } else {
        break;
      }
    }
    const size_t start = off;
    while (off < bytes.size() && !std::isspace(bytes[off])) ++off;
    if (start == off) fail("truncated PPM header: " + path);
    return std::string(bytes.begin() + static_cast<long>(start), bytes.begin() + static_cast<long>(off));
  };
  const std::string magic = token();
  if (magic != "P6" && magic != "P5") fail("not a binary PPM/PGM file: " + path);
  const int c = magic == "P6" ? 3 : 1;
  const int w = std::stoi(token());
  const int h = std::stoi(token());
  const int maxv = std::stoi(token());
  if (w < 1 || h < 1) fail("bad PPM dimensions: " + path);
  if (maxv != 255) fail("only maxval 255 PPM supported: " + path);
  ++off;  // single whitespace after maxval
  const size_t need = static_cast<size_t>(h) * w * c;
  if (bytes.size() - off < need) fail("truncated PPM pixel data: " + path);
  ImageU8 out = make_u8(h, w, c);
  std::memcpy(out.pix.data(), &bytes[off], need);
  return out;
}

void write_ppm(const std::string& path, const ImageU8& img) {
  if (img.c != 1 && img.c != 3) fail("write_ppm: channels must be 1 or 3");
  char header[64];
  const int n = std::snprintf(header, sizeof header, "%s\n%d %d\n255\n", img.c == 3 ? "P6" : "P5", img.w, img.h);
  std::vector<uint8_t> out(header, header + n);
  out.insert(out.end(), img.pix.begin(), img.pix.end());
  write_file(path, out);
}

ImageU8 read_image(const std::string& path) {
  const std::vector<uint8_t> head = read_file(path);
  if (head.size() >= 8 && std::memcmp(head.data(), kPngSig, 8) == 0) return read_png(path);
  if (head.size() >= 2 && head[0] == 'P' && (head[1] == '6' || head[1] == '5')) return read_ppm(path);
  fail("unsupported image format (need PNG or binary PPM): " + path);
}

FloatImage to_float(const ImageU8& img) {
  FloatImage out = make_image(img.h, img.w, img.c);
  for (size_t i = 0; i < img.pix.size(); ++i) out.pix[i] = u8_to_unit(img.pix[i]);
  return out;
}

ImageU8 quantize_u8(const FloatImage& img) {
  ImageU8 out = make_u8(img.h, img.w, img.c);
  for (size_t i = 0; i < img.pix.size(); ++i) out.pix[i] = unit_to_u8(img.pix[i]);
  return out;
}

FloatImage load_image(const std::string& path) {
  const ImageU8 raw = read_image(path);
  if (raw.c == 3) return to_float(raw);
  FloatImage out = make_image(raw.h, raw.w, 3);
  for (size_t p = 0; p < raw.pix.size(); ++p) {
    const float v = u8_to_unit(raw.pix[p]);
    out.pix[3 * p] = out.pix[3 * p + 1] = out.pix[3 * p + 2] = v;
  }
  return out;
}

}  // namespace cgan
