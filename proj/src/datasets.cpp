#include "prox/datasets.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace prox {

namespace {

double byte_to_pixel(unsigned char b) { return b / 127.5 - 1.0; }

unsigned char pixel_to_byte(double p) {
  double v = std::lround((std::clamp(p, -1.0, 1.0) + 1.0) * 127.5);
  return static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

std::uint32_t read_u32be(const std::vector<unsigned char>& data, size_t offset,
                         const std::string& path) {
  if (offset + 4 > data.size())
    throw FormatError(path + ": truncated at byte offset " + std::to_string(offset));
  return (static_cast<std::uint32_t>(data[offset]) << 24) |
         (static_cast<std::uint32_t>(data[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(data[offset + 2]) << 8) |
         static_cast<std::uint32_t>(data[offset + 3]);
}

// ----------------------------------------------------------------- PGM (P5)

bool is_pgm(const std::vector<unsigned char>& data) {
  return data.size() >= 2 && data[0] == 'P' && data[1] == '5';
}

Image load_pgm(const std::vector<unsigned char>& data, const std::string& path) {
  size_t pos = 2;
  auto next_token = [&]() -> long {
    while (pos < data.size()) {
      if (std::isspace(data[pos])) {
        ++pos;
      } else if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    if (pos >= data.size())
      throw FormatError(path + ": truncated PGM header at byte offset " + std::to_string(pos));
    long value = 0;
    bool any = false;
    while (pos < data.size() && std::isdigit(data[pos])) {
      value = value * 10 + (data[pos] - '0');
      ++pos;
      any = true;
    }
    if (!any) throw FormatError(path + ": bad PGM header at byte offset " + std::to_string(pos));
    return value;
  };

  long w = next_token();
  long h = next_token();
  long maxval = next_token();
  if (maxval != 255) throw FormatError(path + ": only 8-bit PGM (maxval 255) is supported");
  ++pos;  // single whitespace after maxval
  if (pos + static_cast<size_t>(w) * h > data.size())
    throw FormatError(path + ": truncated PGM pixels at byte offset " + std::to_string(pos));

  Image img(static_cast<int>(h), static_cast<int>(w), 1);
  for (long i = 0; i < w * h; ++i) img.pixels[static_cast<int>(i)] = byte_to_pixel(data[pos + i]);
  return img;
}

void save_pgm(const Image& img, const std::string& path) {
  if (img.channels != 1) throw FormatError("PGM supports grayscale images only");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open file for writing: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  for (int i = 0; i < img.pixels.size(); ++i)
    out.put(static_cast<char>(pixel_to_byte(img.pixels[i])));
  if (!out) throw FormatError("write failed: " + path);
}

// --------------------------------------------------------------------- PNG
//
// Bounded scope: 8-bit grayscale (color type 0) and RGB (color type 2),
// no interlacing. zlib handles the DEFLATE stream.

const unsigned char kPngSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

bool is_png(const std::vector<unsigned char>& data) {
  return data.size() >= 8 && std::memcmp(data.data(), kPngSignature, 8) == 0;
}

void append_u32be(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const std::vector<unsigned char>& payload) {
  append_u32be(out, static_cast<std::uint32_t>(payload.size()));
  size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  uLong crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(4 + payload.size()));
  append_u32be(out, static_cast<std::uint32_t>(crc));
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

void save_png(const Image& img, const std::string& path) {
  const int bpp = img.channels;  // bytes per pixel at 8 bits
  const size_t stride = static_cast<size_t>(img.width) * bpp;

  std::vector<unsigned char> raw((stride + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    unsigned char* row = raw.data() + y * (stride + 1);
    row[0] = 0;  // filter: none
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        row[1 + x * bpp + c] = pixel_to_byte(img.at(y, x, c));
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw FormatError("PNG deflate failed");
  compressed.resize(bound);

  std::vector<unsigned char> file(kPngSignature, kPngSignature + 8);
  std::vector<unsigned char> ihdr;
  append_u32be(ihdr, static_cast<std::uint32_t>(img.width));
  append_u32be(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);                                  // bit depth
  ihdr.push_back(img.channels == 1 ? 0 : 2);          // color type
  ihdr.push_back(0);                                  // compression
  ihdr.push_back(0);                                  // filter method
  ihdr.push_back(0);                                  // no interlace
  append_chunk(file, "IHDR", ihdr);
  append_chunk(file, "IDAT", compressed);
  append_chunk(file, "IEND", {});

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open file for writing: " + path);
  out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
  if (!out) throw FormatError("write failed: " + path);
}

Image load_png(const std::vector<unsigned char>& data, const std::string& path) {
  size_t pos = 8;
  int width = 0, height = 0, channels = 0;
  bool have_ihdr = false;
  std::vector<unsigned char> idat;

  while (pos < data.size()) {
    std::uint32_t length = read_u32be(data, pos, path);
    if (pos + 8 + length + 4 > data.size())
      throw FormatError(path + ": truncated chunk at byte offset " + std::to_string(pos));
    std::string type(reinterpret_cast<const char*>(data.data() + pos + 4), 4);
    const unsigned char* payload = data.data() + pos + 8;

    uLong crc = crc32(0L, data.data() + pos + 4, 4 + length);
    if (crc != read_u32be(data, pos + 8 + length, path))
      throw FormatError(path + ": bad CRC at byte offset " + std::to_string(pos + 8 + length));

    if (type == "IHDR") {
      if (length != 13)
        throw FormatError(path + ": bad IHDR length at byte offset " + std::to_string(pos));
      width = static_cast<int>(read_u32be(data, pos + 8, path));
      height = static_cast<int>(read_u32be(data, pos + 12, path));
      int depth = payload[8], color = payload[9], interlace = payload[12];
      if (depth != 8) throw FormatError(path + ": only 8-bit PNG is supported");
      if (color != 0 && color != 2)
        throw FormatError(path + ": only grayscale and RGB PNG are supported");
      if (interlace != 0) throw FormatError(path + ": interlaced PNG is not supported");
      channels = color == 0 ? 1 : 3;
      have_ihdr = true;
    } else if (type == "IDAT") {
      idat.insert(idat.end(), payload, payload + length);
    } else if (type == "IEND") {
      break;
    }
    pos += 8 + length + 4;
  }
  if (!have_ihdr || width < 1 || height < 1)
    throw FormatError(path + ": missing or invalid IHDR");

  const int bpp = channels;
  const size_t stride = static_cast<size_t>(width) * bpp;
  uLongf raw_size = static_cast<uLongf>((stride + 1) * height);
  std::vector<unsigned char> raw(raw_size);
  if (uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_size != (stride + 1) * static_cast<size_t>(height))
    throw FormatError(path + ": PNG inflate failed");

  // undo per-row filters
  std::vector<unsigned char> pix(stride * height);
  for (int y = 0; y < height; ++y) {
    const unsigned char* row = raw.data() + y * (stride + 1);
    unsigned char* out = pix.data() + y * stride;
    const unsigned char* prev = y > 0 ? pix.data() + (y - 1) * stride : nullptr;
    const int filter = row[0];
    for (size_t i = 0; i < stride; ++i) {
      int a = i >= static_cast<size_t>(bpp) ? out[i - bpp] : 0;
      int b = prev ? prev[i] : 0;
      int c = (prev && i >= static_cast<size_t>(bpp)) ? prev[i - bpp] : 0;
      int x = row[1 + i];
      switch (filter) {
        case 0: break;
        case 1: x += a; break;
        case 2: x += b; break;
        case 3: x += (a + b) / 2; break;
        case 4: x += paeth(a, b, c); break;
        default:
          throw FormatError(path + ": unknown PNG filter " + std::to_string(filter));
      }
      out[i] = static_cast<unsigned char>(x & 0xff);
    }
  }

  Image img(height, width, channels);
  for (int i = 0; i < img.pixels.size(); ++i) img.pixels[i] = byte_to_pixel(pix[i]);
  return img;
}

}  // namespace

DatasetHandle load_idx(const std::string& images_path, const std::string& labels_path) {
  auto data = read_file(images_path);
  std::uint32_t magic = read_u32be(data, 0, images_path);
  if (magic != 0x00000803)
    throw FormatError(images_path + ": bad IDX image magic at byte offset 0");
  std::uint32_t n = read_u32be(data, 4, images_path);
  std::uint32_t rows = read_u32be(data, 8, images_path);
  std::uint32_t cols = read_u32be(data, 12, images_path);
  size_t expected = 16 + static_cast<size_t>(n) * rows * cols;
  if (data.size() < expected)
    throw FormatError(images_path + ": truncated at byte offset " + std::to_string(data.size()));

  DatasetHandle ds;
  ds.source = DatasetHandle::Source::kIdx;
  ds.height = static_cast<int>(rows);
  ds.width = static_cast<int>(cols);
  ds.channels = 1;
  ds.items.reserve(n);
  size_t offset = 16;
  for (std::uint32_t i = 0; i < n; ++i) {
    Tensor t({ds.height, ds.width, 1});
    for (int j = 0; j < t.size(); ++j) t[j] = byte_to_pixel(data[offset + j]);
    ds.items.push_back(std::move(t));
    offset += static_cast<size_t>(rows) * cols;
  }

  if (!labels_path.empty()) {
    auto ldata = read_file(labels_path);
    std::uint32_t lmagic = read_u32be(ldata, 0, labels_path);
    if (lmagic != 0x00000801)
      throw FormatError(labels_path + ": bad IDX label magic at byte offset 0");
    std::uint32_t ln = read_u32be(ldata, 4, labels_path);
    if (ln != n) throw FormatError(labels_path + ": label count does not match images");
    if (ldata.size() < 8 + ln)
      throw FormatError(labels_path + ": truncated at byte offset " +
                        std::to_string(ldata.size()));
    ds.labels.assign(ldata.begin() + 8, ldata.begin() + 8 + ln);
  }
  return ds;
}

Image load_image_file(const std::string& path) {
  auto data = read_file(path);
  if (is_pgm(data)) return load_pgm(data, path);
  if (is_png(data)) return load_png(data, path);
  throw FormatError(path + ": unsupported image format (PGM P5 or PNG expected)");
}

void save_image_file(const Image& img, const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  for (char& c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == ".pgm") {
    save_pgm(img, path);
  } else if (ext == ".png") {
    save_png(img, path);
  } else {
    throw FormatError(path + ": unsupported output extension (use .pgm or .png)");
  }
}

DatasetHandle load_image_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(c));
    if (ext == ".pgm" || ext == ".png") paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw FormatError(dir + ": no .pgm or .png files found");

  DatasetHandle ds;
  ds.source = DatasetHandle::Source::kImageDirectory;
  for (const std::string& p : paths) {
    Image img = load_image_file(p);
    if (ds.items.empty()) {
      ds.height = img.height;
      ds.width = img.width;
      ds.channels = img.channels;
    } else if (img.height != ds.height || img.width != ds.width ||
               img.channels != ds.channels) {
      throw FormatError(p + ": image geometry differs from the rest of the directory");
    }
    ds.items.push_back(std::move(img.pixels));
  }
  return ds;
}

DatasetHandle synthetic_shapes(int count, int size, std::uint64_t seed) {
  if (count < 1) throw ParameterError("synthetic_shapes: count must be >= 1");
  if (size < 8) throw ParameterError("synthetic_shapes: size must be >= 8");

  RngStream rng(seed);
  DatasetHandle ds;
  ds.source = DatasetHandle::Source::kSynthetic;
  ds.height = ds.width = size;
  ds.channels = 1;
  ds.items.reserve(count);

  for (int i = 0; i < count; ++i) {
    Image img(size, size, 1);
    const int kind = i % 3;
    if (kind == 0) {
      // constant rectangles on a constant background
      double bg = rng.uniform(-0.8, 0.8);
      img.pixels.fill(bg);
      int rects = 2 + rng.uniform_int(3);
      for (int r = 0; r < rects; ++r) {
        int rw = 2 + rng.uniform_int(size / 2);
        int rh = 2 + rng.uniform_int(size / 2);
        int ox = rng.uniform_int(size - rw + 1);
        int oy = rng.uniform_int(size - rh + 1);
        double v = rng.uniform(-0.9, 0.9);
        for (int y = oy; y < oy + rh; ++y)
          for (int x = ox; x < ox + rw; ++x) img.at(y, x) = v;
      }
    } else if (kind == 1) {
      double bg = rng.uniform(-0.8, 0.8);
      img.pixels.fill(bg);
      int discs = 1 + rng.uniform_int(3);
      for (int d = 0; d < discs; ++d) {
        double cx = rng.uniform(0.2, 0.8) * size;
        double cy = rng.uniform(0.2, 0.8) * size;
        double radius = rng.uniform(0.08, 0.3) * size;
        double v = rng.uniform(-0.9, 0.9);
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius) img.at(y, x) = v;
      }
    } else {
      double v0 = rng.uniform(-0.5, 0.5);
      double gx = rng.uniform(-0.5, 0.5);
      double gy = rng.uniform(-0.5, 0.5);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          img.at(y, x) = v0 + gx * (static_cast<double>(x) / size - 0.5) +
                         gy * (static_cast<double>(y) / size - 0.5);
    }
    for (int j = 0; j < img.pixels.size(); ++j)
      img.pixels[j] = std::clamp(img.pixels[j], -1.0, 1.0);
    ds.items.push_back(std::move(img.pixels));
  }
  return ds;
}

}  // namespace prox
