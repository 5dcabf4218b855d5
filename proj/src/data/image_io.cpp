#include "sacc/data/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>

#ifdef SACC_HAVE_PNG
#include <png.h>
#endif

#include "sacc/errors.hpp"

namespace fs = std::filesystem;

namespace sacc {

namespace {

std::string lower_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

ImageFormat resolve_format(const fs::path& path, ImageFormat format) {
  if (format != ImageFormat::Auto) return format;
  const std::string ext = lower_extension(path);
  if (ext == ".ppm") return ImageFormat::Ppm;
  if (ext == ".png") return ImageFormat::Png;
  throw IoError(path.string() + ": unrecognised image extension '" + ext + "'");
}

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(const std::vector<unsigned char>& bytes, std::size_t& pos, const fs::path& path) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
  if (tok.empty()) throw IoError(path.string() + ": truncated PPM header");
  return tok;
}

std::size_t ppm_number(const std::vector<unsigned char>& bytes, std::size_t& pos, const fs::path& path) {
  const std::string tok = ppm_token(bytes, pos, path);
  if (!std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw IoError(path.string() + ": malformed PPM header field '" + tok + "'");
  }
  return std::stoul(tok);
}

ImageBatch read_ppm(const fs::path& path) {
  const auto bytes = read_bytes(path);
  std::size_t pos = 0;
  if (ppm_token(bytes, pos, path) != "P6") throw IoError(path.string() + ": not a binary PPM (P6) file");
  const std::size_t width = ppm_number(bytes, pos, path);
  const std::size_t height = ppm_number(bytes, pos, path);
  const std::size_t maxval = ppm_number(bytes, pos, path);
  if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) {
    throw IoError(path.string() + ": invalid PPM geometry or maxval");
  }
  ++pos;  // single whitespace byte before the raster
  const std::size_t bytes_per_sample = maxval < 256 ? 1 : 2;
  const std::size_t samples = width * height * 3;
  if (bytes.size() < pos + samples * bytes_per_sample) throw IoError(path.string() + ": truncated PPM raster");
  ImageBatch img(1, height, width, 3, maxval + 1);
  const double scale = static_cast<double>(maxval);
  for (std::size_t i = 0; i < samples; ++i) {
    std::size_t v = bytes[pos + i * bytes_per_sample];
    if (bytes_per_sample == 2) v = (v << 8) | bytes[pos + i * 2 + 1];
    if (v > maxval) throw IoError(path.string() + ": PPM sample exceeds maxval");
    img.values[i] = static_cast<double>(v) / scale;
  }
  return img;
}

std::vector<std::uint16_t> encode_levels(const ImageBatch& batch, std::size_t index) {
  const std::size_t sz = batch.image_size();
  std::vector<std::uint16_t> out(sz);
  for (std::size_t i = 0; i < sz; ++i) out[i] = static_cast<std::uint16_t>(batch.level_of(index * sz + i));
  return out;
}

void write_ppm(const fs::path& path, const ImageBatch& batch, std::size_t index) {
  if (batch.channels != 3) throw DimensionError("PPM output needs 3 channels");
  if (batch.levels > 65536) throw InputError("bit depth too large for PPM");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << "P6\n" << batch.width << " " << batch.height << "\n" << batch.levels - 1 << "\n";
  const auto levels = encode_levels(batch, index);
  std::vector<char> raster;
  raster.reserve(levels.size() * 2);
  for (auto v : levels) {
    if (batch.levels > 256) raster.push_back(static_cast<char>(v >> 8));
    raster.push_back(static_cast<char>(v & 0xFF));
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

#ifdef SACC_HAVE_PNG
ImageBatch read_png(const fs::path& path) {
  const auto bytes = read_bytes(path);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw IoError(path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError(path.string() + ": " + image.message);
  }
  ImageBatch img(1, image.height, image.width, 3, 256);
  for (std::size_t i = 0; i < buffer.size(); ++i) img.values[i] = buffer[i] / 255.0;
  return img;
}

void write_png(const fs::path& path, const ImageBatch& batch, std::size_t index) {
  if (batch.channels != 3) throw DimensionError("PNG output needs 3 channels");
  if (batch.levels != 256) throw InputError("PNG output supports 8-bit images only");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(batch.width);
  image.height = static_cast<png_uint_32>(batch.height);
  image.format = PNG_FORMAT_RGB;
  const auto levels = encode_levels(batch, index);
  std::vector<unsigned char> buffer(levels.begin(), levels.end());
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError(path.string() + ": " + image.message);
  }
}
#else
ImageBatch read_png(const fs::path& path) { throw IoError(path.string() + ": built without PNG support"); }
void write_png(const fs::path& path, const ImageBatch&, std::size_t) {
  throw IoError(path.string() + ": built without PNG support");
}
#endif

}  // namespace

ImageFormat parse_image_format(const std::string& name) {
  if (name == "auto") return ImageFormat::Auto;
  if (name == "ppm") return ImageFormat::Ppm;
  if (name == "png") return ImageFormat::Png;
  throw ConfigError("unknown image format '" + name + "' (expected auto, ppm or png)");
}

bool png_supported() {
#ifdef SACC_HAVE_PNG
  return true;
#else
  return false;
#endif
}

ImageBatch read_image(const fs::path& path, ImageFormat format) {
  ImageBatch img = resolve_format(path, format) == ImageFormat::Ppm ? read_ppm(path) : read_png(path);
  img.ids = {path.stem().string()};
  return img;
}

void write_image(const fs::path& path, const ImageBatch& batch, std::size_t index, ImageFormat format) {
  if (index >= batch.count) throw IndexError("image index " + std::to_string(index) + " out of range");
  if (resolve_format(path, format) == ImageFormat::Ppm) {
    write_ppm(path, batch, index);
  } else {
    write_png(path, batch, index);
  }
}

std::vector<fs::path> list_image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lower_extension(entry.path());
    if (ext == ".ppm" || ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

ImageBatch load_images(const fs::path& path, ImageFormat format) {
  if (!fs::exists(path)) throw IoError(path.string() + ": no such file or directory");
  if (!fs::is_directory(path)) return read_image(path, format);
  const auto files = list_image_files(path);
  if (files.empty()) throw InputError(path.string() + ": directory holds no .ppm or .png images");
  std::vector<ImageBatch> parts;
  parts.reserve(files.size());
  for (const auto& f : files) {
    parts.push_back(read_image(f, format));
    const auto& first = parts.front();
    const auto& last = parts.back();
    if (last.height != first.height || last.width != first.width || last.levels != first.levels) {
      throw InputError(f.string() + ": dimensions or bit depth differ from " + files.front().string());
    }
  }
  return ImageBatch::concat(parts);
}

VideoClip load_video(const fs::path& dir) { return {load_images(dir)}; }

void save_video(const fs::path& dir, const VideoClip& clip) {
  fs::create_directories(dir);
  for (std::size_t t = 0; t < clip.length(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05zu.ppm", t);
    write_image(dir / name, clip.frames, t, ImageFormat::Ppm);
  }
}

}  // namespace sacc
