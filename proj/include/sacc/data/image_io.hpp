#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sacc/data/image.hpp"

namespace sacc {

enum class ImageFormat { Auto, Ppm, Png };

/// Parses "auto", "ppm" or "png" (ConfigError otherwise).
ImageFormat parse_image_format(const std::string& name);

/// True when the build links libpng.
bool png_supported();

/// Decodes one 8-bit (or 16-bit PPM) RGB file to a single-image batch in [0,1].
/// The batch id is the file stem. Raises IoError naming the file on failure.
ImageBatch read_image(const std::filesystem::path& path, ImageFormat format = ImageFormat::Auto);

/// Encodes image `index` of `batch`; values are rounded to the batch bit depth.
void write_image(const std::filesystem::path& path, const ImageBatch& batch, std::size_t index = 0,
                 ImageFormat format = ImageFormat::Auto);

/// Lists decodable image files (.ppm, .png) in a directory, lexicographically.
std::vector<std::filesystem::path> list_image_files(const std::filesystem::path& dir);

/**
 * Loads a file, or every image in a directory in lexicographic order. All
 * images must share geometry and bit depth (InputError otherwise).
 */
ImageBatch load_images(const std::filesystem::path& path, ImageFormat format = ImageFormat::Auto);

/// A directory of frames in lexicographic file order.
VideoClip load_video(const std::filesystem::path& dir);

/// Writes frames as frame_00000.ppm, frame_00001.ppm, ... into `dir`.
void save_video(const std::filesystem::path& dir, const VideoClip& clip);

}  // namespace sacc
