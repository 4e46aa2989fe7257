#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "bks/imaging.hpp"

namespace bks {

enum class ImageIoErrorKind {
  missing_file,
  not_png,
  unsupported_format,  // anything but 8-bit gray or 8-bit RGB without alpha
  decode_failure,
  write_failure,
};

std::string to_string(ImageIoErrorKind kind);

class ImageIoError : public std::runtime_error {
 public:
  ImageIoError(ImageIoErrorKind kind, const std::filesystem::path& path, const std::string& detail);
  ImageIoErrorKind kind() const { return kind_; }

 private:
  ImageIoErrorKind kind_;
};

// 8-bit gray or RGB PNG; values become v / 255.
ImageTensor load_image(const std::filesystem::path& path);

// Clamps to [0, 1] and quantizes with floor(v * 255 + 0.5).
void save_image(const ImageTensor& img, const std::filesystem::path& path);

// Quantized byte for one value, as written by save_image.
unsigned char quantize_byte(float v);

// <root>/sharp/<id>.png paired with <root>/blur/<id>.png. Throws
// std::runtime_error naming the first file without a partner.
PairedDataset load_paired_dataset(const std::filesystem::path& root);
void save_paired_dataset(const PairedDataset& data, const std::filesystem::path& root);

}  // namespace bks
