#include "bks/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <vector>

namespace bks {

namespace fs = std::filesystem;

std::string to_string(ImageIoErrorKind kind) {
  switch (kind) {
    case ImageIoErrorKind::missing_file: return "missing file";
    case ImageIoErrorKind::not_png: return "not a PNG file";
    case ImageIoErrorKind::unsupported_format: return "unsupported PNG format";
    case ImageIoErrorKind::decode_failure: return "PNG decode failure";
    case ImageIoErrorKind::write_failure: return "PNG write failure";
  }
  return "image I/O error";
}

ImageIoError::ImageIoError(ImageIoErrorKind kind, const fs::path& path, const std::string& detail)
    : std::runtime_error(to_string(kind) + ": " + path.string() +
                         (detail.empty() ? "" : " (" + detail + ")")),
      kind_(kind) {}

namespace {

constexpr std::array<unsigned char, 8> kSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

struct Header {
  int bit_depth = 0;
  int color_type = 0;
};

// Reads the signature and IHDR directly so format problems are reported before
// libpng converts them away.
Header read_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError(ImageIoErrorKind::missing_file, path, "cannot open");
  std::array<unsigned char, 33> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got < kSignature.size() || !std::equal(kSignature.begin(), kSignature.end(), buf.begin())) {
    throw ImageIoError(ImageIoErrorKind::not_png, path, "bad signature");
  }
  if (got < buf.size() || std::memcmp(buf.data() + 12, "IHDR", 4) != 0) {
    throw ImageIoError(ImageIoErrorKind::decode_failure, path, "missing IHDR");
  }
  return {buf[24], buf[25]};
}

}  // namespace

ImageTensor load_image(const fs::path& path) {
  if (!fs::exists(path)) throw ImageIoError(ImageIoErrorKind::missing_file, path, "");
  const Header h = read_header(path);
  int channels = 0;
  if (h.color_type == PNG_COLOR_TYPE_GRAY) channels = 1;
  else if (h.color_type == PNG_COLOR_TYPE_RGB) channels = 3;
  if (channels == 0 || h.bit_depth != 8) {
    throw ImageIoError(ImageIoErrorKind::unsupported_format, path,
                       "bit depth " + std::to_string(h.bit_depth) + ", color type " +
                           std::to_string(h.color_type));
  }

  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ImageIoError(ImageIoErrorKind::decode_failure, path, image.message);
  }
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int height = static_cast<int>(image.height);
  const int width = static_cast<int>(image.width);
  std::vector<png_byte> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ImageIoError(ImageIoErrorKind::decode_failure, path, msg);
  }

  ImageTensor img({channels, height, width});
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const png_byte b = bytes[static_cast<std::size_t>((y * width + x) * channels + c)];
        img.at(c, y, x) = static_cast<float>(b) / 255.0f;
      }
    }
  }
  return img;
}

unsigned char quantize_byte(float v) {
  const double c = std::clamp(std::isnan(v) ? 0.0 : static_cast<double>(v), 0.0, 1.0);
  return static_cast<unsigned char>(std::floor(c * 255.0 + 0.5));
}

void save_image(const ImageTensor& img, const fs::path& path) {
  require_image(img, "save_image");
  const int channels = img.channels();
  const int height = img.height();
  const int width = img.width();
  std::vector<png_byte> bytes(static_cast<std::size_t>(channels) * height * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        bytes[static_cast<std::size_t>((y * width + x) * channels + c)] =
            quantize_byte(img.at(c, y, x));
      }
    }
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw ImageIoError(ImageIoErrorKind::write_failure, path, image.message);
  }
}

namespace {

std::map<std::string, fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory missing: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      out.emplace(entry.path().stem().string(), entry.path());
    }
  }
  return out;
}

}  // namespace

PairedDataset load_paired_dataset(const fs::path& root) {
  const auto sharp = png_files(root / "sharp");
  const auto blur = png_files(root / "blur");
  for (const auto& [id, path] : sharp) {
    if (!blur.contains(id)) throw std::runtime_error("unmatched sharp image: " + path.string());
  }
  for (const auto& [id, path] : blur) {
    if (!sharp.contains(id)) throw std::runtime_error("unmatched blurry image: " + path.string());
  }
  PairedDataset data;
  for (const auto& [id, path] : sharp) {
    ImagePair p{load_image(path), load_image(blur.at(id)), id};
    if (!p.sharp.same_shape(p.blurry)) {
      throw std::runtime_error("pair '" + id + "' has mismatched shapes");
    }
    data.add(std::move(p));
  }
  return data;
}

void save_paired_dataset(const PairedDataset& data, const fs::path& root) {
  fs::create_directories(root / "sharp");
  fs::create_directories(root / "blur");
  for (const ImagePair& p : data) {
    save_image(p.sharp, root / "sharp" / (p.id + ".png"));
    save_image(p.blurry, root / "blur" / (p.id + ".png"));
  }
}

}  // namespace bks
