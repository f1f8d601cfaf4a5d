#include "splitwire/image_io.hpp"

#include <cctype>

#include "splitwire/model_file.hpp"

namespace splitwire {

namespace {

class PnmHeader {
 public:
  explicit PnmHeader(ByteView bytes) : bytes_(bytes) {}

  std::uint32_t number() {
    skip_space_and_comments();
    std::uint64_t v = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) throw FormatError(FormatError::Kind::Malformed, "pnm: header number too large");
    }
    if (digits == 0) throw FormatError(FormatError::Kind::Malformed, "pnm: expected a number in header");
    return static_cast<std::uint32_t>(v);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
      throw FormatError(FormatError::Kind::Malformed, "pnm: missing whitespace before raster");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  ByteView bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

Tensor decode_pnm(ByteView bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw FormatError(FormatError::Kind::BadMagic, "pnm: expected binary PGM (P5) or PPM (P6)");
  const std::uint32_t channels = bytes[1] == '5' ? 1 : 3;
  PnmHeader header(bytes);
  const auto width = header.number();
  const auto height = header.number();
  const auto maxval = header.number();
  if (width == 0 || height == 0) throw FormatError(FormatError::Kind::Malformed, "pnm: empty image");
  if (maxval != 255) throw FormatError(FormatError::Kind::Malformed, "pnm: only maxval 255 is supported");
  const auto offset = header.raster_offset();
  const std::size_t n = std::size_t{channels} * width * height;
  if (bytes.size() - offset < n) throw FormatError(FormatError::Kind::Truncated, "pnm: truncated raster");

  Tensor image({channels, height, width});
  // Raster is interleaved HWC.
  for (std::uint32_t y = 0; y < height; ++y)
    for (std::uint32_t x = 0; x < width; ++x)
      for (std::uint32_t c = 0; c < channels; ++c)
        image[(std::size_t{c} * height + y) * width + x] =
            static_cast<float>(bytes[offset + (std::size_t{y} * width + x) * channels + c]) / 255.0f;
  return image;
}

Tensor read_pnm(const std::filesystem::path& path) { return decode_pnm(read_file(path)); }

Tensor fit_to_input(const Tensor& image, const Shape& input_shape) {
  if (image.shape() == input_shape) return image;
  if (image.rank() == 3 && input_shape.size() == 3 && image.dim(0) == 1 && image.dim(1) == input_shape[1] &&
      image.dim(2) == input_shape[2]) {
    Tensor out(input_shape);
    const std::size_t plane = std::size_t{input_shape[1]} * input_shape[2];
    for (std::uint32_t c = 0; c < input_shape[0]; ++c)
      std::copy(image.values().begin(), image.values().end(), out.values().begin() + c * plane);
    return out;
  }
  throw ShapeError("image of shape " + to_string(image.shape()) + " cannot feed model input " + to_string(input_shape));
}

}  // namespace splitwire
