#pragma once

#include <snlab/errors.hpp>
#include <snlab/matrix.hpp>
#include <snlab/random.hpp>
#include <snlab/shallow_net.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace snlab {

/// Training matrices plus the integer class of each column.
struct LabeledData {
  Dataset data;
  std::vector<std::uint8_t> labels;
};

/// Gaussian columns scaled to unit norm.
inline Matrix sample_unit_sphere_data(std::size_t n, std::size_t d0, const RngStream& rng) {
  if (n == 0 || d0 == 0) throw ArgumentError("sample_unit_sphere_data: n and d0 must be positive");
  Matrix x = gaussian_matrix(d0, n, 1.0, rng);
  const auto norms = column_norms(x);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < d0; ++i) x(i, j) /= norms[j];
  return x;
}

/// Centers each column and scales it to unit norm. A constant column cannot be normalized.
inline void center_and_normalize_columns(Matrix& x) {
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
    mean /= static_cast<double>(x.rows());
    double ss = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      x(i, j) -= mean;
      ss += x(i, j) * x(i, j);
    }
    if (!(ss > 0.0))
      throw PreconditionError("center_and_normalize_columns: column " + std::to_string(j) +
                              " is constant");
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t i = 0; i < x.rows(); ++i) x(i, j) *= inv;
  }
}

/// One-hot columns scaled by 1/sqrt(n), so that ||Y||_F = 1.
inline Matrix one_hot_labels(const std::vector<std::uint8_t>& labels, std::size_t classes) {
  Matrix y(classes, labels.size());
  const double s = labels.empty() ? 0.0 : 1.0 / std::sqrt(static_cast<double>(labels.size()));
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] >= classes)
      throw FormatError("one_hot_labels: label " + std::to_string(labels[j]) + " out of range");
    y(labels[j], j) = s;
  }
  return y;
}

inline constexpr std::size_t kDigitSide = 8;
inline constexpr std::size_t kDigitClasses = 10;

/// Seven-segment glyph of digit `k` on an 8x8 grid, pixels in {0, 1}, row-major.
inline std::array<double, kDigitSide * kDigitSide> digit_glyph(std::size_t k) {
  // Segment masks a..g for 0..9.
  static constexpr std::array<std::uint8_t, 10> kSegments = {0x3F, 0x06, 0x5B, 0x4F, 0x66,
                                                             0x6D, 0x7D, 0x07, 0x7F, 0x6F};
  std::array<double, kDigitSide * kDigitSide> g{};
  auto on = [&](std::size_t r, std::size_t c) { g[r * kDigitSide + c] = 1.0; };
  const std::uint8_t m = kSegments.at(k);
  for (std::size_t c = 2; c <= 5; ++c) {
    if (m & 0x01) on(0, c);
    if (m & 0x40) on(3, c);
    if (m & 0x08) on(7, c);
  }
  for (std::size_t r = 1; r <= 3; ++r) {
    if (m & 0x02) on(r, 6);
    if (m & 0x20) on(r, 1);
  }
  for (std::size_t r = 4; r <= 6; ++r) {
    if (m & 0x04) on(r, 6);
    if (m & 0x10) on(r, 1);
  }
  return g;
}

/// Noisy 8x8 seven-segment digits with uniformly drawn classes. Pixels are clamped to [0, 1]
/// and then columns are centered and normalized; labels are scaled one-hot.
inline LabeledData synthetic_digits(std::size_t n, const RngStream& rng, double noise = 0.25) {
  if (n == 0) throw ArgumentError("synthetic_digits: n must be positive");
  const std::size_t d0 = kDigitSide * kDigitSide;
  std::vector<std::array<double, kDigitSide * kDigitSide>> glyphs;
  for (std::size_t k = 0; k < kDigitClasses; ++k) glyphs.push_back(digit_glyph(k));
  const RngStream classes = rng.child(0);
  const RngStream pixels = rng.child(1);
  std::uint64_t counter = 0;
  LabeledData out;
  out.labels.resize(n);
  Matrix x(d0, n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto k = static_cast<std::uint8_t>(classes.below(kDigitClasses, counter));
    out.labels[j] = k;
    for (std::size_t i = 0; i < d0; ++i) {
      const double v = glyphs[k][i] + noise * pixels.normal(j * d0 + i);
      x(i, j) = std::clamp(v, 0.0, 1.0);
    }
  }
  center_and_normalize_columns(x);
  out.data = make_dataset(std::move(x), one_hot_labels(out.labels, kDigitClasses));
  return out;
}

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return bytes;
}

inline std::uint32_t big_endian_u32(const std::vector<unsigned char>& b, std::size_t at,
                                    const std::string& path) {
  if (b.size() < at + 4)
    throw LengthError("'" + path + "': header truncated at byte " + std::to_string(b.size()));
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

inline std::string hex32(std::uint32_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s += kDigits[(v >> shift) & 0xF];
  return s;
}

inline void expect_magic(std::uint32_t observed, std::uint32_t expected, const std::string& path) {
  if (observed != expected)
    throw FormatError("'" + path + "': bad IDX magic " + hex32(observed) + " (expected " +
                      hex32(expected) + ")");
}

}  // namespace detail

/// Parses an IDX image file and its IDX label file. Pixels are scaled to [0, 1], columns are
/// centered and normalized and labels are scaled one-hot. `max_items` = 0 keeps every item.
inline LabeledData load_idx(const std::string& images_path, const std::string& labels_path,
                            std::size_t max_items = 0) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);
  detail::expect_magic(detail::big_endian_u32(img, 0, images_path), kIdxImageMagic, images_path);
  detail::expect_magic(detail::big_endian_u32(lab, 0, labels_path), kIdxLabelMagic, labels_path);

  const std::size_t count = detail::big_endian_u32(img, 4, images_path);
  const std::size_t rows = detail::big_endian_u32(img, 8, images_path);
  const std::size_t cols = detail::big_endian_u32(img, 12, images_path);
  const std::size_t label_count = detail::big_endian_u32(lab, 4, labels_path);
  if (label_count != count)
    throw FormatError("IDX item counts differ: " + std::to_string(count) + " images, " +
                      std::to_string(label_count) + " labels");
  const std::size_t d0 = rows * cols;
  if (img.size() - 16 != count * d0)
    throw LengthError("'" + images_path + "': header declares " + std::to_string(count * d0) +
                      " pixels, payload has " + std::to_string(img.size() - 16));
  if (lab.size() - 8 != count)
    throw LengthError("'" + labels_path + "': header declares " + std::to_string(count) +
                      " labels, payload has " + std::to_string(lab.size() - 8));
  if (count == 0 || d0 == 0) throw FormatError("'" + images_path + "': empty IDX file");

  const std::size_t n = max_items == 0 ? count : std::min(count, max_items);
  Matrix x(d0, n);
  LabeledData out;
  out.labels.assign(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < d0; ++i) x(i, j) = img[16 + j * d0 + i] / 255.0;
  center_and_normalize_columns(x);
  out.data = make_dataset(std::move(x), one_hot_labels(out.labels, kDigitClasses));
  return out;
}

}  // namespace snlab
