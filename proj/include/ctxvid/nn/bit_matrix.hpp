#pragma once

#include <bit>
#include <cstdint>
#include <vector>

#include "ctxvid/nn/tensor.hpp"

namespace ctxvid {

/// Packed binary matrix, row-major, 64 entries per word. Rows are word-aligned
/// so a row can be scanned or filled independently.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(std::size_t rows, std::size_t cols, bool value = false)
      : rows_(rows), cols_(cols), words_per_row_((cols + 63) / 64), bits_(rows * words_per_row_, 0) {
    if (value)
      for (std::size_t r = 0; r < rows_; ++r) fill_row(r, true);
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  bool get(std::size_t r, std::size_t c) const {
    return (bits_[r * words_per_row_ + c / 64] >> (c % 64)) & 1U;
  }
  void set(std::size_t r, std::size_t c, bool v) {
    auto& w = bits_[r * words_per_row_ + c / 64];
    const std::uint64_t bit = std::uint64_t{1} << (c % 64);
    w = v ? (w | bit) : (w & ~bit);
  }

  /// Sets columns [begin, end) of row r.
  void fill_range(std::size_t r, std::size_t begin, std::size_t end, bool v) {
    for (std::size_t c = begin; c < end; ++c) set(r, c, v);
  }
  void fill_row(std::size_t r, bool v) { fill_range(r, 0, cols_, v); }

  std::size_t count_row(std::size_t r) const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < words_per_row_; ++k) n += std::popcount(bits_[r * words_per_row_ + k]);
    return n;
  }
  std::size_t count_range(std::size_t r, std::size_t begin, std::size_t end) const {
    std::size_t n = 0;
    for (std::size_t c = begin; c < end; ++c) n += get(r, c);
    return n;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto w : bits_) n += std::popcount(w);
    return n;
  }

  bool operator==(const BitMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && bits_ == o.bits_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t words_per_row_ = 0;
  std::vector<std::uint64_t> bits_;
};

}  // namespace ctxvid
