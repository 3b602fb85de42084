#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace frspec {

using Token = std::int32_t;
using TokenSequence = std::vector<Token>;

// Dense row-major float32 matrix.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {}

    float *       row(int i)       { return data.data() + static_cast<std::size_t>(i) * cols; }
    const float * row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }

    std::span<float>       row_span(int i)       { return {row(i), static_cast<std::size_t>(cols)}; }
    std::span<const float> row_span(int i) const { return {row(i), static_cast<std::size_t>(cols)}; }

    float & at(int i, int j)       { return data[static_cast<std::size_t>(i) * cols + j]; }
    float   at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

// Nonnegative probabilities over `dim` entries, summing to 1 within 1e-5.
struct ProbVector {
    int dim = 0;
    std::vector<float> probs;
};

// rows x cols bit matrix, row-major, 64 columns per word.
class BitMask {
  public:
    BitMask() = default;
    BitMask(int rows, int cols)
        : rows_(rows), cols_(cols), stride_((cols + 63) / 64),
          words_(static_cast<std::size_t>(rows) * stride_, 0) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    void set(int r, int c) { words_[word_idx(r, c)] |= bit(c); }
    bool test(int r, int c) const { return (words_[word_idx(r, c)] & bit(c)) != 0; }

    // Sets columns [begin, end) of row r.
    void set_range(int r, int begin, int end) {
        int c = begin;
        while (c < end && (c & 63) != 0) set(r, c++);
        for (; c + 64 <= end; c += 64) words_[word_idx(r, c)] = ~std::uint64_t{0};
        while (c < end) set(r, c++);
    }

  private:
    std::size_t word_idx(int r, int c) const {
        return static_cast<std::size_t>(r) * stride_ + (c >> 6);
    }
    static std::uint64_t bit(int c) { return std::uint64_t{1} << (c & 63); }

    int rows_ = 0;
    int cols_ = 0;
    int stride_ = 0;
    std::vector<std::uint64_t> words_;
};

}  // namespace frspec
