#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sfa/errors.hpp"

namespace sfa {

// Extents of a feature map: streams, views, height, width, channels.
struct Shape5 {
    std::size_t s = 0, n = 0, h = 0, w = 0, c = 0;

    std::size_t numel() const { return s * n * h * w * c; }
    std::size_t tokens() const { return s * n * h * w; }
    bool operator==(const Shape5&) const = default;
    std::string str() const;
};

// Dense rank-5 array of doubles, row-major in (s, n, h, w, c) order.
class FeatureMap {
  public:
    FeatureMap() = default;
    explicit FeatureMap(Shape5 shape);
    FeatureMap(Shape5 shape, std::vector<double> data);

    const Shape5& shape() const { return shape_; }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    double& at(std::size_t s, std::size_t n, std::size_t h, std::size_t w,
               std::size_t c);
    double at(std::size_t s, std::size_t n, std::size_t h, std::size_t w,
              std::size_t c) const;

    // Copies stream `s` out as an S=1 map.
    FeatureMap stream(std::size_t s) const;

    bool all_finite() const;

  private:
    Shape5 shape_;
    std::vector<double> data_;
};

// Dense row-major matrix.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }
    double* row(std::size_t r) { return data_.data() + r * cols_; }

    bool operator==(const Matrix&) const = default;

  private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

// Exact dense product with fixed left-to-right summation over the inner
// dimension, so results are bit-reproducible.
Matrix matmul(const Matrix& a, const Matrix& b);

// a * b^T without materializing the transpose; same summation order as
// matmul(a, transpose(b)).
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// a^T * b; summation runs over the rows of a in order.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// Row-wise softmax with per-row max subtraction. Rows sum to 1 within 1e-12.
Matrix softmax_rows(const Matrix& m);

// Token view of a feature map: one row per (s, n, h, w) position in
// stream-major order, C columns. The inverse reconstructs bit-exactly.
Matrix flatten_tokens(const FeatureMap& f);
FeatureMap unflatten_tokens(const Matrix& tokens, Shape5 shape);

// Deterministic 64-bit generator: splitmix64 stream, uniforms via the top
// 53 bits, normals via the Box-Muller trigonometric transform (pairs, the
// second variate cached). Identical seed gives identical output everywhere.
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    // Uniform in [0, 1).
    double next_uniform();
    // Standard normal.
    double next_normal();

    // Mixes a stream index into a seed; used for per-sample sub-seeds.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index);

  private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

FeatureMap seeded_normal(Shape5 shape, std::uint64_t seed);
Matrix seeded_normal_matrix(std::size_t rows, std::size_t cols,
                            std::uint64_t seed, double scale = 1.0);

// Binary feature-map file: magic "SFA1", five little-endian u32 extents,
// then the doubles little-endian row-major.
void save_feature_map(const FeatureMap& f, const std::string& path);
FeatureMap load_feature_map(const std::string& path);

}  // namespace sfa
