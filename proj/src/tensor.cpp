#include "sfa/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace sfa {

std::string Shape5::str() const {
    std::ostringstream os;
    os << "(" << s << "," << n << "," << h << "," << w << "," << c << ")";
    return os.str();
}

static void check_positive(const Shape5& sh) {
    if (sh.s == 0 || sh.n == 0 || sh.h == 0 || sh.w == 0 || sh.c == 0) {
        throw ShapeError("FeatureMap extents must be positive, got " + sh.str());
    }
}

FeatureMap::FeatureMap(Shape5 shape) : shape_(shape) {
    check_positive(shape);
    data_.assign(shape.numel(), 0.0);
}

FeatureMap::FeatureMap(Shape5 shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
    check_positive(shape);
    if (data_.size() != shape.numel()) {
        throw ShapeError("FeatureMap data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape.str());
    }
}

static std::size_t index5(const Shape5& sh, std::size_t s, std::size_t n,
                          std::size_t h, std::size_t w, std::size_t c) {
    return (((s * sh.n + n) * sh.h + h) * sh.w + w) * sh.c + c;
}

double& FeatureMap::at(std::size_t s, std::size_t n, std::size_t h,
                       std::size_t w, std::size_t c) {
    return data_[index5(shape_, s, n, h, w, c)];
}

double FeatureMap::at(std::size_t s, std::size_t n, std::size_t h,
                      std::size_t w, std::size_t c) const {
    return data_[index5(shape_, s, n, h, w, c)];
}

FeatureMap FeatureMap::stream(std::size_t s) const {
    if (s >= shape_.s) {
        throw ShapeError("stream index out of range");
    }
    Shape5 out_shape = shape_;
    out_shape.s = 1;
    std::size_t block = shape_.n * shape_.h * shape_.w * shape_.c;
    std::vector<double> out(data_.begin() + s * block,
                            data_.begin() + (s + 1) * block);
    return FeatureMap(out_shape, std::move(out));
}

bool FeatureMap::all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
}

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("Matrix data length does not match " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions disagree, " +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " * " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
    Matrix out(a.rows(), b.cols());
    // k outer, m inner: each out[t,m] accumulates over k in increasing order
    // while staying cache friendly.
    for (std::size_t t = 0; t < a.rows(); ++t) {
        double* orow = out.row(t);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double av = a.at(t, k);
            const double* brow = b.row(k);
            for (std::size_t m = 0; m < b.cols(); ++m) {
                orow[m] += av * brow[m];
            }
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: inner dimensions disagree");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t t = 0; t < a.rows(); ++t) {
        const double* arow = a.row(t);
        double* orow = out.row(t);
        for (std::size_t m = 0; m < b.rows(); ++m) {
            const double* brow = b.row(m);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
            orow[m] = acc;
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: inner dimensions disagree");
    }
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* arow = a.row(k);
        const double* brow = b.row(k);
        for (std::size_t t = 0; t < a.cols(); ++t) {
            double* orow = out.row(t);
            const double av = arow[t];
            for (std::size_t m = 0; m < b.cols(); ++m) orow[m] += av * brow[m];
        }
    }
    return out;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* in = m.row(r);
        double* o = out.row(r);
        double mx = in[0];
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (std::isnan(in[c])) {
                throw NumericError("softmax_rows: NaN input at row " +
                                   std::to_string(r));
            }
            mx = std::max(mx, in[c]);
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        for (std::size_t c = 0; c < m.cols(); ++c) o[c] /= sum;
    }
    return out;
}

Matrix flatten_tokens(const FeatureMap& f) {
    // Row-major layout already matches stream-major token order.
    return Matrix(f.shape().tokens(), f.shape().c, f.data());
}

FeatureMap unflatten_tokens(const Matrix& tokens, Shape5 shape) {
    if (tokens.rows() != shape.tokens() || tokens.cols() != shape.c) {
        throw ShapeError("unflatten_tokens: " + std::to_string(tokens.rows()) +
                         "x" + std::to_string(tokens.cols()) +
                         " does not match shape " + shape.str());
    }
    return FeatureMap(shape, tokens.data());
}

std::uint64_t SeededRng::next_u64() {
    // splitmix64 (Steele, Lea, Flood 2014).
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double SeededRng::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::next_normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // Box-Muller; u1 shifted into (0, 1] so log is finite.
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t SeededRng::derive(std::uint64_t seed, std::uint64_t index) {
    SeededRng mix(seed ^ (0xA0761D6478BD642FULL * (index + 1)));
    return mix.next_u64();
}

FeatureMap seeded_normal(Shape5 shape, std::uint64_t seed) {
    check_positive(shape);
    FeatureMap f(shape);
    SeededRng rng(seed);
    for (double& v : f.data()) v = rng.next_normal();
    return f;
}

Matrix seeded_normal_matrix(std::size_t rows, std::size_t cols,
                            std::uint64_t seed, double scale) {
    if (rows == 0 || cols == 0) throw ShapeError("matrix extents must be positive");
    Matrix m(rows, cols);
    SeededRng rng(seed);
    for (double& v : m.data()) v = scale * rng.next_normal();
    return m;
}

static void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

static std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64_le(std::ostream& os, const double* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 8));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, &p[i], 8);
            unsigned char b[8];
            for (int j = 0; j < 8; ++j) b[j] = static_cast<unsigned char>(bits >> (8 * j));
            os.write(reinterpret_cast<const char*>(b), 8);
        }
    }
}

void read_f64_le(std::istream& is, double* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 8));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            unsigned char b[8];
            is.read(reinterpret_cast<char*>(b), 8);
            std::uint64_t bits = 0;
            for (int j = 0; j < 8; ++j) bits |= static_cast<std::uint64_t>(b[j]) << (8 * j);
            std::memcpy(&p[i], &bits, 8);
        }
    }
}

void save_feature_map(const FeatureMap& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write("SFA1", 4);
    const Shape5& sh = f.shape();
    put_u32(os, static_cast<std::uint32_t>(sh.s));
    put_u32(os, static_cast<std::uint32_t>(sh.n));
    put_u32(os, static_cast<std::uint32_t>(sh.h));
    put_u32(os, static_cast<std::uint32_t>(sh.w));
    put_u32(os, static_cast<std::uint32_t>(sh.c));
    write_f64_le(os, f.data().data(), f.data().size());
    if (!os) throw IoError("write failed: " + path);
}

FeatureMap load_feature_map(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SFA1", 4) != 0) {
        throw IoError("bad magic in " + path);
    }
    Shape5 sh;
    sh.s = get_u32(is);
    sh.n = get_u32(is);
    sh.h = get_u32(is);
    sh.w = get_u32(is);
    sh.c = get_u32(is);
    check_positive(sh);
    std::vector<double> data(sh.numel());
    read_f64_le(is, data.data(), data.size());
    if (!is) throw IoError("truncated feature map: " + path);
    return FeatureMap(sh, std::move(data));
}

}  // namespace sfa
