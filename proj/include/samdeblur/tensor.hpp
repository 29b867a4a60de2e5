// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <iterator>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "samdeblur/errors.hpp"

namespace samdeblur {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

/// Dense row-major array. Images are (H, W, C); convolution kernels are
/// (Kh, Kw, Cin, Cout); biases are (C).
template <class Real>
class BasicTensor {
public:
    using value_type = Real;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, Real fill = Real(0))
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

    BasicTensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_))
            throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_string(shape_));
    }

    static BasicTensor image(std::size_t h, std::size_t w, std::size_t c, Real fill = Real(0)) {
        return BasicTensor(Shape{h, w, c}, fill);
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    // Image-layout helpers; only meaningful for rank 3.
    std::size_t height() const { return shape_.at(0); }
    std::size_t width() const { return shape_.at(1); }
    std::size_t channels() const { return shape_.at(2); }

    std::span<Real> data() noexcept { return data_; }
    std::span<const Real> data() const noexcept { return data_; }
    std::vector<Real>& storage() noexcept { return data_; }
    const std::vector<Real>& storage() const noexcept { return data_; }

    Real& operator[](std::size_t i) noexcept { return data_[i]; }
    const Real& operator[](std::size_t i) const noexcept { return data_[i]; }

    Real& at(std::size_t y, std::size_t x, std::size_t c) noexcept {
        return data_[(y * shape_[1] + x) * shape_[2] + c];
    }
    const Real& at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
        return data_[(y * shape_[1] + x) * shape_[2] + c];
    }

    Real& at(std::size_t a, std::size_t b, std::size_t i, std::size_t o) noexcept {
        return data_[((a * shape_[1] + b) * shape_[2] + i) * shape_[3] + o];
    }
    const Real& at(std::size_t a, std::size_t b, std::size_t i, std::size_t o) const noexcept {
        return data_[((a * shape_[1] + b) * shape_[2] + i) * shape_[3] + o];
    }

    void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
    }

    template <class Other>
    BasicTensor<Other> cast() const {
        std::vector<Other> out(data_.begin(), data_.end());
        return BasicTensor<Other>(shape_, std::move(out));
    }

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

private:
    Shape shape_;
    std::vector<Real> data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

template <class Real>
void require_same_shape(const BasicTensor<Real>& a, const BasicTensor<Real>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

template <class Real>
void require_rank(const BasicTensor<Real>& t, std::size_t rank, const char* op) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
}

// ---------------------------------------------------------------------------
// Raw tensor file: "TNSR", u32 rank, u32 dims[rank], f64 payload, all
// little-endian, payload row-major.

static_assert(std::endian::native == std::endian::little, "raw tensor IO assumes a little-endian host");

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

inline std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
    if (pos + 4 > in.size()) throw FormatError("raw tensor truncated in header");
    std::uint32_t v;
    std::memcpy(&v, in.data() + pos, 4);
    pos += 4;
    return v;
}

}  // namespace detail

template <class Real>
std::string encode_raw_tensor(const BasicTensor<Real>& t) {
    std::string out = "TNSR";
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    out.reserve(out.size() + t.size() * 8);
    for (Real v : t.data()) {
        const double d = static_cast<double>(v);
        char buf[8];
        std::memcpy(buf, &d, 8);
        out.append(buf, 8);
    }
    return out;
}

template <class Real = double>
BasicTensor<Real> decode_raw_tensor(std::string_view bytes) {
    if (bytes.size() < 8 || bytes.substr(0, 4) != "TNSR") throw FormatError("missing TNSR magic");
    std::size_t pos = 4;
    const std::uint32_t rank = detail::get_u32(bytes, pos);
    if (rank > 16) throw FormatError("implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = detail::get_u32(bytes, pos);
    const std::size_t n = shape_size(shape);
    if (bytes.size() - pos != n * 8)
        throw FormatError("payload is " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                          std::to_string(n * 8));
    std::vector<Real> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d;
        std::memcpy(&d, bytes.data() + pos + i * 8, 8);
        data[i] = static_cast<Real>(d);
    }
    return BasicTensor<Real>(std::move(shape), std::move(data));
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + path.string());
}

template <class Real>
void save_raw_tensor(const std::filesystem::path& path, const BasicTensor<Real>& t) {
    write_file_bytes(path, encode_raw_tensor(t));
}

template <class Real = double>
BasicTensor<Real> load_raw_tensor(const std::filesystem::path& path) {
    return decode_raw_tensor<Real>(read_file_bytes(path));
}

}  // namespace samdeblur
