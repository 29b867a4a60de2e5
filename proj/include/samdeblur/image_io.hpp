// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

// Binary PPM (P6, maxval 255) for 8-bit RGB interchange.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "samdeblur/errors.hpp"
#include "samdeblur/tensor.hpp"

namespace samdeblur {

struct Rgb8Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major

    friend bool operator==(const Rgb8Image&, const Rgb8Image&) = default;
};

/// Rounds [0, 1] values to 8 bits (values outside are clamped).
inline Rgb8Image quantize(const Tensor& img) {
    require_rank(img, 3, "quantize");
    if (img.dim(2) != 3) throw ShapeError("PPM images need 3 channels");
    Rgb8Image out{img.dim(0), img.dim(1), std::vector<std::uint8_t>(img.size())};
    for (std::size_t i = 0; i < img.size(); ++i)
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0));
    return out;
}

inline Tensor dequantize(const Rgb8Image& img) {
    Tensor out(Shape{img.height, img.width, 3});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) out[i] = img.pixels[i] / 255.0;
    return out;
}

inline std::string encode_ppm(const Rgb8Image& img) {
    if (img.pixels.size() != img.height * img.width * 3) throw ShapeError("PPM pixel buffer size mismatch");
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    return out;
}

inline Rgb8Image decode_ppm(std::string_view bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&] {
        skip_space();
        std::size_t v = 0, digits = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
            if (++digits > 9) throw FormatError("PPM header value too large");
        }
        if (digits == 0) throw FormatError("PPM header: expected an integer");
        return v;
    };
    if (bytes.substr(0, 2) != "P6") throw FormatError("not a binary PPM (missing P6 magic)");
    pos = 2;
    Rgb8Image img;
    img.width = read_uint();
    img.height = read_uint();
    const std::size_t maxval = read_uint();
    if (maxval != 255) throw FormatError("only maxval 255 is supported, got " + std::to_string(maxval));
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw FormatError("PPM header must end with a single whitespace byte");
    ++pos;
    const std::size_t n = img.width * img.height * 3;
    if (bytes.size() - pos != n) throw FormatError("PPM payload is " + std::to_string(bytes.size() - pos) +
                                                   " bytes, expected " + std::to_string(n));
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return img;
}

inline void save_ppm(const std::filesystem::path& path, const Tensor& img) {
    write_file_bytes(path, encode_ppm(quantize(img)));
}

inline Tensor load_ppm(const std::filesystem::path& path) { return dequantize(decode_ppm(read_file_bytes(path))); }

}  // namespace samdeblur
