// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "samdeblur/errors.hpp"
#include "samdeblur/tensor.hpp"

namespace samdeblur {

inline constexpr double kCollapseThresholdDb = 3.0;

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace detail

/// PSNR in dB with peak 1.0 over all pixels and channels; inputs are clamped
/// to [0, 1]. Identical images give +infinity.
inline double psnr(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "psnr");
    if (a.size() == 0) throw ShapeError("psnr of empty images");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = detail::clamp01(a[i]) - detail::clamp01(b[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

inline std::vector<double> gaussian_window_1d(std::size_t size, double sigma) {
    std::vector<double> w(size);
    const double c = static_cast<double>(size / 2);
    double sum = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - c;
        w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}

/// Single-scale SSIM with a separable Gaussian window, evaluated at every
/// window position that fits entirely inside the image, per channel, then
/// averaged over positions and channels. Inputs are clamped to [0, 1].
inline double ssim(const Tensor& a, const Tensor& b, const SsimParams& prm = {}) {
    require_same_shape(a, b, "ssim");
    require_rank(a, 3, "ssim");
    const std::size_t H = a.dim(0), W = a.dim(1), C = a.dim(2), K = prm.window;
    if (H < K || W < K)
        throw ContractError("ssim needs at least " + std::to_string(K) + "x" + std::to_string(K) + " pixels");
    const auto win = gaussian_window_1d(K, prm.sigma);
    const double c1 = (prm.k1 * prm.dynamic_range) * (prm.k1 * prm.dynamic_range);
    const double c2 = (prm.k2 * prm.dynamic_range) * (prm.k2 * prm.dynamic_range);
    const std::size_t OH = H - K + 1, OW = W - K + 1;

    // Five moment planes: x, y, x*x, y*y, x*y.
    std::array<std::vector<double>, 5> src;
    for (auto& s : src) s.resize(H * W);
    std::array<std::vector<double>, 5> horiz;
    for (auto& s : horiz) s.resize(H * OW);
    std::array<std::vector<double>, 5> filt;
    for (auto& s : filt) s.resize(OH * OW);

    double total = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t p = 0; p < H * W; ++p) {
            const double x = detail::clamp01(a[p * C + c]);
            const double y = detail::clamp01(b[p * C + c]);
            src[0][p] = x;
            src[1][p] = y;
            src[2][p] = x * x;
            src[3][p] = y * y;
            src[4][p] = x * y;
        }
        for (std::size_t m = 0; m < 5; ++m) {
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < OW; ++x) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < K; ++k) acc += win[k] * src[m][y * W + x + k];
                    horiz[m][y * OW + x] = acc;
                }
            for (std::size_t y = 0; y < OH; ++y)
                for (std::size_t x = 0; x < OW; ++x) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < K; ++k) acc += win[k] * horiz[m][(y + k) * OW + x];
                    filt[m][y * OW + x] = acc;
                }
        }
        double sum = 0.0;
        for (std::size_t p = 0; p < OH * OW; ++p) {
            const double mx = filt[0][p], my = filt[1][p];
            const double vx = filt[2][p] - mx * mx;
            const double vy = filt[3][p] - my * my;
            const double cxy = filt[4][p] - mx * my;
            const double num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
            const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            sum += num / den;
        }
        total += sum / static_cast<double>(OH * OW);
    }
    return total / static_cast<double>(C);
}

/// Collapse when the restored image lost more than 3 dB against the blurred
/// input. Infinite PSNRs follow extended-real arithmetic; inf - inf is not a
/// collapse.
inline bool mode_collapse_flag(double psnr_blur, double psnr_deblur) {
    const double diff = psnr_blur - psnr_deblur;
    return !std::isnan(diff) && diff > kCollapseThresholdDb;
}

struct ImageMetrics {
    std::string id;
    double psnr = 0.0;
    double ssim = 0.0;
    double psnr_blur = 0.0;
    bool collapsed = false;
};

struct AggregateMetrics {
    double psnr = 0.0;  // mean over finite entries; +inf when every entry is infinite
    double ssim = 0.0;
    double mcr = 0.0;
    std::size_t count = 0;
    std::size_t infinite_psnr = 0;
};

struct MetricsReport {
    std::vector<ImageMetrics> per_image;
    AggregateMetrics aggregate;
};

inline ImageMetrics measure(std::string id, const Tensor& restored, const Tensor& blurred, const Tensor& sharp) {
    ImageMetrics m;
    m.id = std::move(id);
    m.psnr = psnr(restored, sharp);
    m.ssim = ssim(restored, sharp);
    m.psnr_blur = psnr(blurred, sharp);
    m.collapsed = mode_collapse_flag(m.psnr_blur, m.psnr);
    return m;
}

inline MetricsReport aggregate(std::vector<ImageMetrics> entries) {
    if (entries.empty()) throw ContractError("cannot aggregate an empty metrics list");
    MetricsReport r;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    std::size_t finite = 0, collapsed = 0;
    for (const auto& e : entries) {
        if (std::isfinite(e.psnr)) {
            psnr_sum += e.psnr;
            ++finite;
        } else {
            ++r.aggregate.infinite_psnr;
        }
        ssim_sum += e.ssim;
        collapsed += e.collapsed ? 1 : 0;
    }
    const double n = static_cast<double>(entries.size());
    r.aggregate.psnr = finite ? psnr_sum / static_cast<double>(finite) : std::numeric_limits<double>::infinity();
    r.aggregate.ssim = ssim_sum / n;
    r.aggregate.mcr = static_cast<double>(collapsed) / n;
    r.aggregate.count = entries.size();
    r.per_image = std::move(entries);
    return r;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::json db_to_json(double v) {
    if (std::isinf(v) && v > 0) return "inf";
    return v;
}

inline double db_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
        throw FormatError("unexpected PSNR string " + j.dump());
    }
    return j.get<double>();
}

}  // namespace detail

inline nlohmann::json report_to_json(const MetricsReport& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& e : r.per_image)
        per.push_back({{"id", e.id},
                       {"psnr", detail::db_to_json(e.psnr)},
                       {"ssim", e.ssim},
                       {"psnr_blur", detail::db_to_json(e.psnr_blur)},
                       {"collapsed", e.collapsed}});
    return {{"per_image", std::move(per)},
            {"aggregate",
             {{"psnr", detail::db_to_json(r.aggregate.psnr)},
              {"ssim", r.aggregate.ssim},
              {"mcr", r.aggregate.mcr},
              {"count", r.aggregate.count},
              {"infinite_psnr", r.aggregate.infinite_psnr}}}};
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
    try {
        MetricsReport r;
        for (const auto& e : j.at("per_image"))
            r.per_image.push_back({e.at("id").get<std::string>(), detail::db_from_json(e.at("psnr")),
                                   e.at("ssim").get<double>(), detail::db_from_json(e.at("psnr_blur")),
                                   e.at("collapsed").get<bool>()});
        const auto& a = j.at("aggregate");
        r.aggregate.psnr = detail::db_from_json(a.at("psnr"));
        r.aggregate.ssim = a.at("ssim").get<double>();
        r.aggregate.mcr = a.at("mcr").get<double>();
        r.aggregate.count = a.value("count", r.per_image.size());
        r.aggregate.infinite_psnr = a.value("infinite_psnr", std::size_t{0});
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("metrics report: ") + e.what());
    }
}

struct ComparisonRow {
    std::string method;
    AggregateMetrics metrics;
};

/// Aligned text table with columns Method, PSNR↑, SSIM↑, MCR↓ (MCR in percent).
inline std::string comparison_table(const std::vector<ComparisonRow>& rows) {
    std::size_t name_w = 7;
    for (const auto& r : rows) name_w = std::max(name_w, r.method.size());
    std::ostringstream os;
    char buf[128];
    // Arrow glyphs are 3 bytes but one column wide, hence the manual padding.
    os << "Method" << std::string(name_w - 6 + 2, ' ') << "   PSNR↑    SSIM↑     MCR↓\n";
    os << std::string(name_w + 2 + 26, '-') << "\n";
    for (const auto& r : rows) {
        os << r.method << std::string(name_w - r.method.size() + 2, ' ');
        if (std::isfinite(r.metrics.psnr))
            std::snprintf(buf, sizeof buf, "%8.2f  %7.3f  %6.2f%%\n", r.metrics.psnr, r.metrics.ssim, 100.0 * r.metrics.mcr);
        else
            std::snprintf(buf, sizeof buf, "%8s  %7.3f  %6.2f%%\n", "inf", r.metrics.ssim, 100.0 * r.metrics.mcr);
        os << buf;
    }
    return os.str();
}

}  // namespace samdeblur
