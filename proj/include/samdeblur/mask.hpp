// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

// Boolean mask stacks: the segmentation masks handed to the pooling unit.
//
// Run-length format: alternating run lengths over the ROW-major flattened
// plane, zeros first (the first count may be 0). Note that COCO RLE walks the
// plane column-major; the two are not interchangeable.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "samdeblur/errors.hpp"
#include "samdeblur/geometry.hpp"
#include "samdeblur/rng.hpp"
#include "samdeblur/tensor.hpp"

namespace samdeblur {

using MaskPlane = std::vector<std::uint8_t>;
using RunLengthCounts = std::vector<std::uint64_t>;

struct MaskStack {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<MaskPlane> masks;
    std::vector<std::string> labels;  // empty, or one per mask

    std::size_t count() const noexcept { return masks.size(); }
    std::size_t pixels() const noexcept { return height * width; }

    void push(MaskPlane plane, std::string label = {}) {
        const bool labelled = !labels.empty() || !label.empty();
        if (labelled) {
            labels.resize(masks.size());
            labels.push_back(std::move(label));
        }
        masks.push_back(std::move(plane));
    }

    std::string label(std::size_t i) const { return i < labels.size() ? labels[i] : std::string{}; }

    friend bool operator==(const MaskStack&, const MaskStack&) = default;
};

struct MaskViolation {
    enum class Kind { Shape, NonBinary, Labels };
    Kind kind;
    std::size_t mask_index;
    std::string message;
};

struct ValidationResult {
    bool ok = true;
    std::vector<std::size_t> counts;  // set pixels per plane (0 for malformed planes)
    std::vector<MaskViolation> violations;
};

inline ValidationResult validate(const MaskStack& stack) {
    ValidationResult r;
    r.counts.assign(stack.count(), 0);
    const std::size_t n = stack.pixels();
    for (std::size_t i = 0; i < stack.count(); ++i) {
        const auto& plane = stack.masks[i];
        if (plane.size() != n) {
            r.violations.push_back({MaskViolation::Kind::Shape, i,
                                    "mask " + std::to_string(i) + " has " + std::to_string(plane.size()) +
                                        " entries, expected " + std::to_string(n)});
            continue;
        }
        const auto bad = std::find_if(plane.begin(), plane.end(), [](std::uint8_t v) { return v > 1; });
        if (bad != plane.end()) {
            r.violations.push_back({MaskViolation::Kind::NonBinary, i,
                                    "mask " + std::to_string(i) + " holds value " + std::to_string(int(*bad)) +
                                        " at pixel " + std::to_string(bad - plane.begin())});
            continue;
        }
        r.counts[i] = static_cast<std::size_t>(std::count(plane.begin(), plane.end(), std::uint8_t{1}));
    }
    if (!stack.labels.empty() && stack.labels.size() != stack.count())
        r.violations.push_back({MaskViolation::Kind::Labels, stack.labels.size(), "label count does not match mask count"});
    r.ok = r.violations.empty();
    return r;
}

inline void require_valid(const MaskStack& stack, std::size_t height, std::size_t width, const char* op) {
    if (stack.height != height || stack.width != width)
        throw ShapeError(std::string(op) + ": mask stack is " + std::to_string(stack.height) + "x" +
                         std::to_string(stack.width) + ", image is " + std::to_string(height) + "x" +
                         std::to_string(width));
    const auto r = validate(stack);
    if (!r.ok) throw ShapeError(std::string(op) + ": " + r.violations.front().message);
}

/// Retains each mask iff its uniform draw is >= p. One draw per mask, in stack order.
inline MaskStack mask_dropout(const MaskStack& stack, double p, Xoshiro256ss& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("dropout probability must lie in [0, 1]");
    MaskStack out{stack.height, stack.width, {}, {}};
    for (std::size_t i = 0; i < stack.count(); ++i) {
        if (rng.uniform() >= p) out.push(stack.masks[i], stack.label(i));
    }
    if (!stack.labels.empty()) out.labels.resize(out.masks.size());
    return out;
}

/// Appends NOT(union of all planes). Always appends, even when the plane is empty.
inline MaskStack append_uncovered(const MaskStack& stack) {
    MaskPlane uncovered(stack.pixels(), 1);
    for (const auto& plane : stack.masks)
        for (std::size_t p = 0; p < uncovered.size() && p < plane.size(); ++p)
            if (plane[p]) uncovered[p] = 0;
    MaskStack out = stack;
    out.push(std::move(uncovered), stack.labels.empty() ? std::string{} : std::string{"uncovered"});
    return out;
}

/// Per-pixel number of planes covering it.
inline std::vector<std::size_t> coverage_counts(const MaskStack& stack) {
    std::vector<std::size_t> cover(stack.pixels(), 0);
    for (const auto& plane : stack.masks)
        for (std::size_t p = 0; p < cover.size(); ++p) cover[p] += plane[p] ? 1 : 0;
    return cover;
}

/// True when the planes are pairwise disjoint and cover every pixel.
inline bool is_partition(const MaskStack& stack) {
    const auto cover = coverage_counts(stack);
    return std::all_of(cover.begin(), cover.end(), [](std::size_t c) { return c == 1; });
}

// ---------------------------------------------------------------------------
// Run-length codec

inline RunLengthCounts encode_rle(const MaskPlane& plane) {
    RunLengthCounts counts;
    std::uint8_t current = 0;
    std::uint64_t run = 0;
    for (std::uint8_t v : plane) {
        const std::uint8_t bit = v ? 1 : 0;
        if (bit != current) {
            counts.push_back(run);
            current = bit;
            run = 0;
        }
        ++run;
    }
    counts.push_back(run);
    return counts;
}

inline MaskPlane decode_rle(const RunLengthCounts& counts, std::size_t height, std::size_t width) {
    std::uint64_t total = 0;
    for (auto c : counts) {
        if (c > height * width) throw FormatError("run length exceeds plane size");
        total += c;
    }
    if (total != static_cast<std::uint64_t>(height) * width)
        throw FormatError("run lengths sum to " + std::to_string(total) + ", expected " +
                          std::to_string(height * width));
    MaskPlane plane;
    plane.reserve(height * width);
    std::uint8_t bit = 0;
    for (auto c : counts) {
        plane.insert(plane.end(), c, bit);
        bit ^= 1;
    }
    return plane;
}

// ---------------------------------------------------------------------------
// JSON interchange: {"height":H,"width":W,"masks":[{"label":str,"rle":[ints]}...]}

inline nlohmann::json mask_stack_to_json(const MaskStack& stack) {
    nlohmann::json masks = nlohmann::json::array();
    for (std::size_t i = 0; i < stack.count(); ++i)
        masks.push_back({{"label", stack.label(i)}, {"rle", encode_rle(stack.masks[i])}});
    return {{"height", stack.height}, {"width", stack.width}, {"masks", std::move(masks)}};
}

inline MaskStack mask_stack_from_json(const nlohmann::json& j) {
    try {
        MaskStack stack;
        stack.height = j.at("height").get<std::size_t>();
        stack.width = j.at("width").get<std::size_t>();
        bool any_label = false;
        std::vector<std::string> labels;
        for (const auto& m : j.at("masks")) {
            const auto& rle = m.at("rle");
            RunLengthCounts counts;
            for (const auto& c : rle) {
                if (!c.is_number_integer() || c.get<std::int64_t>() < 0)
                    throw FormatError("rle counts must be non-negative integers");
                counts.push_back(c.get<std::uint64_t>());
            }
            stack.masks.push_back(decode_rle(counts, stack.height, stack.width));
            labels.push_back(m.value("label", std::string{}));
            any_label = any_label || !labels.back().empty();
        }
        if (any_label) stack.labels = std::move(labels);
        return stack;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("mask JSON: ") + e.what());
    }
}

inline void save_mask_stack(const std::filesystem::path& path, const MaskStack& stack) {
    write_file_bytes(path, mask_stack_to_json(stack).dump() + "\n");
}

inline MaskStack load_mask_stack(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file_bytes(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return mask_stack_from_json(j);
}

// ---------------------------------------------------------------------------
// Geometric helpers used by augmentation.

inline MaskStack crop(const MaskStack& stack, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    MaskStack out{h, w, {}, stack.labels};
    for (const auto& plane : stack.masks) out.masks.push_back(crop_buffer(plane, stack.height, stack.width, 1, y0, x0, h, w));
    return out;
}

inline MaskStack transform(const MaskStack& stack, Dihedral d) {
    const auto [h, w] = d.output_dims(stack.height, stack.width);
    MaskStack out{h, w, {}, stack.labels};
    for (const auto& plane : stack.masks) out.masks.push_back(dihedral_apply(plane, stack.height, stack.width, 1, d));
    return out;
}

// ---------------------------------------------------------------------------
// Imperfect-segmentation simulation

namespace detail {

inline MaskPlane morph(const MaskPlane& plane, std::size_t h, std::size_t w, bool dilate) {
    MaskPlane out = plane;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::uint8_t want = dilate ? 1 : 0;
            if (plane[y * w + x] == want) continue;
            const bool touch = (y > 0 && plane[(y - 1) * w + x] == want) || (y + 1 < h && plane[(y + 1) * w + x] == want) ||
                               (x > 0 && plane[y * w + x - 1] == want) || (x + 1 < w && plane[y * w + x + 1] == want);
            if (touch) out[y * w + x] = want;
        }
    return out;
}

}  // namespace detail

/// Corrupts each mask independently with probability `rate`: one pixel of
/// 4-neighbour dilation, one pixel of erosion, or merging with the next mask
/// (each 1/3). Merged masks are removed from the stack. Two draws per mask.
inline MaskStack corrupt_masks(const MaskStack& stack, double rate, Xoshiro256ss& rng) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ParameterError("corruption rate must lie in [0, 1]");
    MaskStack out{stack.height, stack.width, {}, {}};
    std::vector<bool> absorbed(stack.count(), false);
    for (std::size_t i = 0; i < stack.count(); ++i) {
        const double hit = rng.uniform();
        const double kind = rng.uniform();
        if (absorbed[i]) continue;
        MaskPlane plane = stack.masks[i];
        if (hit < rate) {
            if (kind < 1.0 / 3.0) {
                plane = detail::morph(plane, stack.height, stack.width, true);
            } else if (kind < 2.0 / 3.0) {
                plane = detail::morph(plane, stack.height, stack.width, false);
            } else if (i + 1 < stack.count()) {
                for (std::size_t p = 0; p < plane.size(); ++p) plane[p] |= stack.masks[i + 1][p];
                absorbed[i + 1] = true;
            }
        }
        out.push(std::move(plane), stack.label(i));
    }
    if (!stack.labels.empty()) out.labels.resize(out.masks.size());
    return out;
}

}  // namespace samdeblur
