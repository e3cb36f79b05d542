#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "graphcpd/types.hpp"

namespace graphcpd {

struct SuperpixelParams {
    std::size_t step = 5;       ///< grid interval S; segments average S x S pixels
    double compactness = 10.0;  ///< spatial weight m, relative to the frame's mean magnitude
    std::size_t iterations = 10;

    void validate(GridSize grid) const {
        if (step == 0) throw ParameterError("slic_step must be >= 1");
        if (step > std::min(grid.height, grid.width))
            throw ParameterError("slic_step " + std::to_string(step) + " exceeds min(H, W) = " +
                                 std::to_string(std::min(grid.height, grid.width)));
        if (!(compactness > 0.0) || !std::isfinite(compactness)) throw ParameterError("slic_compactness must be > 0");
        if (iterations == 0) throw ParameterError("slic_iters must be >= 1");
    }
};

/// Orphan fragments with 4*size <= S^2 are absorbed by a neighbour.
constexpr bool is_orphan_fragment(std::size_t size, std::size_t step) noexcept {
    return 4 * size <= step * step;
}

/// Splits every label into its 4-connected pieces, folds small pieces into the
/// adjacent piece with the longest shared boundary, and re-indexes the result
/// contiguously in row-major order of first appearance.
///
/// Small pieces are visited in row-major order of their first pixel; boundary
/// ties go to the lower piece index. A piece that has grown past the size
/// threshold by the time it is visited is left alone.
inline Labeling enforce_connectivity(std::span<const std::uint32_t> raw, GridSize grid, std::size_t step) {
    const std::size_t n = grid.pixels();
    if (raw.size() != n) throw DimensionError("raw labels do not cover the grid");
    const std::size_t h = grid.height, w = grid.width;
    constexpr auto unset = std::numeric_limits<std::size_t>::max();

    // Connected pieces, numbered in row-major order of their first pixel.
    std::vector<std::size_t> piece(n, unset);
    std::vector<std::vector<std::size_t>> pixels_of;
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < n; ++start) {
        if (piece[start] != unset) continue;
        const std::size_t id = pixels_of.size();
        pixels_of.emplace_back();
        piece[start] = id;
        stack.assign(1, start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            pixels_of[id].push_back(p);
            const std::size_t r = p / w, c = p % w;
            auto visit = [&](std::size_t q) {
                if (piece[q] == unset && raw[q] == raw[p]) {
                    piece[q] = id;
                    stack.push_back(q);
                }
            };
            if (r > 0) visit(p - w);
            if (r + 1 < h) visit(p + w);
            if (c > 0) visit(p - 1);
            if (c + 1 < w) visit(p + 1);
        }
    }

    for (std::size_t id = 0; id < pixels_of.size(); ++id) {
        if (pixels_of[id].empty() || !is_orphan_fragment(pixels_of[id].size(), step)) continue;
        std::map<std::size_t, std::size_t> boundary;
        for (std::size_t p : pixels_of[id]) {
            const std::size_t r = p / w, c = p % w;
            auto count = [&](std::size_t q) {
                if (piece[q] != id) ++boundary[piece[q]];
            };
            if (r > 0) count(p - w);
            if (r + 1 < h) count(p + w);
            if (c > 0) count(p - 1);
            if (c + 1 < w) count(p + 1);
        }
        if (boundary.empty()) continue;  // the piece is the whole image
        std::size_t target = boundary.begin()->first, best = 0;
        for (auto [other, len] : boundary)
            if (len > best) best = len, target = other;
        for (std::size_t p : pixels_of[id]) piece[p] = target;
        auto& dst = pixels_of[target];
        dst.insert(dst.end(), pixels_of[id].begin(), pixels_of[id].end());
        pixels_of[id].clear();
    }

    std::vector<std::uint32_t> remap(pixels_of.size(), std::numeric_limits<std::uint32_t>::max());
    std::vector<std::uint32_t> labels(n);
    std::uint32_t next = 0;
    for (std::size_t p = 0; p < n; ++p) {
        auto& m = remap[piece[p]];
        if (m == std::numeric_limits<std::uint32_t>::max()) m = next++;
        labels[p] = m;
    }
    return Labeling(grid, std::move(labels));
}

namespace detail {

struct SlicCenter {
    double row = 0.0;
    double col = 0.0;
    std::vector<double> spectrum;
};

inline std::vector<SlicCenter> grid_centers(const Frame& frame, std::size_t step) {
    const auto g = frame.grid();
    std::vector<SlicCenter> centers;
    for (std::size_t r = step / 2; r < g.height; r += step)
        for (std::size_t c = step / 2; c < g.width; c += step) {
            SlicCenter k{static_cast<double>(r), static_cast<double>(c), std::vector<double>(frame.bands())};
            for (std::size_t b = 0; b < frame.bands(); ++b) k.spectrum[b] = frame.at(b, r * g.width + c);
            centers.push_back(std::move(k));
        }
    return centers;
}

}  // namespace detail

/// SLIC over all L bands. Distance is d_spectral + (m/S) d_spatial with both
/// terms Euclidean, m = compactness/10 times the mean absolute entry of the
/// frame. Centers start on the S-grid at (S/2, S/2) without perturbation and
/// each one searches a (2S+1)^2 window. Deterministic.
inline Labeling slic_segment(const Frame& frame, const SuperpixelParams& params) {
    const auto grid = frame.grid();
    params.validate(grid);
    const std::size_t n = grid.pixels(), bands = frame.bands(), w = grid.width;
    const double step = static_cast<double>(params.step);

    double scale = 0.0;
    for (float v : frame.values()) scale += std::abs(static_cast<double>(v));
    scale /= static_cast<double>(frame.values().size());
    if (!(scale > 0.0)) scale = 1.0;
    const double spatial_weight = params.compactness / 10.0 * scale / step;

    auto centers = detail::grid_centers(frame, params.step);
    std::vector<std::uint32_t> assign(n, 0);

    auto distance = [&](const detail::SlicCenter& k, std::size_t p) {
        double spec = 0.0;
        for (std::size_t b = 0; b < bands; ++b) {
            const double d = frame.at(b, p) - k.spectrum[b];
            spec += d * d;
        }
        const double dr = static_cast<double>(p / w) - k.row, dc = static_cast<double>(p % w) - k.col;
        return std::sqrt(spec) + spatial_weight * std::sqrt(dr * dr + dc * dc);
    };

    for (std::size_t it = 0; it < params.iterations; ++it) {
        for (std::size_t p = 0; p < n; ++p) {
            const double pr = static_cast<double>(p / w), pc = static_cast<double>(p % w);
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_k = centers.size();
            for (std::size_t k = 0; k < centers.size(); ++k) {
                if (std::abs(centers[k].row - pr) > step || std::abs(centers[k].col - pc) > step) continue;
                const double d = distance(centers[k], p);
                if (d < best) best = d, best_k = k;
            }
            if (best_k == centers.size())  // no window covers p
                for (std::size_t k = 0; k < centers.size(); ++k) {
                    const double d = distance(centers[k], p);
                    if (d < best) best = d, best_k = k;
                }
            assign[p] = static_cast<std::uint32_t>(best_k);
        }

        std::vector<detail::SlicCenter> sums(centers.size(), detail::SlicCenter{0.0, 0.0, std::vector<double>(bands)});
        std::vector<std::size_t> counts(centers.size(), 0);
        for (std::size_t p = 0; p < n; ++p) {
            auto& s = sums[assign[p]];
            s.row += static_cast<double>(p / w);
            s.col += static_cast<double>(p % w);
            for (std::size_t b = 0; b < bands; ++b) s.spectrum[b] += frame.at(b, p);
            ++counts[assign[p]];
        }
        for (std::size_t k = 0; k < centers.size(); ++k) {
            if (counts[k] == 0) continue;
            const double inv = 1.0 / static_cast<double>(counts[k]);
            centers[k].row = sums[k].row * inv;
            centers[k].col = sums[k].col * inv;
            for (std::size_t b = 0; b < bands; ++b) centers[k].spectrum[b] = sums[k].spectrum[b] * inv;
        }
    }

    return enforce_connectivity(assign, grid, params.step);
}

}  // namespace graphcpd
