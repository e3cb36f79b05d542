#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "graphcpd/types.hpp"

namespace graphcpd {

/// Change vector analysis: per-pixel Euclidean norm of the spectral difference
/// between consecutive frames.
inline std::vector<double> cva_magnitude(const Frame& current, const Frame& previous) {
    if (current.grid() != previous.grid() || current.bands() != previous.bands())
        throw DimensionError("cva_magnitude: frames differ in shape");
    const std::size_t n = current.pixels();
    std::vector<double> ss(n, 0.0);
    for (std::size_t b = 0; b < current.bands(); ++b) {
        const auto cur = current.band(b), prev = previous.band(b);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(cur[i]) - static_cast<double>(prev[i]);
            ss[i] += d * d;
        }
    }
    for (auto& v : ss) v = std::sqrt(v);
    return ss;
}

inline ChangeMask cva_detect(std::span<const double> magnitudes, double tau, std::size_t t, GridSize grid) {
    if (!(tau >= 0.0)) throw ParameterError("cva threshold must be >= 0");
    if (magnitudes.size() != grid.pixels()) throw DimensionError("cva_detect: magnitude count does not match grid");
    ChangeMask mask(t, grid);
    for (std::size_t i = 0; i < magnitudes.size(); ++i) mask.flags[i] = magnitudes[i] > tau;
    return mask;
}

/// Memoryless streaming wrapper; mirrors the detector's step() contract.
class CvaState {
public:
    explicit CvaState(double tau = 0.0) : tau_(tau) {
        if (!(tau >= 0.0)) throw ParameterError("cva threshold must be >= 0");
    }

    /// Returns the magnitudes of frame t against t-1; empty on the first frame.
    std::vector<double> step(const Frame& frame) {
        std::vector<double> out;
        if (previous_) out = cva_magnitude(frame, *previous_);
        previous_ = frame;
        ++t_;
        return out;
    }

    [[nodiscard]] std::size_t t() const noexcept { return t_; }
    [[nodiscard]] double tau() const noexcept { return tau_; }

private:
    double tau_;
    std::optional<Frame> previous_;
    std::size_t t_ = 0;
};

struct RocPoint {
    double threshold = 0.0;
    double pd = 0.0;
    double pfa = 0.0;
};

/// Exact ROC of "score > threshold" against binary truth. Thresholds are the
/// distinct observed scores in descending order (the first flags nothing),
/// closed by -inf (everything flagged).
inline std::vector<RocPoint> roc_sweep(std::span<const double> scores, std::span<const std::uint8_t> truth) {
    if (scores.size() != truth.size()) throw DimensionError("roc_sweep: scores and truth differ in length");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t positives = 0;
    for (auto v : truth) positives += v;
    const std::size_t negatives = truth.size() - positives;
    auto rate = [](std::size_t k, std::size_t total) { return total ? static_cast<double>(k) / static_cast<double>(total) : std::nan(""); };

    std::vector<RocPoint> out;
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < order.size();) {
        const double s = scores[order[k]];
        // point at threshold s: flags scores > s, i.e. those already counted
        out.push_back({s, rate(tp, positives), rate(fp, negatives)});
        while (k < order.size() && scores[order[k]] == s) {
            (truth[order[k]] ? tp : fp) += 1;
            ++k;
        }
    }
    out.push_back({-std::numeric_limits<double>::infinity(), rate(tp, positives), rate(fp, negatives)});
    return out;
}

}  // namespace graphcpd
