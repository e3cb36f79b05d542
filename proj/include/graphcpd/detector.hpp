#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graphcpd/graph.hpp"
#include "graphcpd/special_functions.hpp"
#include "graphcpd/spectral.hpp"
#include "graphcpd/types.hpp"

namespace graphcpd {

struct DetectorConfig {
    double lambda = 0.01;   ///< slow EMA rate
    double Lambda = 0.8;    ///< fast EMA rate
    double gamma = 0.1;     ///< graph filter cutoff
    double alpha = 0.05;    ///< family-wise level, Bonferroni-split over N vertices
    double sigma2 = 1.0;    ///< per-entry noise variance
    std::size_t burn_in = 0;

    void validate() const {
        if (!(lambda > 0.0 && lambda < Lambda && Lambda < 1.0))
            throw ParameterError("rates must satisfy 0 < lambda < Lambda < 1 (got lambda=" + std::to_string(lambda) +
                                 ", Lambda=" + std::to_string(Lambda) + ")");
        if (!(gamma > 0.0)) throw ParameterError("gamma must be > 0");
        if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
        if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ParameterError("sigma2 must be > 0");
    }
};

/// Slow and fast exponential averages of the frame stream, L x N band-major.
struct DetectorState {
    std::size_t bands = 0;
    std::size_t pixels = 0;
    std::vector<double> slow;  ///< V_t
    std::vector<double> fast;  ///< V'_t
    std::size_t t = 0;         ///< index of the last frame absorbed, 1-based

    /// V_1 = V'_1 = Y_1.
    static DetectorState from_first_frame(const Frame& frame) {
        DetectorState s{frame.bands(), frame.pixels(), {}, {}, 1};
        s.slow.assign(frame.values().begin(), frame.values().end());
        s.fast = s.slow;
        return s;
    }
};

inline void ema_update_inplace(DetectorState& state, const Frame& frame, double lambda, double Lambda) {
    if (frame.bands() != state.bands || frame.pixels() != state.pixels)
        throw DimensionError("frame shape does not match the detector state");
    const auto y = frame.values();
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double v = y[i];
        // increment form keeps a constant input an exact fixed point
        state.slow[i] += lambda * (v - state.slow[i]);
        state.fast[i] += Lambda * (v - state.fast[i]);
    }
    ++state.t;
}

inline DetectorState ema_update(DetectorState state, const Frame& frame, double lambda, double Lambda) {
    ema_update_inplace(state, frame, lambda, Lambda);
    return state;
}

/// D_t = V'_t - V_t; row l is the graph signal of band l.
inline std::vector<double> difference(const DetectorState& state) {
    std::vector<double> d(state.fast.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = state.fast[i] - state.slow[i];
    return d;
}

/// Asymptotic variance factor of V' - V for unit-variance white input.
inline double eta(double lambda, double Lambda) {
    if (!(lambda > 0.0 && lambda < 1.0 && Lambda > 0.0 && Lambda < 1.0))
        throw ParameterError("eta: rates must lie in (0, 1)");
    return lambda / (2.0 - lambda) + Lambda / (2.0 - Lambda) - 2.0 * lambda * Lambda / (lambda + Lambda - lambda * Lambda);
}

// Null variance of the closed-neighbourhood sum of the filtered difference:
// sigma_R^2(n) = eta sigma^2 * 1_n' H^2 1_n, with 1_n the indicator of {n} u N(n).

/// General graphs: evaluates 1_n' H^2 1_n through the decomposition.
/// Values below round-off of the quadratic form are reported as exactly 0.
inline std::vector<double> sigma_R_sq(const PixelGraph& graph, const GraphFilter& filter, double eta_value, double sigma2) {
    if (graph.size() != filter.size()) throw DimensionError("graph and filter sizes differ");
    const std::size_t n_vertices = graph.size();
    std::vector<double> out(n_vertices);
    std::vector<double> indicator(n_vertices, 0.0);
    for (std::size_t n = 0; n < n_vertices; ++n) {
        indicator[n] = 1.0;
        for (auto m : graph.neighbors(n)) indicator[m] = 1.0;
        const auto h2 = filter.apply_squared(indicator);
        double q = 0.0;
        for (std::size_t m = 0; m < n_vertices; ++m) q += indicator[m] * h2[m];
        const double size = static_cast<double>(graph.degree(n) + 1);
        out[n] = q <= 1e-10 * size ? 0.0 : eta_value * sigma2 * q;
        indicator[n] = 0.0;
        for (auto m : graph.neighbors(n)) indicator[m] = 0.0;
    }
    return out;
}

/// Superpixel clique graphs: the closed neighbourhood of n is its superpixel S
/// (m pixels), 1_S lies in the kernel, so 1_S' H^2 1_S = m - (u_1' 1_S)^2
/// = m (1 - m (m-1) / sum(d)). Integer arithmetic makes the degenerate
/// single-superpixel case exactly 0.
inline std::vector<double> clique_sigma_R_sq(const Labeling& labeling, double eta_value, double sigma2) {
    const std::size_t n = labeling.pixels();
    double total_degree = 0.0;
    for (std::size_t s = 0; s < labeling.segments(); ++s) {
        const auto m = static_cast<double>(labeling.segment_size(s));
        total_degree += m * (m - 1.0);
    }
    std::vector<double> per_segment(labeling.segments());
    for (std::size_t s = 0; s < per_segment.size(); ++s) {
        const auto m = static_cast<double>(labeling.segment_size(s));
        const double q = total_degree > 0.0 ? m * (total_degree - m * (m - 1.0)) / total_degree
                                            : 1.0 - 1.0 / static_cast<double>(n);
        per_segment[s] = eta_value * sigma2 * q;
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = per_segment[labeling[i]];
    return out;
}

/// Closed-neighbourhood aggregation over a generic graph.
class GraphNeighborhood {
public:
    explicit GraphNeighborhood(std::shared_ptr<const PixelGraph> graph) : graph_(std::move(graph)) {}
    [[nodiscard]] std::size_t size() const { return graph_->size(); }
    [[nodiscard]] std::vector<double> sums(std::span<const double> y) const { return neighborhood_sums(*graph_, y); }

private:
    std::shared_ptr<const PixelGraph> graph_;
};

/// Closed-neighbourhood aggregation on the superpixel clique graph: every
/// pixel receives its superpixel's sum, accumulated in ascending pixel order
/// (bitwise equal to neighborhood_sums on build_graph(labeling)).
class SuperpixelNeighborhood {
public:
    explicit SuperpixelNeighborhood(const Labeling& labeling) : labels_(labeling.labels().begin(), labeling.labels().end()), segments_(labeling.segments()) {}
    [[nodiscard]] std::size_t size() const { return labels_.size(); }
    [[nodiscard]] std::vector<double> sums(std::span<const double> y) const {
        if (y.size() != labels_.size()) throw DimensionError("signal length does not match the labeling");
        std::vector<double> seg(segments_, 0.0);
        for (std::size_t i = 0; i < y.size(); ++i) seg[labels_[i]] += y[i];
        std::vector<double> out(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = seg[labels_[i]];
        return out;
    }

private:
    std::vector<std::uint32_t> labels_;
    std::size_t segments_;
};

template <class A>
concept NeighborhoodAggregator = requires(const A& a, std::span<const double> y) {
    { a.sums(y) } -> std::same_as<std::vector<double>>;
    { a.size() } -> std::convertible_to<std::size_t>;
};

/// r(n) = sum over bands of (closed-neighbourhood sum of g(d_l))(n)^2.
/// `d` is L x N band-major.
template <GraphSignalFilter F, NeighborhoodAggregator A>
std::vector<double> test_statistic(std::span<const double> d, std::size_t bands, const F& filter, const A& aggregator) {
    const std::size_t n = filter.size();
    if (aggregator.size() != n) throw DimensionError("filter and neighbourhood sizes differ");
    if (bands == 0 || d.size() != bands * n) throw DimensionError("difference matrix is not L x N");
    std::vector<double> r(n, 0.0);
    for (std::size_t b = 0; b < bands; ++b) {
        const auto s = aggregator.sums(filter.apply(d.subspan(b * n, n)));
        for (std::size_t i = 0; i < n; ++i) r[i] += s[i] * s[i];
    }
    return r;
}

template <GraphSignalFilter F>
std::vector<double> test_statistic(std::span<const double> d, std::size_t bands, const F& filter, const PixelGraph& graph) {
    struct Ref {
        const PixelGraph& g;
        [[nodiscard]] std::size_t size() const { return g.size(); }
        [[nodiscard]] std::vector<double> sums(std::span<const double> y) const { return neighborhood_sums(g, y); }
    };
    return test_statistic(d, bands, filter, Ref{graph});
}

/// xi_n = sigma_R^2(n) * F^{-1}_{chi2_L}(1 - alpha / N). Zero-variance vertices get 0.
inline std::vector<double> thresholds(std::span<const double> sigma_r2, std::size_t bands, double alpha, std::size_t vertices) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
    if (vertices == 0) throw ParameterError("vertex count must be >= 1");
    if (bands == 0) throw ParameterError("band count must be >= 1");
    const double q = special::chi2_upper_quantile(static_cast<double>(bands), alpha / static_cast<double>(vertices));
    std::vector<double> xi(sigma_r2.size());
    for (std::size_t i = 0; i < xi.size(); ++i) {
        if (sigma_r2[i] < 0.0) throw DomainError("negative neighbourhood variance");
        xi[i] = sigma_r2[i] * q;
    }
    return xi;
}

struct TestStatistics {
    std::size_t t = 0;
    std::vector<double> r;
    std::vector<double> sigma_r2;
    std::vector<double> xi;
    double p_vertex = 0.0;  ///< alpha / N
    ChangeMask flags;
};

/// Online engine: one call per frame, in order. Frame 1 only initializes the
/// averages; from frame 2 on each call returns the per-vertex statistics.
/// Vertices with zero null variance are never flagged; neither is anything
/// at t <= burn_in.
template <GraphSignalFilter F, NeighborhoodAggregator A>
class Detector {
public:
    Detector(DetectorConfig config, GridSize grid, std::size_t bands, F filter, A aggregator, std::vector<double> sigma_r2)
        : config_(config), grid_(grid), bands_(bands), filter_(std::move(filter)), aggregator_(std::move(aggregator)),
          sigma_r2_(std::move(sigma_r2)) {
        config_.validate();
        const std::size_t n = grid.pixels();
        if (filter_.size() != n || aggregator_.size() != n || sigma_r2_.size() != n)
            throw DimensionError("detector components disagree on the vertex count");
        xi_ = thresholds(sigma_r2_, bands_, config_.alpha, n);
        std::size_t degenerate = 0;
        for (double v : sigma_r2_) degenerate += v == 0.0;
        if (degenerate == n)
            warnings_.push_back("graph admits no testable direction: every vertex has zero null variance, nothing can be flagged");
        else if (degenerate > 0)
            warnings_.push_back(std::to_string(degenerate) + " vertices have zero null variance and are never flagged");
    }

    std::optional<TestStatistics> step(const Frame& frame) {
        if (frame.grid() != grid_ || frame.bands() != bands_) throw DimensionError("frame shape does not match the detector");
        if (!state_) {
            state_ = DetectorState::from_first_frame(frame);
            return std::nullopt;
        }
        ema_update_inplace(*state_, frame, config_.lambda, config_.Lambda);
        TestStatistics out;
        out.t = state_->t;
        out.r = test_statistic(difference(*state_), bands_, filter_, aggregator_);
        out.sigma_r2 = sigma_r2_;
        out.xi = xi_;
        out.p_vertex = config_.alpha / static_cast<double>(grid_.pixels());
        out.flags = ChangeMask(out.t, grid_);
        if (out.t > config_.burn_in)
            for (std::size_t i = 0; i < out.r.size(); ++i) out.flags.flags[i] = sigma_r2_[i] > 0.0 && out.r[i] > xi_[i];
        return out;
    }

    [[nodiscard]] const DetectorConfig& config() const noexcept { return config_; }
    [[nodiscard]] std::span<const double> sigma_r2() const noexcept { return sigma_r2_; }
    [[nodiscard]] std::span<const double> xi() const noexcept { return xi_; }
    [[nodiscard]] const std::vector<std::string>& warnings() const noexcept { return warnings_; }
    [[nodiscard]] const std::optional<DetectorState>& state() const noexcept { return state_; }

private:
    DetectorConfig config_;
    GridSize grid_;
    std::size_t bands_;
    F filter_;
    A aggregator_;
    std::vector<double> sigma_r2_;
    std::vector<double> xi_;
    std::vector<std::string> warnings_;
    std::optional<DetectorState> state_;
};

using SuperpixelDetector = Detector<CliqueFilter, SuperpixelNeighborhood>;

/// The detector on the superpixel clique graph, O(N L) per frame.
inline SuperpixelDetector make_superpixel_detector(const DetectorConfig& config, const Labeling& labeling, std::size_t bands) {
    config.validate();
    return SuperpixelDetector(config, labeling.grid(), bands, CliqueFilter(labeling, config.gamma), SuperpixelNeighborhood(labeling),
                              clique_sigma_R_sq(labeling, eta(config.lambda, config.Lambda), config.sigma2));
}

/// Robust noise variance from the first `prefix` frames: per band, temporal
/// first differences pooled over pixels, sigma_diff = 1.4826 median|diff|;
/// the squared values are averaged over bands and halved.
inline double estimate_noise(const ImageSequence& seq, std::size_t prefix) {
    if (prefix < 2) throw ParameterError("estimate_noise needs at least 2 frames");
    if (seq.size() < prefix) throw ParameterError("sequence is shorter than the requested prefix");
    const std::size_t n = seq.grid().pixels(), bands = seq.bands();
    double acc = 0.0;
    std::vector<double> diffs;
    for (std::size_t b = 0; b < bands; ++b) {
        diffs.clear();
        for (std::size_t t = 1; t < prefix; ++t) {
            const auto cur = seq[t].band(b), prev = seq[t - 1].band(b);
            for (std::size_t i = 0; i < n; ++i) diffs.push_back(std::abs(static_cast<double>(cur[i]) - static_cast<double>(prev[i])));
        }
        const auto mid = diffs.begin() + static_cast<std::ptrdiff_t>(diffs.size() / 2);
        std::nth_element(diffs.begin(), mid, diffs.end());
        double median = *mid;
        if (diffs.size() % 2 == 0) median = 0.5 * (median + *std::max_element(diffs.begin(), mid));
        const double sd = 1.4826 * median;
        acc += sd * sd;
    }
    return acc / static_cast<double>(bands) / 2.0;
}

}  // namespace graphcpd
