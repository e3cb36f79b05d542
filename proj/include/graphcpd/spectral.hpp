#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "graphcpd/graph.hpp"
#include "graphcpd/types.hpp"

namespace graphcpd {

/// Low-pass gain h(mu) = min{1, sqrt(gamma/mu)}, with h(0) = 1.
inline double filter_gain(double mu, double gamma) {
    if (!(mu >= 0.0)) throw DomainError("filter_gain: eigenvalue must be >= 0");
    if (!(gamma > 0.0)) throw DomainError("filter_gain: gamma must be > 0");
    if (mu == 0.0) return 1.0;
    return std::min(1.0, std::sqrt(gamma / mu));
}

/// Eigenpairs of the normalized Laplacian I - D^{-1/2} W D^{-1/2}, solved one
/// connected component at a time.
///
/// Index 0 is the global direction u_1 = D^{1/2} 1 / |D^{1/2} 1| (the constant
/// vector when the graph has no edges). Indices 1..K0-1 span the rest of the
/// kernel, orthonormal to u_1. The remaining pairs follow in ascending
/// eigenvalue order, ties by component then solver order. Vectors of non-zero
/// eigenvalues are stored on their component only.
class SpectralDecomposition {
public:
    struct LocalPair {
        double value = 0.0;
        std::size_t component = 0;
        std::vector<double> local;  ///< entries on components()[component], same order
    };

    explicit SpectralDecomposition(const PixelGraph& graph) : size_(graph.size()), components_(graph.components()) {
        const std::size_t k0 = components_.size();
        kernel_.resize(k0);
        std::vector<double> weight(k0, 0.0);
        double total_degree = 0.0;
        for (std::size_t n = 0; n < size_; ++n) total_degree += static_cast<double>(graph.degree(n));

        for (std::size_t c = 0; c < k0; ++c) {
            const auto& verts = components_[c];
            const std::size_t m = verts.size();
            if (m == 1) {
                kernel_[c] = {1.0};
                continue;
            }
            std::vector<double> sqrt_deg(m);
            double comp_degree = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                sqrt_deg[i] = std::sqrt(static_cast<double>(graph.degree(verts[i])));
                comp_degree += static_cast<double>(graph.degree(verts[i]));
            }
            weight[c] = std::sqrt(comp_degree);
            kernel_[c].resize(m);
            for (std::size_t i = 0; i < m; ++i) kernel_[c][i] = sqrt_deg[i] / weight[c];

            Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    if (graph.adjacent(verts[i], verts[j]))
                        lap(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = -1.0 / (sqrt_deg[i] * sqrt_deg[j]);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
            // Eigen sorts ascending; column 0 is the component's kernel vector,
            // replaced above by its exact form.
            for (Eigen::Index k = 1; k < static_cast<Eigen::Index>(m); ++k) {
                LocalPair pair{std::clamp(solver.eigenvalues()(k), 0.0, 2.0), c, std::vector<double>(m)};
                for (std::size_t i = 0; i < m; ++i) pair.local[i] = solver.eigenvectors()(static_cast<Eigen::Index>(i), k);
                pairs_.push_back(std::move(pair));
            }
        }
        std::stable_sort(pairs_.begin(), pairs_.end(), [](const auto& a, const auto& b) { return a.value < b.value; });

        // Coefficients of u_1 in the per-component kernel basis.
        global_.assign(k0, 0.0);
        if (total_degree > 0.0) {
            for (std::size_t c = 0; c < k0; ++c) global_[c] = weight[c] / std::sqrt(total_degree);
        } else {
            for (std::size_t c = 0; c < k0; ++c) global_[c] = 1.0 / std::sqrt(static_cast<double>(size_));
        }
        u1_.assign(size_, 0.0);
        for (std::size_t c = 0; c < k0; ++c)
            for (std::size_t i = 0; i < components_[c].size(); ++i) u1_[components_[c][i]] = global_[c] * kernel_[c][i];

        eigenvalues_.assign(k0, 0.0);
        for (const auto& p : pairs_) eigenvalues_.push_back(p.value);
    }

    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] std::size_t kernel_dimension() const noexcept { return components_.size(); }
    [[nodiscard]] std::span<const double> eigenvalues() const noexcept { return eigenvalues_; }
    [[nodiscard]] const std::vector<std::vector<std::size_t>>& components() const noexcept { return components_; }
    [[nodiscard]] std::span<const LocalPair> nonzero_pairs() const noexcept { return pairs_; }
    [[nodiscard]] std::span<const double> global_direction() const noexcept { return u1_; }

    /// Dense eigenvector k (O(N)). The kernel complement is built from a
    /// Householder reflection taking e_1 to the coefficients of u_1.
    [[nodiscard]] std::vector<double> eigenvector(std::size_t k) const {
        if (k >= size_) throw DimensionError("eigenvector index out of range");
        std::vector<double> v(size_, 0.0);
        const std::size_t k0 = kernel_dimension();
        if (k == 0) return u1_;
        if (k < k0) {
            std::vector<double> h(k0, 0.0);  // column k of the reflection
            std::vector<double> r = global_;
            r[0] -= 1.0;
            const double rr = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
            for (std::size_t c = 0; c < k0; ++c) h[c] = (c == k ? 1.0 : 0.0) - (rr > 0.0 ? 2.0 * r[c] * r[k] / rr : 0.0);
            for (std::size_t c = 0; c < k0; ++c)
                for (std::size_t i = 0; i < components_[c].size(); ++i) v[components_[c][i]] = h[c] * kernel_[c][i];
            return v;
        }
        const auto& p = pairs_[k - k0];
        for (std::size_t i = 0; i < p.local.size(); ++i) v[components_[p.component][i]] = p.local[i];
        return v;
    }

    /// y = sum over k >= 2 of gain(mu_k) (u_k' x) u_k. The kernel part is
    /// evaluated basis-free as (kernel projector - u_1 u_1') x with gain(0).
    template <class GainFn>
    [[nodiscard]] std::vector<double> apply_spectral(std::span<const double> x, GainFn&& gain) const {
        if (x.size() != size_) throw DimensionError("signal length does not match the decomposition");
        std::vector<double> y(size_, 0.0);
        const double g0 = gain(0.0);
        for (std::size_t c = 0; c < components_.size(); ++c) {
            const auto& verts = components_[c];
            double coef = 0.0;
            for (std::size_t i = 0; i < verts.size(); ++i) coef += kernel_[c][i] * x[verts[i]];
            for (std::size_t i = 0; i < verts.size(); ++i) y[verts[i]] += g0 * coef * kernel_[c][i];
        }
        double along_u1 = 0.0;
        for (std::size_t n = 0; n < size_; ++n) along_u1 += u1_[n] * x[n];
        for (std::size_t n = 0; n < size_; ++n) y[n] -= g0 * along_u1 * u1_[n];
        for (const auto& p : pairs_) {
            const double g = gain(p.value);
            if (g == 0.0) continue;
            const auto& verts = components_[p.component];
            double coef = 0.0;
            for (std::size_t i = 0; i < verts.size(); ++i) coef += p.local[i] * x[verts[i]];
            for (std::size_t i = 0; i < verts.size(); ++i) y[verts[i]] += g * coef * p.local[i];
        }
        return y;
    }

private:
    std::size_t size_ = 0;
    std::vector<std::vector<std::size_t>> components_;
    std::vector<std::vector<double>> kernel_;  ///< per-component normalized D^{1/2} 1
    std::vector<double> global_;               ///< u_1 in the kernel_ basis
    std::vector<double> u1_;
    std::vector<LocalPair> pairs_;
    std::vector<double> eigenvalues_;
};

inline SpectralDecomposition spectral_decompose(const PixelGraph& graph) { return SpectralDecomposition(graph); }

/// Anything that maps an N-vector graph signal to its filtered version.
template <class F>
concept GraphSignalFilter = requires(const F& f, std::span<const double> x) {
    { f.apply(x) } -> std::same_as<std::vector<double>>;
    { f.size() } -> std::convertible_to<std::size_t>;
    { f.gamma() } -> std::convertible_to<double>;
};

/// GFSS low-pass filter through an explicit eigendecomposition.
class GraphFilter {
public:
    GraphFilter(std::shared_ptr<const SpectralDecomposition> spectrum, double gamma)
        : spectrum_(std::move(spectrum)), gamma_(gamma) {
        if (!spectrum_) throw ParameterError("GraphFilter needs a decomposition");
        if (!(gamma > 0.0)) throw ParameterError("gamma must be > 0");
        gains_.reserve(spectrum_->size());
        for (double mu : spectrum_->eigenvalues()) gains_.push_back(filter_gain(mu, gamma_));
        gains_[0] = 0.0;
    }

    [[nodiscard]] std::size_t size() const noexcept { return spectrum_->size(); }
    [[nodiscard]] double gamma() const noexcept { return gamma_; }
    /// h(mu_k) per eigen index; index 0 (the removed global direction) is 0.
    [[nodiscard]] std::span<const double> gains() const noexcept { return gains_; }
    [[nodiscard]] const SpectralDecomposition& spectrum() const noexcept { return *spectrum_; }

    [[nodiscard]] std::vector<double> apply(std::span<const double> x) const {
        return spectrum_->apply_spectral(x, [g = gamma_](double mu) { return filter_gain(mu, g); });
    }

    /// Applies the squared filter, i.e. gains h(mu)^2.
    [[nodiscard]] std::vector<double> apply_squared(std::span<const double> x) const {
        return spectrum_->apply_spectral(x, [g = gamma_](double mu) {
            const double h = filter_gain(mu, g);
            return h * h;
        });
    }

private:
    std::shared_ptr<const SpectralDecomposition> spectrum_;
    double gamma_;
    std::vector<double> gains_;
};

/// The same filter in O(N) for superpixel clique graphs. A clique of m >= 2
/// vertices has spectrum {0, m/(m-1) (x m-1)}, so inside each superpixel the
/// output is mean + h(m/(m-1)) (x - mean); the u_1 component is then removed.
class CliqueFilter {
public:
    CliqueFilter(const Labeling& labeling, double gamma) : labels_(labeling.labels().begin(), labeling.labels().end()), gamma_(gamma) {
        if (!(gamma > 0.0)) throw ParameterError("gamma must be > 0");
        const std::size_t k = labeling.segments();
        sizes_.resize(k);
        gains_.resize(k);
        double total_degree = 0.0;
        for (std::size_t s = 0; s < k; ++s) {
            const auto m = static_cast<double>(labeling.segment_size(s));
            sizes_[s] = m;
            gains_[s] = m >= 2.0 ? filter_gain(m / (m - 1.0), gamma) : 1.0;
            total_degree += m * (m - 1.0);
        }
        u1_.resize(k);
        for (std::size_t s = 0; s < k; ++s)
            u1_[s] = total_degree > 0.0 ? std::sqrt(sizes_[s] - 1.0) / std::sqrt(total_degree)
                                        : 1.0 / std::sqrt(static_cast<double>(labels_.size()));
    }

    [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }
    [[nodiscard]] double gamma() const noexcept { return gamma_; }
    [[nodiscard]] std::size_t segments() const noexcept { return sizes_.size(); }
    [[nodiscard]] std::uint32_t label(std::size_t n) const { return labels_[n]; }
    [[nodiscard]] double segment_size(std::size_t s) const { return sizes_[s]; }
    /// Entry of u_1 on any pixel of segment s.
    [[nodiscard]] double global_entry(std::size_t s) const { return u1_[s]; }

    [[nodiscard]] std::vector<double> apply(std::span<const double> x) const {
        if (x.size() != size()) throw DimensionError("signal length does not match the labeling");
        std::vector<double> mean(sizes_.size(), 0.0);
        for (std::size_t n = 0; n < x.size(); ++n) mean[labels_[n]] += x[n];
        for (std::size_t s = 0; s < mean.size(); ++s) mean[s] /= sizes_[s];
        double along_u1 = 0.0;
        for (std::size_t n = 0; n < x.size(); ++n) along_u1 += u1_[labels_[n]] * x[n];
        std::vector<double> y(x.size());
        for (std::size_t n = 0; n < x.size(); ++n) {
            const auto s = labels_[n];
            y[n] = mean[s] + gains_[s] * (x[n] - mean[s]) - along_u1 * u1_[s];
        }
        return y;
    }

private:
    std::vector<std::uint32_t> labels_;
    double gamma_;
    std::vector<double> sizes_;
    std::vector<double> gains_;
    std::vector<double> u1_;
};

inline std::vector<double> apply_filter(const GraphFilter& filter, std::span<const double> x) { return filter.apply(x); }

inline std::vector<double> clique_filter_apply(const Labeling& labeling, double gamma, std::span<const double> x) {
    return CliqueFilter(labeling, gamma).apply(x);
}

/// Centralized GFSS statistic |g(x)|_2.
template <GraphSignalFilter F>
double centralized_gfss(const F& filter, std::span<const double> x) {
    const auto y = filter.apply(x);
    double ss = 0.0;
    for (double v : y) ss += v * v;
    return std::sqrt(ss);
}

}  // namespace graphcpd
