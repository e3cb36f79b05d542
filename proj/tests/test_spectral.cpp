#include <gtest/gtest.h>

#include <memory>
#include <random>

#include "graphcpd/spectral.hpp"
#include "oracles.hpp"

using namespace graphcpd;

namespace {

PixelGraph graph_of(std::vector<std::uint32_t> labels) {
    const GridSize g{1, labels.size()};
    return build_graph(Labeling(g, std::move(labels)));
}

double max_abs_diff(const std::vector<double>& a, const Eigen::VectorXd& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b(static_cast<Eigen::Index>(i))));
    return m;
}

GraphFilter make_filter(const PixelGraph& g, double gamma) {
    return GraphFilter(std::make_shared<const SpectralDecomposition>(g), gamma);
}

}  // namespace

TEST(BuildGraph, Examples) {
    const auto g = graph_of({0, 0, 1, 1});
    EXPECT_EQ(g.edges(), (std::vector<PixelGraph::Edge>{{0, 1}, {2, 3}}));
    for (std::size_t n = 0; n < 4; ++n) EXPECT_EQ(g.degree(n), 1u);

    const auto k5 = graph_of({0, 0, 0, 0, 0});
    EXPECT_EQ(k5.edge_count(), 10u);

    const auto empty = graph_of({0, 1, 2});
    EXPECT_EQ(empty.edge_count(), 0u);
    EXPECT_EQ(empty.components().size(), 3u);
}

TEST(BuildGraph, ComponentsAreSuperpixels) {
    std::mt19937_64 rng(2);
    const auto lab = oracle::random_labeling(rng, {5, 6}, 7);
    const auto g = build_graph(lab);
    const auto members = lab.members();
    ASSERT_EQ(g.components().size(), lab.segments());
    for (std::size_t n = 0; n < g.size(); ++n) EXPECT_EQ(g.degree(n), lab.segment_size(lab[n]) - 1);
    for (const auto& comp : g.components()) EXPECT_EQ(comp, members[lab[comp.front()]]);
}

TEST(Spectrum, CliqueEigenvalues) {
    const SpectralDecomposition k3(graph_of({0, 0, 0}));
    ASSERT_EQ(k3.eigenvalues().size(), 3u);
    EXPECT_NEAR(k3.eigenvalues()[0], 0.0, 1e-12);
    EXPECT_NEAR(k3.eigenvalues()[1], 1.5, 1e-12);
    EXPECT_NEAR(k3.eigenvalues()[2], 1.5, 1e-12);

    const SpectralDecomposition k4(graph_of({0, 0, 0, 0}));
    EXPECT_NEAR(k4.eigenvalues()[0], 0.0, 1e-12);
    for (std::size_t k = 1; k < 4; ++k) EXPECT_NEAR(k4.eigenvalues()[k], 4.0 / 3.0, 1e-12);
}

TEST(Spectrum, TwoEdgesAndGlobalDirection) {
    const SpectralDecomposition s(graph_of({0, 0, 1, 1}));
    const std::vector<double> expect{0, 0, 2, 2};
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(s.eigenvalues()[k], expect[k], 1e-12);
    EXPECT_EQ(s.kernel_dimension(), 2u);
    for (double v : s.global_direction()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Spectrum, EigenpairsAgainstDenseLaplacian) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto lab = oracle::random_labeling(rng, {3, 1 + static_cast<std::size_t>(trial % 7)}, 6);
        const auto g = build_graph(lab);
        const SpectralDecomposition s(g);
        const Eigen::MatrixXd lap = oracle::normalized_laplacian(g);
        const auto n = static_cast<Eigen::Index>(g.size());
        Eigen::MatrixXd u(n, n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto v = oracle::to_eigen(s.eigenvector(static_cast<std::size_t>(k)));
            u.col(k) = v;
            EXPECT_LE((lap * v - s.eigenvalues()[static_cast<std::size_t>(k)] * v).norm(), 1e-8);
            EXPECT_GE(s.eigenvalues()[static_cast<std::size_t>(k)], 0.0);
            EXPECT_LE(s.eigenvalues()[static_cast<std::size_t>(k)], 2.0);
        }
        EXPECT_LE((u.transpose() * u - Eigen::MatrixXd::Identity(n, n)).norm(), 1e-10);
        EXPECT_LE((u.col(0) - oracle::global_direction(g)).norm(), 1e-14);
        for (std::size_t k = 1; k < s.eigenvalues().size(); ++k) EXPECT_LE(s.eigenvalues()[k - 1], s.eigenvalues()[k]);
        std::size_t zeros = 0;
        for (double mu : s.eigenvalues()) zeros += mu == 0.0;
        EXPECT_EQ(zeros, lab.segments());
        EXPECT_EQ(s.kernel_dimension(), lab.segments());
    }
}

TEST(FilterGain, Examples) {
    EXPECT_EQ(filter_gain(0.05, 0.1), 1.0);
    EXPECT_DOUBLE_EQ(filter_gain(0.4, 0.1), 0.5);
    EXPECT_NEAR(filter_gain(1.5, 0.1), 0.2581988897471611, 1e-15);
    EXPECT_EQ(filter_gain(0.0, 0.1), 1.0);
    EXPECT_THROW(filter_gain(-1e-3, 0.1), DomainError);
    EXPECT_THROW(filter_gain(1.0, 0.0), DomainError);
    double prev = 1.0;
    for (double mu = 0.0; mu <= 2.0; mu += 0.01) {
        EXPECT_LE(filter_gain(mu, 0.3), prev);
        prev = filter_gain(mu, 0.3);
    }
}

TEST(ApplyFilter, TwoEdgeExamples) {
    const auto g = graph_of({0, 0, 1, 1});
    const auto f = make_filter(g, 0.1);
    EXPECT_EQ(f.gains()[0], 0.0);

    const std::vector<double> kernel{1, 1, -1, -1};
    const auto y = f.apply(kernel);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], kernel[i], 1e-14);

    const std::vector<double> edge{1, -1, 0, 0};
    const auto z = f.apply(edge);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(z[i], 0.22360679774997896 * edge[i], 1e-14);

    const std::vector<double> global{1, 1, 1, 1};
    for (double v : f.apply(global)) EXPECT_NEAR(v, 0.0, 1e-14);
    EXPECT_NEAR(centralized_gfss(f, global), 0.0, 1e-14);
}

TEST(ApplyFilter, MatchesDenseOracle) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> gam(0.01, 3.0);
    for (int trial = 0; trial < 30; ++trial) {
        const auto lab = oracle::random_labeling(rng, {4, 1 + static_cast<std::size_t>(trial % 9)}, 9);
        const auto g = build_graph(lab);
        const double gamma = gam(rng);
        const auto f = make_filter(g, gamma);
        const auto x = oracle::random_vector(rng, g.size());
        const Eigen::VectorXd want = oracle::dense_gfss_filter(g, gamma) * oracle::to_eigen(x);
        EXPECT_LE(max_abs_diff(f.apply(x), want), 1e-10);
        EXPECT_NEAR(centralized_gfss(f, x), want.norm(), 1e-10);
    }
}

TEST(ApplyFilter, LinearSelfAdjointContractive) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const auto lab = oracle::random_labeling(rng, {6, 6}, 10);
        const auto f = make_filter(build_graph(lab), 0.2);
        const auto x = oracle::random_vector(rng, 36), y = oracle::random_vector(rng, 36);
        const double a = 1.7, b = -0.3;
        std::vector<double> axby(36);
        for (std::size_t i = 0; i < 36; ++i) axby[i] = a * x[i] + b * y[i];
        const auto hx = f.apply(x), hy = f.apply(y), hxy = f.apply(axby);
        double xhy = 0.0, yhx = 0.0, nx = 0.0, nhx = 0.0;
        for (std::size_t i = 0; i < 36; ++i) {
            EXPECT_NEAR(hxy[i], a * hx[i] + b * hy[i], 1e-12);
            xhy += x[i] * hy[i];
            yhx += y[i] * hx[i];
            nx += x[i] * x[i];
            nhx += hx[i] * hx[i];
        }
        EXPECT_NEAR(xhy, yhx, 1e-12);
        EXPECT_LE(nhx, nx + 1e-12);
    }
}

TEST(ApplyFilter, EigenvectorNormIsGain) {
    const auto g = graph_of({0, 0, 0, 1, 1, 2});
    const auto spectrum = std::make_shared<const SpectralDecomposition>(g);
    const GraphFilter f(spectrum, 0.3);
    for (std::size_t k = 1; k < g.size(); ++k) {
        const auto u = spectrum->eigenvector(k);
        EXPECT_NEAR(centralized_gfss(f, u), f.gains()[k], 1e-12);
    }
}

TEST(CliqueFilter, MatchesDenseOracleOnRandomCliqueGraphs) {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<std::size_t> side(1, 8);
    std::uniform_real_distribution<double> gam(0.01, 2.5);
    for (int trial = 0; trial < 50; ++trial) {
        const GridSize grid{side(rng), side(rng)};
        const auto lab = oracle::random_labeling(rng, grid, 1 + trial % 12);
        const double gamma = gam(rng);
        const auto x = oracle::random_vector(rng, grid.pixels());
        const Eigen::VectorXd want = oracle::dense_gfss_filter(build_graph(lab), gamma) * oracle::to_eigen(x);
        EXPECT_LE(max_abs_diff(clique_filter_apply(lab, gamma, x), want), 1e-8);
    }
}

TEST(CliqueFilter, ExamplesFromStructure) {
    // constant per superpixel and orthogonal to u_1 passes unchanged
    const Labeling lab({1, 5}, {0, 0, 1, 1, 1});
    const CliqueFilter f(lab, 0.1);
    // u_1 entries: sqrt(m-1) per pixel, so sum_n u_1(n) x(n) = 2*1*a + 3*sqrt(2)*b = 0
    const double a = 3.0 * std::sqrt(2.0), b = -2.0;
    const std::vector<double> x{a, a, b, b, b};
    const auto y = f.apply(x);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(y[i], x[i], 1e-12);

    const Labeling one({2, 3}, {0, 0, 0, 0, 0, 0});
    std::mt19937_64 rng(1);
    const auto z = clique_filter_apply(one, 0.5, oracle::random_vector(rng, 6));
    EXPECT_NEAR(std::accumulate(z.begin(), z.end(), 0.0), 0.0, 1e-12);
}

TEST(CliqueFilter, EdgelessGraphRemovesConstant) {
    const Labeling lab({1, 3}, {0, 1, 2});
    const std::vector<double> x{1, 2, 6};
    const auto y = clique_filter_apply(lab, 0.1, x);
    const auto z = make_filter(build_graph(lab), 0.1).apply(x);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(y[i], x[i] - 3.0, 1e-14);
        EXPECT_NEAR(z[i], x[i] - 3.0, 1e-14);
    }
}

TEST(NeighborhoodSums, Examples) {
    const std::vector<double> y3{1, 2, 7};
    EXPECT_EQ(neighborhood_sums(graph_of({0, 1, 2}), y3), y3);
    EXPECT_EQ(neighborhood_sums(graph_of({0, 0}), std::vector<double>{3, 5}), (std::vector<double>{8, 8}));
    EXPECT_EQ(neighborhood_sums(graph_of({0, 0, 1}), y3), (std::vector<double>{3, 3, 7}));
    EXPECT_THROW(neighborhood_sums(graph_of({0, 0}), y3), DimensionError);
}

TEST(NeighborhoodSums, ConstantWithinCliques) {
    std::mt19937_64 rng(14);
    const auto lab = oracle::random_labeling(rng, {7, 7}, 9);
    const auto s = neighborhood_sums(build_graph(lab), oracle::random_vector(rng, 49));
    for (const auto& seg : lab.members())
        for (auto p : seg) EXPECT_EQ(s[p], s[seg.front()]);
}
