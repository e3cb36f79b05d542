#include <gtest/gtest.h>

#include <random>

#include "graphcpd/baselines.hpp"

using namespace graphcpd;

TEST(Cva, MagnitudeExamples) {
    const GridSize g{1, 2};
    const Frame a(g, 1, {1.0f, 4.0f});
    EXPECT_EQ(cva_magnitude(a, a), (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(cva_magnitude(Frame(g, 1, {4.0f, 4.0f}), a), (std::vector<double>{3.0, 0.0}));
    const Frame b(g, 2, {3.0f, 0.0f, 4.0f, 0.0f});
    EXPECT_EQ(cva_magnitude(b, Frame(g, 2)), (std::vector<double>{5.0, 0.0}));
    EXPECT_THROW(cva_magnitude(a, b), DimensionError);
}

TEST(Cva, DetectExamples) {
    const GridSize g{1, 4};
    const std::vector<double> mags{0.5, 2.0, 1.0, 2.0};
    EXPECT_EQ(cva_detect(mags, 0.0, 3, g).count(), 4u);
    EXPECT_EQ(cva_detect(mags, 2.0, 3, g).count(), 0u);
    EXPECT_EQ(cva_detect(mags, 1.0, 3, g).flags, (std::vector<std::uint8_t>{0, 1, 0, 1}));
    EXPECT_THROW(cva_detect(mags, -1.0, 3, g), ParameterError);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::vector<double> random(50);
    for (auto& v : random) v = u(rng);
    std::vector<std::uint8_t> prev(50, 1);
    for (double tau = 0.0; tau <= 5.0; tau += 0.05) {
        const auto m = cva_detect(random, tau, 2, {5, 10});
        for (std::size_t i = 0; i < 50; ++i) EXPECT_LE(m.flags[i], prev[i]);
        prev = m.flags;
    }
}

TEST(Cva, StreamingIsMemoryless) {
    const GridSize g{1, 1};
    CvaState s(1.0);
    EXPECT_TRUE(s.step(Frame(g, 1, {0.0f})).empty());
    EXPECT_EQ(s.step(Frame(g, 1, {2.0f})), (std::vector<double>{2.0}));
    EXPECT_EQ(s.step(Frame(g, 1, {2.0f})), (std::vector<double>{0.0}));
    EXPECT_EQ(s.t(), 3u);
}

TEST(Roc, ExactSweep) {
    const std::vector<double> scores{0.9, 0.1, 0.5, 0.5, 0.3};
    const std::vector<std::uint8_t> truth{1, 0, 1, 0, 0};
    const auto roc = roc_sweep(scores, truth);
    ASSERT_EQ(roc.size(), 5u);  // 0.9, 0.5, 0.3, 0.1, -inf
    EXPECT_EQ(roc[0].threshold, 0.9);
    EXPECT_EQ(roc[0].pd, 0.0);
    EXPECT_EQ(roc[0].pfa, 0.0);
    EXPECT_EQ(roc[1].threshold, 0.5);
    EXPECT_EQ(roc[1].pd, 0.5);
    EXPECT_EQ(roc[1].pfa, 0.0);
    EXPECT_EQ(roc[2].pd, 1.0);
    EXPECT_DOUBLE_EQ(roc[2].pfa, 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(roc[3].pfa, 2.0 / 3.0);
    EXPECT_EQ(roc[4].pd, 1.0);
    EXPECT_EQ(roc[4].pfa, 1.0);
    // each point agrees with cva_detect at its threshold
    for (const auto& p : roc) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i)
            if (scores[i] > p.threshold) (truth[i] ? tp : fp) += 1;
        EXPECT_DOUBLE_EQ(p.pd, tp / 2.0);
        EXPECT_DOUBLE_EQ(p.pfa, fp / 3.0);
    }
}
