#pragma once

// Synthetic sequences, detection metrics and the Monte Carlo harness.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <ostream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "graphcpd/baselines.hpp"
#include "graphcpd/dataio.hpp"
#include "graphcpd/detector.hpp"
#include "graphcpd/special_functions.hpp"
#include "graphcpd/superpixel.hpp"
#include "graphcpd/types.hpp"

namespace graphcpd {

// ---------------------------------------------------------------------------
// Simulator

/// Y_t = Qbar + E_t for t < t_c and Qbar + Delta + E_t afterwards, E_t iid N(0, sigma2).
/// Delta is L x N band-major and must vanish outside a union of clusters.
struct SimulatorConfig {
    GridSize grid{};
    std::size_t bands = 1;
    std::size_t frames = 2;         ///< T
    std::vector<double> background; ///< Qbar
    std::vector<double> change;     ///< Delta
    std::size_t change_frame = 2;   ///< t_c, 1-based
    double sigma2 = 0.0;
    Labeling clusters;              ///< the clusters Delta must align with

    void validate() const;
};

/// Several short-lived changes ("objects" entering and leaving). Event k adds
/// delta[k] over frames [start, end).
struct ChangeEvent {
    std::vector<double> delta;
    std::size_t start = 2;
    std::size_t end = 3;
};

struct IntermittentConfig {
    GridSize grid{};
    std::size_t bands = 1;
    std::size_t frames = 2;
    std::vector<double> background;
    std::vector<ChangeEvent> events;
    double sigma2 = 0.0;
    Labeling clusters;

    void validate() const;
};

struct SimulatedSequence {
    ImageSequence sequence;
    std::vector<ChangeMask> truth;  ///< one mask per frame t = 1..T
};

namespace detail {

inline void check_aligned(std::span<const double> delta, std::size_t bands, const Labeling& clusters) {
    const std::size_t n = clusters.pixels();
    if (delta.size() != bands * n) throw DimensionError("change matrix is not L x N");
    std::vector<int> state(clusters.segments(), -1);  // -1 unseen, 0 zero, 1 nonzero
    for (std::size_t i = 0; i < n; ++i) {
        bool nonzero = false;
        for (std::size_t b = 0; b < bands; ++b) nonzero |= delta[b * n + i] != 0.0;
        auto& s = state[clusters[i]];
        if (s == -1)
            s = nonzero;
        else if (s != static_cast<int>(nonzero))
            throw ParameterError("change support is not aligned with the superpixel clusters (segment " +
                                 std::to_string(clusters[i]) + " is partially changed)");
    }
}

inline void check_common(GridSize grid, std::size_t bands, std::size_t frames, std::span<const double> background, double sigma2,
                         const Labeling& clusters) {
    if (grid.pixels() == 0 || bands == 0) throw ParameterError("simulator dimensions must be >= 1");
    if (frames < 2) throw ParameterError("simulator needs T >= 2");
    if (background.size() != bands * grid.pixels()) throw DimensionError("background is not L x N");
    for (double v : background)
        if (!std::isfinite(v)) throw DomainError("background contains a non-finite value");
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw ParameterError("noise variance must be >= 0");
    if (clusters.grid() != grid) throw DimensionError("cluster labeling does not match the grid");
}

template <class ContentAt>
SimulatedSequence simulate(GridSize grid, std::size_t bands, std::size_t frames, double sigma2, std::uint64_t seed, ContentAt&& content) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, std::sqrt(sigma2));
    const std::size_t n = grid.pixels();
    SimulatedSequence out;
    std::vector<double> q(bands * n);
    std::vector<std::uint8_t> changed(n);
    for (std::size_t t = 1; t <= frames; ++t) {
        content(t, q, changed);
        std::vector<float> values(bands * n);
        for (std::size_t i = 0; i < values.size(); ++i)
            values[i] = static_cast<float>(sigma2 > 0.0 ? q[i] + noise(rng) : q[i]);
        out.sequence.push_back(Frame(grid, bands, std::move(values)));
        out.truth.emplace_back(t, grid, changed);
    }
    return out;
}

inline std::vector<std::uint8_t> support(std::span<const double> delta, std::size_t bands, std::size_t n) {
    std::vector<std::uint8_t> s(n, 0);
    for (std::size_t b = 0; b < bands; ++b)
        for (std::size_t i = 0; i < n; ++i) s[i] |= delta[b * n + i] != 0.0;
    return s;
}

}  // namespace detail

inline void SimulatorConfig::validate() const {
    detail::check_common(grid, bands, frames, background, sigma2, clusters);
    if (change_frame < 2 || change_frame > frames) throw ParameterError("change frame must satisfy 2 <= t_c <= T");
    detail::check_aligned(change, bands, clusters);
}

inline void IntermittentConfig::validate() const {
    detail::check_common(grid, bands, frames, background, sigma2, clusters);
    for (const auto& e : events) {
        if (e.start < 2 || e.end <= e.start) throw ParameterError("event frames must satisfy 2 <= start < end");
        detail::check_aligned(e.delta, bands, clusters);
    }
}

/// Deterministic given (cfg, seed). Truth c_{t,n} = 1 iff t >= t_c and column n of Delta is non-zero.
inline SimulatedSequence simulate_sequence(const SimulatorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t n = cfg.grid.pixels();
    const auto changed_support = detail::support(cfg.change, cfg.bands, n);
    return detail::simulate(cfg.grid, cfg.bands, cfg.frames, cfg.sigma2, seed,
                            [&](std::size_t t, std::vector<double>& q, std::vector<std::uint8_t>& changed) {
                                const bool after = t >= cfg.change_frame;
                                for (std::size_t i = 0; i < q.size(); ++i) q[i] = cfg.background[i] + (after ? cfg.change[i] : 0.0);
                                for (std::size_t i = 0; i < n; ++i) changed[i] = after && changed_support[i];
                            });
}

/// Truth c_{t,n} = 1 while some event touching pixel n is active.
inline SimulatedSequence simulate_intermittent(const IntermittentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t n = cfg.grid.pixels();
    std::vector<std::vector<std::uint8_t>> supports;
    for (const auto& e : cfg.events) supports.push_back(detail::support(e.delta, cfg.bands, n));
    return detail::simulate(cfg.grid, cfg.bands, cfg.frames, cfg.sigma2, seed,
                            [&](std::size_t t, std::vector<double>& q, std::vector<std::uint8_t>& changed) {
                                std::copy(cfg.background.begin(), cfg.background.end(), q.begin());
                                std::fill(changed.begin(), changed.end(), 0);
                                for (std::size_t k = 0; k < cfg.events.size(); ++k) {
                                    const auto& e = cfg.events[k];
                                    if (t < e.start || t >= e.end) continue;
                                    for (std::size_t i = 0; i < q.size(); ++i) q[i] += e.delta[i];
                                    for (std::size_t i = 0; i < n; ++i) changed[i] |= supports[k][i];
                                }
                            });
}

/// Noise variance giving 10 log10(mean(Qbar^2) / sigma2) = snr_db.
inline double sigma2_for_snr(std::span<const double> background, double snr_db) {
    if (background.empty()) throw DimensionError("empty background");
    double power = 0.0;
    for (double v : background) power += v * v;
    power /= static_cast<double>(background.size());
    return power / std::pow(10.0, snr_db / 10.0);
}

// ---------------------------------------------------------------------------
// Metrics

struct DelayOutcome {
    enum class Kind { detected, false_alarm, undetected };
    Kind kind = Kind::undetected;
    std::size_t delay = 0;       ///< valid when detected
    std::size_t first_flag = 0;  ///< first flagged frame, 0 when none

    [[nodiscard]] bool detected() const noexcept { return kind == Kind::detected; }
};

/// A run is a false alarm if anything is flagged before t_c; otherwise the
/// delay is (first frame >= t_c with a flag) - t_c.
inline DelayOutcome detection_delay(std::span<const ChangeMask> flags, std::size_t change_frame) {
    DelayOutcome out;
    for (const auto& m : flags) {
        if (!m.any()) continue;
        if (out.first_flag == 0 || m.t < out.first_flag) out.first_flag = m.t;
    }
    if (out.first_flag == 0) return out;
    if (out.first_flag < change_frame) {
        out.kind = DelayOutcome::Kind::false_alarm;
        return out;
    }
    out.kind = DelayOutcome::Kind::detected;
    out.delay = out.first_flag - change_frame;
    return out;
}

struct DetectionCounts {
    std::uint64_t true_positive = 0;   ///< sum of estimates where truth is 1
    std::uint64_t false_positive = 0;  ///< sum of estimates where truth is 0
    std::uint64_t positives = 0;       ///< sum of truth
    std::uint64_t cells = 0;           ///< T' N

    DetectionCounts& operator+=(const DetectionCounts& o) {
        true_positive += o.true_positive;
        false_positive += o.false_positive;
        positives += o.positives;
        cells += o.cells;
        return *this;
    }
    /// NaN when the truth has no changed cell.
    [[nodiscard]] double pd() const {
        return positives ? static_cast<double>(true_positive) / static_cast<double>(positives) : std::nan("");
    }
    [[nodiscard]] double pfa() const {
        const auto negatives = cells - positives;
        return negatives ? static_cast<double>(false_positive) / static_cast<double>(negatives) : std::nan("");
    }
};

/// Pooled Pd / Pfa over pixels and frames. Masks are matched by frame index;
/// frame 1 is skipped. A frame present in the truth but missing from the
/// estimates counts as all-zero.
inline DetectionCounts pd_pfa(std::span<const ChangeMask> estimates, std::span<const ChangeMask> truth) {
    DetectionCounts c;
    for (const auto& tr : truth) {
        if (tr.t < 2) continue;
        const ChangeMask* est = nullptr;
        for (const auto& e : estimates)
            if (e.t == tr.t) est = &e;
        if (est && est->grid != tr.grid) throw DimensionError("estimate and truth masks differ in size at t=" + std::to_string(tr.t));
        for (std::size_t i = 0; i < tr.flags.size(); ++i) {
            const std::uint8_t e = est ? est->flags[i] : 0;
            c.positives += tr.flags[i];
            (tr.flags[i] ? c.true_positive : c.false_positive) += e;
        }
        c.cells += tr.flags.size();
    }
    return c;
}

// ---------------------------------------------------------------------------
// Scenarios

enum class Method { dagfss, cva };

inline std::string to_string(Method m) { return m == Method::dagfss ? "dagfss" : "cva"; }

/// Everything needed to synthesize a family of sequences and run a method on them.
struct Scenario {
    GridSize grid{10, 10};
    std::size_t bands = 9;
    std::size_t frames = 70;
    std::size_t change_frame = 16;
    double snr_db = 10.0;
    std::optional<double> sigma2;   ///< overrides snr_db when set
    double change_magnitude = 0.3;  ///< per-entry shift, as a fraction of the background RMS
    std::size_t changed_segments = 1;
    std::size_t events = 0;         ///< > 0 selects intermittent changes
    std::size_t event_duration = 10;
    std::uint64_t scene_seed = 7;
    DetectorConfig detector{};
    SuperpixelParams slic{};

    [[nodiscard]] bool intermittent() const noexcept { return events > 0; }
};

/// Settings of the abrupt-change experiment: 10x10 pixels, 9 bands, 70
/// frames, change at frame 16, 10 dB SNR, S = 6, gamma = 0.1, rates (0.01, 0.8).
inline Scenario example1_scenario() {
    Scenario s;
    s.grid = {10, 10};
    s.bands = 9;
    s.frames = 70;
    s.change_frame = 16;
    s.snr_db = 10.0;
    s.slic.step = 6;
    s.detector.gamma = 0.1;
    s.detector.lambda = 0.01;
    s.detector.Lambda = 0.8;
    return s;
}

/// Settings of the intermittent-change experiment: 50x50 pixels, 7 bands,
/// 1000 frames, S = 5, gamma = 0.1, rates (0.15, 0.5).
inline Scenario example2_scenario() {
    Scenario s;
    s.grid = {50, 50};
    s.bands = 7;
    s.frames = 1000;
    s.change_frame = 2;
    s.snr_db = 10.0;
    s.slic.step = 5;
    s.detector.gamma = 0.1;
    s.detector.lambda = 0.15;
    s.detector.Lambda = 0.5;
    s.events = 60;
    s.event_duration = 12;
    return s;
}

/// Static content, reference clusters and change patterns of a scenario.
struct Scene {
    std::vector<double> background;
    Labeling clusters;
    double sigma2 = 0.0;
    std::vector<double> change;        ///< single-change scenarios
    std::vector<ChangeEvent> events;   ///< intermittent scenarios

    [[nodiscard]] SimulatorConfig simulator(const Scenario& s) const {
        return {s.grid, s.bands, s.frames, background, change, s.change_frame, sigma2, clusters};
    }
    [[nodiscard]] IntermittentConfig intermittent(const Scenario& s) const {
        return {s.grid, s.bands, s.frames, background, events, sigma2, clusters};
    }
};

/// Builds the scene from scene_seed: a piecewise-constant background of a
/// few spectrally distinct regions with a mild horizontal shading, clustered
/// by SLIC on the noiseless background; changes are sign-alternating
/// spectral offsets on whole clusters.
inline Scene build_scene(const Scenario& s) {
    if (s.grid.pixels() == 0 || s.bands == 0) throw ParameterError("scenario dimensions must be >= 1");
    if (s.frames < 2) throw ParameterError("scenario needs frames >= 2");
    if (!(s.change_magnitude >= 0.0)) throw ParameterError("change_magnitude must be >= 0");
    s.slic.validate(s.grid);
    std::mt19937_64 rng(s.scene_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n = s.grid.pixels(), h = s.grid.height, w = s.grid.width;

    const std::size_t regions = std::max<std::size_t>(2, std::min<std::size_t>(8, n / 12 + 1));
    std::vector<std::pair<double, double>> seeds(regions);
    for (auto& p : seeds) p = {unit(rng) * static_cast<double>(h), unit(rng) * static_cast<double>(w)};
    std::vector<std::vector<double>> spectra(regions, std::vector<double>(s.bands));
    for (auto& sp : spectra)
        for (auto& v : sp) v = 0.3 + 0.7 * unit(rng);

    Scene scene;
    scene.background.assign(s.bands * n, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        const double r = static_cast<double>(p / w) + 0.5, c = static_cast<double>(p % w) + 0.5;
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < regions; ++k) {
            const double d = (seeds[k].first - r) * (seeds[k].first - r) + (seeds[k].second - c) * (seeds[k].second - c);
            if (d < best_d) best_d = d, best = k;
        }
        const double shade = 0.95 + 0.1 * (c / static_cast<double>(w));
        for (std::size_t b = 0; b < s.bands; ++b) scene.background[b * n + p] = spectra[best][b] * shade;
    }

    std::vector<float> bg(scene.background.begin(), scene.background.end());
    scene.clusters = slic_segment(Frame(s.grid, s.bands, std::move(bg)), s.slic);
    scene.sigma2 = s.sigma2 ? *s.sigma2 : sigma2_for_snr(scene.background, s.snr_db);

    double rms = 0.0;
    for (double v : scene.background) rms += v * v;
    rms = std::sqrt(rms / static_cast<double>(scene.background.size()));
    const double shift = s.change_magnitude * rms;

    auto pattern = [&](std::uint32_t segment) {
        std::vector<double> delta(s.bands * n, 0.0);
        std::vector<double> sign(s.bands);
        for (auto& v : sign) v = unit(rng) < 0.5 ? -1.0 : 1.0;
        for (std::size_t p = 0; p < n; ++p)
            if (scene.clusters[p] == segment)
                for (std::size_t b = 0; b < s.bands; ++b) delta[b * n + p] = sign[b] * shift;
        return delta;
    };

    const auto k = static_cast<std::uint32_t>(scene.clusters.segments());
    if (!s.intermittent()) {
        if (s.change_frame < 2 || s.change_frame > s.frames) throw ParameterError("change_frame must satisfy 2 <= t_c <= frames");
        if (s.changed_segments > k)
            throw ParameterError("changed_segments exceeds the " + std::to_string(k) + " clusters of the scene");
        std::vector<std::uint32_t> order(k);
        for (std::uint32_t i = 0; i < k; ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        scene.change.assign(s.bands * n, 0.0);
        for (std::size_t i = 0; i < s.changed_segments; ++i) {
            const auto d = pattern(order[i]);
            for (std::size_t j = 0; j < d.size(); ++j) scene.change[j] += d[j];
        }
    } else {
        if (s.event_duration == 0) throw ParameterError("event_duration must be >= 1");
        std::uniform_int_distribution<std::uint32_t> pick(0, k - 1);
        std::uniform_int_distribution<std::size_t> when(2, s.frames);
        for (std::size_t e = 0; e < s.events; ++e) {
            ChangeEvent ev;
            ev.delta = pattern(pick(rng));
            ev.start = when(rng);
            ev.end = ev.start + s.event_duration;
            scene.events.push_back(std::move(ev));
        }
    }
    return scene;
}

inline SimulatedSequence simulate_run(const Scenario& s, const Scene& scene, std::uint64_t seed) {
    return s.intermittent() ? simulate_intermittent(scene.intermittent(s), seed) : simulate_sequence(scene.simulator(s), seed);
}

/// Runs the superpixel detector over a whole sequence (graph from frame 1,
/// unless a labeling is supplied). Returns statistics for t = 2..T.
struct DetectionRun {
    Labeling labels;
    std::vector<TestStatistics> frames;
    std::vector<std::string> warnings;
};

inline DetectionRun run_detector(const ImageSequence& seq, const DetectorConfig& config, const SuperpixelParams& slic,
                                 std::optional<Labeling> labels = std::nullopt) {
    if (seq.size() < 2) throw ParameterError("detection needs at least 2 frames");
    DetectionRun out;
    out.labels = labels ? std::move(*labels) : slic_segment(seq[0], slic);
    if (out.labels.grid() != seq.grid()) throw DimensionError("labeling does not match the sequence grid");
    auto det = make_superpixel_detector(config, out.labels, seq.bands());
    out.warnings = det.warnings();
    for (const auto& f : seq.frames())
        if (auto st = det.step(f)) out.frames.push_back(std::move(*st));
    return out;
}

/// Per-vertex decision scores of frame t, compared against a scalar
/// threshold: r / sigma_R^2 for the detector (-inf where untestable or
/// during burn-in), the CVA magnitude for the baseline.
inline std::vector<double> normalized_scores(const TestStatistics& st, std::size_t burn_in) {
    std::vector<double> s(st.r.size(), -std::numeric_limits<double>::infinity());
    if (st.t <= burn_in) return s;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (st.sigma_r2[i] > 0.0) s[i] = st.r[i] / st.sigma_r2[i];
    return s;
}

/// Score threshold of an operating point: chi2 quantile at alpha/N for the
/// detector, tau itself for CVA.
inline double score_threshold(Method method, double operating_point, std::size_t bands, std::size_t vertices) {
    if (method == Method::cva) {
        if (!(operating_point >= 0.0)) throw ParameterError("cva threshold must be >= 0");
        return operating_point;
    }
    if (!(operating_point > 0.0 && operating_point < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
    return special::chi2_upper_quantile(static_cast<double>(bands), operating_point / static_cast<double>(vertices));
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct RunTrace {
    std::vector<double> frame_max;             ///< max score over vertices, t = 2..T
    std::vector<DetectionCounts> counts;       ///< per requested threshold
};

struct MetricsRow {
    double operating_point = 0.0;  ///< alpha (detector) or tau (CVA)
    double pfa = 0.0;              ///< per-run false-alarm probability, or pooled Pfa
    double pd_or_delay = 0.0;      ///< mean delay over detected runs, or pooled Pd
    std::size_t false_alarm_runs = 0;
    std::size_t undetected_runs = 0;
    std::size_t runs = 0;
    double frame_pfa = 0.0;        ///< fraction of pre-change frames with any flag
};

using MetricsTable = std::vector<MetricsRow>;

enum class Metric { delay, pd_pfa };

/// One run per seed_base + run_index, spread over `threads` workers; the
/// result does not depend on the schedule.
inline std::vector<RunTrace> collect_traces(const Scenario& s, Method method, std::size_t runs, std::uint64_t seed_base,
                                            std::span<const double> thresholds, std::size_t threads = 1) {
    if (runs == 0) throw ParameterError("runs must be >= 1");
    const Scene scene = build_scene(s);
    // The detector is told the true noise level; a noiseless scene keeps unit
    // variance so thresholds stay finite.
    DetectorConfig det_cfg = s.detector;
    det_cfg.sigma2 = scene.sigma2 > 0.0 ? scene.sigma2 : 1.0;
    det_cfg.validate();

    std::vector<RunTrace> traces(runs);
    auto one_run = [&](std::size_t run) {
        const auto sim = simulate_run(s, scene, seed_base + run);
        RunTrace tr;
        tr.counts.resize(thresholds.size());
        auto account = [&](std::size_t t, const std::vector<double>& score) {
            tr.frame_max.push_back(*std::max_element(score.begin(), score.end()));
            const auto& truth = sim.truth[t - 1].flags;
            for (std::size_t k = 0; k < thresholds.size(); ++k) {
                auto& c = tr.counts[k];
                for (std::size_t i = 0; i < score.size(); ++i) {
                    const std::uint8_t flag = score[i] > thresholds[k];
                    c.positives += truth[i];
                    (truth[i] ? c.true_positive : c.false_positive) += flag;
                }
                c.cells += score.size();
            }
        };
        if (method == Method::dagfss) {
            auto det = make_superpixel_detector(det_cfg, slic_segment(sim.sequence[0], s.slic), s.bands);
            for (const auto& f : sim.sequence.frames())
                if (auto st = det.step(f)) account(st->t, normalized_scores(*st, det_cfg.burn_in));
        } else {
            for (std::size_t t = 2; t <= sim.sequence.size(); ++t)
                account(t, cva_magnitude(sim.sequence[t - 1], sim.sequence[t - 2]));
        }
        traces[run] = std::move(tr);
    };

    threads = std::max<std::size_t>(1, std::min(threads, runs));
    if (threads == 1) {
        for (std::size_t r = 0; r < runs; ++r) one_run(r);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::atomic<bool> failed{false};
        for (std::size_t w = 0; w < threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t r; (r = next++) < runs && !failed;) {
                    try {
                        one_run(r);
                    } catch (...) {
                        if (!failed.exchange(true)) failure = std::current_exception();
                    }
                }
            });
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }
    return traces;
}

/// Delay statistics of "max score > threshold" across runs.
inline MetricsRow summarize_delay(std::span<const RunTrace> traces, std::size_t change_frame, double threshold, double operating_point) {
    MetricsRow row;
    row.operating_point = operating_point;
    row.runs = traces.size();
    double delay_sum = 0.0;
    std::size_t detected = 0, pre_frames = 0, pre_alarms = 0;
    for (const auto& tr : traces) {
        std::optional<std::size_t> first;
        for (std::size_t k = 0; k < tr.frame_max.size(); ++k) {
            const std::size_t t = k + 2;
            const bool flagged = tr.frame_max[k] > threshold;
            if (t < change_frame) {
                ++pre_frames;
                pre_alarms += flagged;
            }
            if (flagged && !first) first = t;
        }
        if (!first)
            ++row.undetected_runs;
        else if (*first < change_frame)
            ++row.false_alarm_runs;
        else {
            ++detected;
            delay_sum += static_cast<double>(*first - change_frame);
        }
    }
    row.pfa = static_cast<double>(row.false_alarm_runs) / static_cast<double>(row.runs);
    row.pd_or_delay = detected ? delay_sum / static_cast<double>(detected) : std::nan("");
    row.frame_pfa = pre_frames ? static_cast<double>(pre_alarms) / static_cast<double>(pre_frames) : std::nan("");
    return row;
}

inline MetricsRow summarize_pd_pfa(std::span<const RunTrace> traces, std::size_t index, double operating_point) {
    MetricsRow row;
    row.operating_point = operating_point;
    row.runs = traces.size();
    DetectionCounts total;
    for (const auto& tr : traces) {
        const auto& c = tr.counts.at(index);
        total += c;
        row.false_alarm_runs += c.false_positive > 0;
        row.undetected_runs += c.positives > 0 && c.true_positive == 0;
    }
    row.pfa = total.pfa();
    row.pd_or_delay = total.pd();
    row.frame_pfa = row.pfa;
    return row;
}

/// Smallest observed per-run pre-change maximum at which at most
/// floor(target * runs) runs raise a false alarm.
inline double threshold_for_run_pfa(std::span<const RunTrace> traces, std::size_t change_frame, double target) {
    if (!(target >= 0.0 && target < 1.0)) throw ParameterError("target false-alarm probability must lie in [0, 1)");
    std::vector<double> pre;
    for (const auto& tr : traces) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k + 2 < change_frame && k < tr.frame_max.size(); ++k) m = std::max(m, tr.frame_max[k]);
        pre.push_back(m);
    }
    std::sort(pre.begin(), pre.end(), std::greater<>());
    const auto allowed = static_cast<std::size_t>(std::floor(target * static_cast<double>(pre.size())));
    return pre[std::min(allowed, pre.size() - 1)];
}

inline std::vector<double> default_grid(Method method) {
    if (method == Method::dagfss) return {0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5};
    return {};
}

/// One row per operating point, in grid order. With an empty grid the CVA
/// delay sweep is exact: every distinct per-run pre-change maximum.
inline MetricsTable monte_carlo(const Scenario& s, Method method, std::size_t runs, std::span<const double> grid, std::uint64_t seed,
                                std::optional<Metric> metric = std::nullopt, std::size_t threads = 1) {
    const Metric m = metric.value_or(s.intermittent() ? Metric::pd_pfa : Metric::delay);
    if (m == Metric::delay && s.intermittent()) throw ParameterError("delay metric needs a single-change scenario");
    std::vector<double> ops(grid.begin(), grid.end());
    if (ops.empty()) ops = default_grid(method);
    if (ops.empty() && m == Metric::pd_pfa) throw ParameterError("cva pd/pfa evaluation needs an explicit threshold grid");

    std::vector<double> thresholds;
    for (double op : ops) thresholds.push_back(score_threshold(method, op, s.bands, s.grid.pixels()));
    const auto traces = collect_traces(s, method, runs, seed, m == Metric::pd_pfa ? std::span<const double>(thresholds) : std::span<const double>(), threads);

    MetricsTable table;
    if (m == Metric::pd_pfa) {
        for (std::size_t k = 0; k < ops.size(); ++k) table.push_back(summarize_pd_pfa(traces, k, ops[k]));
        return table;
    }
    if (ops.empty()) {  // exact CVA sweep
        std::vector<double> pre;
        for (const auto& tr : traces) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k + 2 < s.change_frame && k < tr.frame_max.size(); ++k) mx = std::max(mx, tr.frame_max[k]);
            if (std::isfinite(mx)) pre.push_back(mx);
        }
        std::sort(pre.begin(), pre.end(), std::greater<>());
        pre.erase(std::unique(pre.begin(), pre.end()), pre.end());
        for (double tau : pre) table.push_back(summarize_delay(traces, s.change_frame, tau, tau));
        return table;
    }
    for (std::size_t k = 0; k < ops.size(); ++k) table.push_back(summarize_delay(traces, s.change_frame, thresholds[k], ops[k]));
    return table;
}

/// Writes the table with columns operating_point, pfa, pd_or_delay,
/// false_alarm_runs, undetected_runs, runs.
inline void write_metrics_csv(std::ostream& out, const MetricsTable& table) {
    io::CsvWriter csv(out, {"operating_point", "pfa", "pd_or_delay", "false_alarm_runs", "undetected_runs", "runs"});
    for (const auto& r : table)
        csv.row({io::csv_number(r.operating_point), io::csv_number(r.pfa), io::csv_number(r.pd_or_delay),
                 std::to_string(r.false_alarm_runs), std::to_string(r.undetected_runs), std::to_string(r.runs)});
}

}  // namespace graphcpd
