// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "graphcpd/graphcpd.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace graphcpd;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::size_t threads() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("GRAPHCPD_THREADS"))
        if (const long cap = std::atol(env); cap > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
    return n;
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(threads(), count); ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < count;) body(i);
        });
    for (auto& t : pool) t.join();
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

/// Null scenario on the Example-1 grid with converged-by-burn-in rates.
Scenario null_scenario(std::size_t bands, std::size_t frames) {
    Scenario s = example1_scenario();
    s.bands = bands;
    s.frames = frames;
    s.change_magnitude = 0.0;
    s.detector.lambda = 0.15;
    s.detector.Lambda = 0.5;
    s.detector.alpha = 0.05;
    s.detector.burn_in = 50;
    return s;
}

// 1 -------------------------------------------------------------------------
Outcome null_calibration() {
    const Scenario s = null_scenario(9, 200);
    const Scene scene = build_scene(s);
    DetectorConfig cfg = s.detector;
    cfg.sigma2 = scene.sigma2;
    const std::size_t runs = 500;
    std::vector<std::size_t> alarms(runs, 0), frames(runs, 0);
    parallel_for(runs, [&](std::size_t run) {
        const auto sim = simulate_run(s, scene, 1000 + run);
        auto det = make_superpixel_detector(cfg, slic_segment(sim.sequence[0], s.slic), s.bands);
        for (const auto& f : sim.sequence.frames())
            if (auto st = det.step(f); st && st->t > cfg.burn_in) {
                ++frames[run];
                alarms[run] += st->flags.any();
            }
    });
    const double n = static_cast<double>(std::accumulate(frames.begin(), frames.end(), std::size_t{0}));
    const double rate = static_cast<double>(std::accumulate(alarms.begin(), alarms.end(), std::size_t{0})) / n;
    const double bound = 0.05 + 2.0 * std::sqrt(0.05 * 0.95 / n);
    return {rate <= bound, "per-frame family-wise rate " + fmt(rate) + " over " + fmt(n) + " frames, bound " + fmt(bound)};
}

// 2 -------------------------------------------------------------------------
double ks_statistic(std::vector<double> x, double dof) {
    std::sort(x.begin(), x.end());
    const boost::math::chi_squared_distribution<double> ref(dof);
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = boost::math::cdf(ref, x[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

Outcome chi2_shape() {
    bool pass = true;
    std::string detail;
    for (std::size_t bands : {1u, 7u, 9u}) {
        const Scenario s = null_scenario(bands, 200);
        const Scene scene = build_scene(s);
        DetectorConfig cfg = s.detector;
        cfg.sigma2 = scene.sigma2;
        const std::size_t runs = 200;
        std::vector<std::vector<double>> per_run(runs);
        parallel_for(runs, [&](std::size_t run) {
            const auto sim = simulate_run(s, scene, 5000 + run);
            const auto labels = slic_segment(sim.sequence[0], s.slic);
            const auto members = labels.members();
            auto det = make_superpixel_detector(cfg, labels, s.bands);
            for (const auto& f : sim.sequence.frames()) {
                auto st = det.step(f);
                // one vertex per superpixel, every 10th frame after burn-in
                if (!st || st->t <= cfg.burn_in || st->t % 10 != 0) continue;
                for (const auto& seg : members) {
                    const auto v = seg.front();
                    if (st->sigma_r2[v] > 0.0) per_run[run].push_back(st->r[v] / st->sigma_r2[v]);
                }
            }
        });
        std::vector<double> pooled;
        for (const auto& r : per_run) pooled.insert(pooled.end(), r.begin(), r.end());
        const double d = ks_statistic(pooled, static_cast<double>(bands));
        const bool ok = pooled.size() >= 10000 && d < 0.05;
        pass = pass && ok;
        detail += "L=" + std::to_string(bands) + ": KS " + fmt(d) + " (n=" + std::to_string(pooled.size()) + ") ";
    }
    return {pass, detail};
}

// 3 -------------------------------------------------------------------------
Outcome eta_consistency() {
    bool pass = true;
    std::string detail;
    const std::pair<double, double> rates[] = {{0.01, 0.8}, {0.15, 0.5}};
    std::uint64_t seed = 77;
    for (auto [lambda, Lambda] : rates) {
        std::mt19937_64 rng(seed++);
        std::normal_distribution<double> noise;
        double v = noise(rng), vp = v, sum = 0.0, sum2 = 0.0;
        const long warmup = 20000, samples = 4'000'000;
        for (long t = 0; t < warmup + samples; ++t) {
            const double y = noise(rng);
            v = (1 - lambda) * v + lambda * y;
            vp = (1 - Lambda) * vp + Lambda * y;
            if (t < warmup) continue;
            sum += vp - v;
            sum2 += (vp - v) * (vp - v);
        }
        const double var = sum2 / samples - (sum / samples) * (sum / samples);
        const double rel = std::abs(var / eta(lambda, Lambda) - 1.0);
        pass = pass && rel < 0.05;
        detail += "(" + fmt(lambda) + "," + fmt(Lambda) + "): MC " + fmt(var) + " vs " + fmt(eta(lambda, Lambda)) + " rel " + fmt(rel) + "; ";
    }
    return {pass, detail};
}

// 4 -------------------------------------------------------------------------
Outcome filter_oracle() {
    std::mt19937_64 rng(4242);
    std::uniform_int_distribution<std::size_t> side(1, 8);
    std::uniform_real_distribution<double> gam(0.01, 2.5);
    double worst = 0.0;
    std::size_t largest = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const GridSize g{side(rng), side(rng)};
        const auto labels = oracle::random_labeling(rng, g, 1 + static_cast<std::size_t>(trial) % 16);
        const double gamma = gam(rng);
        const auto x = oracle::random_vector(rng, g.pixels());
        const Eigen::VectorXd want = oracle::dense_gfss_filter(build_graph(labels), gamma) * oracle::to_eigen(x);
        const auto got = clique_filter_apply(labels, gamma, x);
        for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want(static_cast<Eigen::Index>(i))));
        largest = std::max(largest, g.pixels());
    }
    return {worst <= 1e-8, "max-norm error " + fmt(worst) + " over 50 graphs, N <= " + std::to_string(largest)};
}

// 5 -------------------------------------------------------------------------
Outcome example1_comparison() {
    const Scenario s = example1_scenario();
    const std::size_t runs = 200;
    const auto dagfss = collect_traces(s, Method::dagfss, runs, 1, {}, threads());
    const auto cva = collect_traces(s, Method::cva, runs, 1, {}, threads());
    bool pass = true;
    std::string detail;
    for (double p : {0.05, 0.1, 0.2}) {
        const auto a = summarize_delay(dagfss, s.change_frame, threshold_for_run_pfa(dagfss, s.change_frame, p), p);
        const auto b = summarize_delay(cva, s.change_frame, threshold_for_run_pfa(cva, s.change_frame, p), p);
        const bool ok = a.pfa <= p && b.pfa <= p && std::isfinite(a.pd_or_delay) &&
                        (!std::isfinite(b.pd_or_delay) ? false : a.pd_or_delay < b.pd_or_delay);
        pass = pass && ok;
        detail += "Pfa " + fmt(p) + ": daGFSS " + fmt(a.pd_or_delay) + " (pfa " + fmt(a.pfa) + ", missed " + std::to_string(a.undetected_runs) +
                  ") vs CVA " + fmt(b.pd_or_delay) + " (pfa " + fmt(b.pfa) + ", missed " + std::to_string(b.undetected_runs) + "); ";
    }
    return {pass, detail};
}

// 6 -------------------------------------------------------------------------
Outcome pd_pfa_bookkeeping() {
    // hand-computed case: t=1 excluded, 2 x 3 cells remain, 3 positives
    const GridSize g{1, 3};
    const std::vector<ChangeMask> truth{{1, g, {1, 1, 1}}, {2, g, {1, 1, 0}}, {3, g, {0, 0, 1}}};
    const std::vector<ChangeMask> est{{1, g, {0, 0, 0}}, {2, g, {1, 0, 1}}, {3, g, {1, 1, 1}}};
    const auto c = pd_pfa(est, truth);
    bool pass = c.true_positive == 2 && c.false_positive == 3 && c.positives == 3 && c.cells == 6 && c.pd() == 2.0 / 3.0 &&
                c.pfa() == 3.0 / 3.0;

    // randomized pairs against a direct count
    std::mt19937_64 rng(66);
    std::bernoulli_distribution coin(0.3);
    for (int trial = 0; trial < 200 && pass; ++trial) {
        const GridSize gg{1 + static_cast<std::size_t>(trial % 5), 2 + static_cast<std::size_t>(trial % 3)};
        const std::size_t frames = 2 + static_cast<std::size_t>(trial % 7);
        std::vector<ChangeMask> tr, es;
        std::uint64_t tp = 0, fp = 0, pos = 0, cells = 0;
        for (std::size_t t = 1; t <= frames; ++t) {
            ChangeMask a(t, gg), b(t, gg);
            for (std::size_t i = 0; i < gg.pixels(); ++i) {
                a.flags[i] = coin(rng);
                b.flags[i] = coin(rng);
                if (t == 1) continue;
                pos += a.flags[i];
                tp += a.flags[i] && b.flags[i];
                fp += !a.flags[i] && b.flags[i];
                ++cells;
            }
            tr.push_back(a);
            es.push_back(b);
        }
        const auto got = pd_pfa(es, tr);
        pass = got.true_positive == tp && got.false_positive == fp && got.positives == pos && got.cells == cells &&
               (pos ? got.pd() == static_cast<double>(tp) / static_cast<double>(pos) : std::isnan(got.pd())) &&
               (cells > pos ? got.pfa() == static_cast<double>(fp) / static_cast<double>(cells - pos) : std::isnan(got.pfa()));
    }
    return {pass, "hand case and 200 randomized pairs, exact integer counts"};
}

// 7 -------------------------------------------------------------------------
Outcome special_functions() {
    double worst = 0.0;
    for (double q : {0.5, 0.9, 0.95, 0.99, 1.0 - 0.05 / 100.0}) {
        const double two = -2.0 * std::log1p(-q);
        const double z = std::sqrt(2.0) * boost::math::erf_inv(q);
        worst = std::max(worst, std::abs(special::chi2_quantile(2.0, q) / two - 1.0));
        worst = std::max(worst, std::abs(special::chi2_quantile(1.0, q) / (z * z) - 1.0));
    }
    return {worst <= 1e-9, "max relative error " + fmt(worst)};
}

// 8 -------------------------------------------------------------------------
int shell(const std::string& cmd) {
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Every regular file under `dir`, keyed by relative path.
std::vector<std::pair<std::string, std::string>> tree(const fs::path& dir) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), dir).string(), slurp(e.path()));
    std::sort(out.begin(), out.end());
    return out;
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / ("graphcpd_accept_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::string cli = GRAPHCPD_CLI_PATH;
    bool ok = true;
    for (const char* pass : {"a", "b"}) {
        const fs::path d = root / pass;
        const std::string q = " >/dev/null 2>&1";
        ok = ok && shell(cli + " simulate --seed 11 --output " + (d / "sim").string() + q) == 0;
        ok = ok && shell(cli + " detect --input " + (d / "sim/sequence.mbs").string() + " --config " + (d / "sim/scenario.cfg").string() +
                         " --output " + (d / "det").string() + q) == 0;
        ok = ok && shell(cli + " roc --runs 20 --seed 5 --grid 0.01,0.05,0.2 --output " + (d / "roc/delay.csv").string() + q) == 0;
        ok = ok && shell(cli + " roc --runs 20 --seed 5 --method cva --output " + (d / "roc/cva.csv").string() + q) == 0;
    }
    if (!ok) {
        fs::remove_all(root);
        return {false, "a CLI invocation failed"};
    }
    const auto a = tree(root / "a"), b = tree(root / "b");
    std::size_t masks = 0;
    for (const auto& [name, bytes] : a) masks += name.ends_with(".cmk");
    fs::remove_all(root);
    return {a == b && masks > 0, std::to_string(a.size()) + " files (" + std::to_string(masks) + " masks) compared byte for byte"};
}

// 9 -------------------------------------------------------------------------
struct Trace {
    std::vector<std::vector<double>> r, sigma, xi;
    std::vector<std::vector<std::uint8_t>> flags;
};

Trace trace(const Labeling& labels, const DetectorConfig& cfg, const ImageSequence& seq) {
    auto det = make_superpixel_detector(cfg, labels, seq.bands());
    Trace t;
    for (const auto& f : seq.frames())
        if (auto st = det.step(f)) {
            t.r.push_back(st->r);
            t.sigma.push_back(st->sigma_r2);
            t.xi.push_back(st->xi);
            t.flags.push_back(st->flags.flags);
        }
    return t;
}

ImageSequence transform(const ImageSequence& seq, const std::function<float(const Frame&, std::size_t, std::size_t)>& value) {
    ImageSequence out;
    for (const auto& f : seq.frames()) {
        Frame g(f.grid(), f.bands());
        for (std::size_t b = 0; b < f.bands(); ++b)
            for (std::size_t p = 0; p < f.pixels(); ++p) g.at(b, p) = value(f, b, p);
        out.push_back(std::move(g));
    }
    return out;
}

Outcome invariance() {
    Scenario s = example1_scenario();
    s.change_magnitude = 0.15;  // weak enough that flags vary from frame to frame
    const Scene scene = build_scene(s);
    bool scale_ok = true, perm_ok = true, const_ok = true;
    std::size_t flagged_cells = 0;
    for (std::uint64_t seed : {3u, 4u}) {
        const auto seq = simulate_run(s, scene, seed).sequence;
        const auto labels = slic_segment(seq[0], s.slic);
        DetectorConfig cfg = s.detector;
        cfg.sigma2 = scene.sigma2;
        const auto base = trace(labels, cfg, seq);
        for (const auto& f : base.flags) flagged_cells += static_cast<std::size_t>(std::count(f.begin(), f.end(), 1));

        for (double c : {0.5, 3.0, 1000.0}) {
            auto cc = cfg;
            cc.sigma2 = cfg.sigma2 * c * c;
            const auto scaled = transform(seq, [c](const Frame& f, std::size_t b, std::size_t p) { return static_cast<float>(c * f.at(b, p)); });
            scale_ok = scale_ok && trace(labels, cc, scaled).flags == base.flags;
        }

        std::mt19937_64 rng(seed);
        std::vector<std::size_t> perm(labels.pixels());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::uint32_t> plabels(perm.size()), remap(labels.segments(), UINT32_MAX);
        std::uint32_t next = 0;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            auto& m = remap[labels[perm[i]]];
            if (m == UINT32_MAX) m = next++;
            plabels[i] = m;
        }
        const auto pseq = transform(seq, [&](const Frame& f, std::size_t b, std::size_t p) { return f.at(b, perm[p]); });
        const auto moved = trace(Labeling(labels.grid(), plabels), cfg, pseq);
        for (std::size_t k = 0; k < base.r.size(); ++k)
            for (std::size_t i = 0; i < perm.size(); ++i) {
                const std::size_t o = perm[i];
                perm_ok = perm_ok && std::abs(moved.r[k][i] - base.r[k][o]) <= 1e-9 * (1.0 + base.r[k][o]) &&
                          moved.sigma[k][i] == base.sigma[k][o] && moved.xi[k][i] == base.xi[k][o] && moved.flags[k][i] == base.flags[k][o];
            }

        const auto members = labels.members();
        for (std::size_t k = 0; k < base.r.size(); ++k)
            for (const auto& seg : members)
                for (auto p : seg)
                    const_ok = const_ok && base.r[k][p] == base.r[k][seg.front()] && base.sigma[k][p] == base.sigma[k][seg.front()] &&
                               base.xi[k][p] == base.xi[k][seg.front()] && base.flags[k][p] == base.flags[k][seg.front()];
    }
    return {scale_ok && perm_ok && const_ok && flagged_cells > 0,
            std::string("scaling ") + (scale_ok ? "ok" : "broken") + ", permutation " + (perm_ok ? "ok" : "broken") + ", superpixel constancy " +
                (const_ok ? "ok" : "broken") + ", " + std::to_string(flagged_cells) + " flagged cells exercised"};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        Outcome (*run)();
    };
    const Criterion criteria[] = {
        {"null calibration", null_calibration},
        {"chi-squared statistic shape", chi2_shape},
        {"eta consistency", eta_consistency},
        {"filter oracle equivalence", filter_oracle},
        {"example-1 delay ordering", example1_comparison},
        {"pd/pfa bookkeeping", pd_pfa_bookkeeping},
        {"special functions", special_functions},
        {"determinism", determinism},
        {"invariance suite", invariance},
    };
    int failures = 0, index = 0;
    for (const auto& c : criteria) {
        ++index;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << index << "] " << c.name << ": " << o.detail << " (" << fmt(secs) << " s)"
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
