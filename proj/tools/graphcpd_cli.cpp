#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "graphcpd/graphcpd.hpp"

namespace fs = std::filesystem;
using namespace graphcpd;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_internal = 1;
constexpr int exit_user = 2;

struct Options {
    std::string input;
    std::string output;
    std::string config;
    std::string labels;
    std::string truth;
    std::string method = "dagfss";
    std::string metric;
    std::string grid;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    std::size_t runs = 100;
    std::size_t prefix = 0;
    bool pgm = false;
};

void require_file(const std::string& path, const char* what) {
    if (path.empty()) throw ParameterError(std::string("missing ") + what);
    if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " not found: " + path);
}

void require_dir(const std::string& path, const char* what) {
    if (!fs::is_directory(path)) throw IoError(std::string(what) + " is not a directory: " + path);
}

KeyValueConfig load_config(const Options& o) {
    KeyValueConfig kv;
    if (!o.config.empty()) {
        require_file(o.config, "config file");
        kv = KeyValueConfig::from_file(o.config);
    }
    for (const auto& s : o.sets) kv.apply_override(s);
    return kv;
}

/// Detector and SLIC settings: preset values apply only when a preset is named.
std::pair<DetectorConfig, SuperpixelParams> engine_settings(const KeyValueConfig& kv) {
    if (kv.has("preset")) {
        const auto s = scenario_config(kv);
        return {s.detector, s.slic};
    }
    return {detector_config(kv), superpixel_params(kv)};
}

Method parse_method(const std::string& m) {
    if (m == "dagfss") return Method::dagfss;
    if (m == "cva") return Method::cva;
    throw ParameterError("unknown method \"" + m + "\" (expected dagfss or cva)");
}

std::size_t worker_threads() {
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    const char* env = std::getenv("GRAPHCPD_THREADS");
    if (!env || !*env) return hw;
    std::size_t cap = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), cap);
    if (ec != std::errc() || ptr != s.data() + s.size() || cap == 0)
        throw ParameterError("GRAPHCPD_THREADS must be a positive integer, got \"" + std::string(s) + "\"");
    return std::min(hw, cap);
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= text.size() && !text.empty()) {
        const auto comma = std::min(text.find(',', pos), text.size());
        const std::string item = text.substr(pos, comma - pos);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || ptr != item.data() + item.size())
            throw ParameterError("grid entry \"" + item + "\" is not a number");
        out.push_back(v);
        pos = comma + 1;
    }
    return out;
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

// ---------------------------------------------------------------------------

int cmd_segment(const Options& o) {
    require_file(o.input, "input sequence");
    if (o.output.empty()) throw ParameterError("segment needs --output");
    const auto kv = load_config(o);
    const auto seq = io::read_sequence(o.input);
    const auto labels = slic_segment(seq[0], engine_settings(kv).second);
    io::write_labels(labels, o.output);
    std::cout << "segments=" << labels.segments()
              << " mean_size=" << io::csv_number(static_cast<double>(labels.pixels()) / static_cast<double>(labels.segments())) << "\n";
    return exit_ok;
}

int cmd_detect(const Options& o) {
    require_file(o.input, "input sequence");
    if (!o.labels.empty()) require_file(o.labels, "labels file");
    if (o.output.empty()) throw ParameterError("detect needs --output (a directory)");
    const auto kv = load_config(o);
    const Method method = parse_method(o.method);
    auto [dcfg, slic] = engine_settings(kv);
    const auto seq = io::read_sequence(o.input);
    if (seq.size() < 2) throw ParameterError("detection needs at least 2 frames");

    const fs::path dir(o.output);
    fs::create_directories(dir);
    auto csv_file = open_output(dir / "stats.csv");
    io::CsvWriter csv(csv_file, {"t", "n", "r", "xi", "flag"});
    std::size_t flagged = 0;
    std::optional<std::size_t> first;
    auto emit = [&](std::size_t t, const std::vector<double>& r, const std::vector<double>& xi, const ChangeMask& mask) {
        const std::string ts = std::to_string(t);
        for (std::size_t n = 0; n < r.size(); ++n)
            csv.row({ts, std::to_string(n), io::csv_number(r[n]), io::csv_number(xi[n]), mask.flags[n] ? "1" : "0"});
        if (!mask.any()) return;
        ++flagged;
        if (!first) first = t;
        io::write_mask(mask, dir / io::mask_filename(t));
        if (o.pgm) io::write_mask_pgm(mask, dir / io::mask_filename(t, ".pgm"));
    };

    if (method == Method::dagfss) {
        if (!kv.has("sigma2")) throw ParameterError("sigma2 is required for detection (estimate it with the estimate-noise subcommand)");
        const Labeling labels = o.labels.empty() ? slic_segment(seq[0], slic) : io::read_labels(o.labels);
        if (labels.grid() != seq.grid()) throw DimensionError("labeling grid does not match the sequence");
        io::write_labels(labels, dir / "labels.spl");
        auto det = make_superpixel_detector(dcfg, labels, seq.bands());
        for (const auto& w : det.warnings()) std::cerr << "warning: " << w << "\n";
        for (const auto& f : seq.frames())
            if (auto st = det.step(f)) emit(st->t, st->r, st->xi, st->flags);
        std::cout << "segments=" << labels.segments() << " ";
    } else {
        if (!kv.has("cva_tau")) throw ParameterError("method cva needs the cva_tau threshold");
        const double tau = kv.real("cva_tau");
        CvaState cva(tau);
        for (std::size_t t = 1; t <= seq.size(); ++t) {
            const auto mags = cva.step(seq[t - 1]);
            if (t == 1) continue;
            emit(t, mags, std::vector<double>(mags.size(), tau), cva_detect(mags, tau, t, seq.grid()));
        }
    }
    std::cout << "frames=" << seq.size() << " flagged_frames=" << flagged << " first_flag=" << (first ? std::to_string(*first) : "none")
              << "\n";
    return exit_ok;
}

int cmd_simulate(const Options& o) {
    if (o.output.empty()) throw ParameterError("simulate needs --output (a directory)");
    if (!o.labels.empty()) require_file(o.labels, "labels file");
    auto kv = load_config(o);
    const auto s = scenario_config(kv);
    Scene scene = build_scene(s);
    if (!o.labels.empty()) scene.clusters = io::read_labels(o.labels);
    const auto sim = simulate_run(s, scene, o.seed);

    const fs::path dir(o.output);
    fs::create_directories(dir / "truth");
    io::write_sequence(sim.sequence, dir / "sequence.mbs");
    for (const auto& m : sim.truth) io::write_mask(m, dir / "truth" / io::mask_filename(m.t));
    if (!kv.has("sigma2")) kv.set("sigma2", io::csv_number(scene.sigma2));
    auto cfg = open_output(dir / "scenario.cfg");
    cfg << kv.serialize();
    std::cout << "frames=" << s.frames << " sigma2=" << io::csv_number(scene.sigma2)
              << (s.intermittent() ? " events=" + std::to_string(s.events) : " change_frame=" + std::to_string(s.change_frame)) << "\n";
    return exit_ok;
}

int cmd_evaluate(const Options& o) {
    if (o.input.empty()) throw ParameterError("evaluate needs --input (directory of estimate masks)");
    if (o.truth.empty()) throw ParameterError("evaluate needs --truth (directory of truth masks)");
    require_dir(o.input, "estimate directory");
    require_dir(o.truth, "truth directory");
    const auto kv = load_config(o);
    const auto est = io::read_mask_dir(o.input);
    const auto truth = io::read_mask_dir(o.truth);
    if (truth.empty()) throw FormatError("no truth masks in " + o.truth);
    const auto c = pd_pfa(est, truth);

    std::optional<std::size_t> tc;
    if (kv.has("change_frame"))
        tc = static_cast<std::size_t>(kv.integer("change_frame"));
    else
        for (const auto& m : truth)
            if (m.any()) {
                tc = m.t;
                break;
            }

    std::ostringstream text;
    io::CsvWriter csv(text, {"metric", "value"});
    csv.row({"pd", io::csv_number(c.pd())});
    csv.row({"pfa", io::csv_number(c.pfa())});
    csv.row({"true_positive", std::to_string(c.true_positive)});
    csv.row({"false_positive", std::to_string(c.false_positive)});
    csv.row({"positives", std::to_string(c.positives)});
    csv.row({"cells", std::to_string(c.cells)});
    if (tc) {
        const auto d = detection_delay(est, *tc);
        static constexpr const char* kinds[] = {"detected", "false_alarm", "undetected"};
        csv.row({"change_frame", std::to_string(*tc)});
        csv.row({"outcome", kinds[static_cast<int>(d.kind)]});
        csv.row({"delay", d.detected() ? std::to_string(d.delay) : "NA"});
    }
    if (o.output.empty()) {
        std::cout << text.str();
    } else {
        auto out = open_output(o.output);
        out << text.str();
        std::cout << "pd=" << io::csv_number(c.pd()) << " pfa=" << io::csv_number(c.pfa()) << "\n";
    }
    return exit_ok;
}

int cmd_roc(const Options& o) {
    if (o.output.empty()) throw ParameterError("roc needs --output (CSV path)");
    if (o.runs == 0) throw ParameterError("--runs must be >= 1");
    const auto kv = load_config(o);
    const auto s = scenario_config(kv);
    const Method method = parse_method(o.method);
    std::optional<Metric> metric;
    if (o.metric == "delay")
        metric = Metric::delay;
    else if (o.metric == "pd_pfa")
        metric = Metric::pd_pfa;
    else if (!o.metric.empty())
        throw ParameterError("unknown metric \"" + o.metric + "\" (expected delay or pd_pfa)");
    const auto grid = parse_grid(o.grid);
    const auto table = monte_carlo(s, method, o.runs, grid, o.seed, metric, worker_threads());

    const fs::path csv_path(o.output);
    {
        auto out = open_output(csv_path);
        write_metrics_csv(out, table);
    }
    const bool delay = metric.value_or(s.intermittent() ? Metric::pd_pfa : Metric::delay) == Metric::delay;
    if (delay)
        for (const auto& r : table)
            std::cerr << "operating_point=" << io::csv_number(r.operating_point) << " frame_pfa=" << io::csv_number(r.frame_pfa) << "\n";

    fs::path gp_path = csv_path;
    gp_path.replace_extension(".gp");
    auto gp = open_output(gp_path);
    gp << "set datafile separator \",\"\n"
       << "set key top right\n"
       << "set xlabel \"probability of false alarm\"\n"
       << "set ylabel \"" << (delay ? "mean detection delay (frames)" : "probability of detection") << "\"\n"
       << "plot \"" << csv_path.filename().string() << "\" using 2:3 skip 1 with linespoints title \"" << to_string(method) << "\"\n";
    std::cout << "rows=" << table.size() << " csv=" << csv_path.string() << " script=" << gp_path.string() << "\n";
    return exit_ok;
}

int cmd_estimate_noise(const Options& o) {
    require_file(o.input, "input sequence");
    const auto seq = io::read_sequence(o.input);
    const std::size_t prefix = o.prefix ? o.prefix : std::min<std::size_t>(seq.size(), 50);
    const double s2 = estimate_noise(seq, prefix);
    const std::string line = "sigma2 = " + io::csv_number(s2) + "\n";
    if (!o.output.empty()) {
        auto out = open_output(o.output);
        out << line;
    }
    std::cout << line;
    return exit_ok;
}

void add_config_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "key = value configuration file");
    cmd->add_option("--set", o.sets, "override a configuration key (key=value), repeatable")->take_all();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-based online change detection for multiband image sequences"};
    app.require_subcommand(1);
    Options o;

    auto* segment = app.add_subcommand("segment", "superpixel labeling of frame 1");
    segment->add_option("--input", o.input, "MBS1 sequence")->required();
    segment->add_option("--output", o.output, "SPL1 labeling to write")->required();
    add_config_flags(segment, o);

    auto* detect = app.add_subcommand("detect", "run the online detector over a sequence");
    detect->add_option("--input", o.input, "MBS1 sequence")->required();
    detect->add_option("--output", o.output, "output directory (stats.csv, masks)")->required();
    detect->add_option("--labels", o.labels, "SPL1 labeling to use instead of segmenting frame 1");
    detect->add_option("--method", o.method, "dagfss or cva")->check(CLI::IsMember({"dagfss", "cva"}));
    detect->add_flag("--pgm", o.pgm, "also write PGM images of flagged masks");
    add_config_flags(detect, o);

    auto* simulate = app.add_subcommand("simulate", "synthesize a sequence with ground truth");
    simulate->add_option("--output", o.output, "output directory")->required();
    simulate->add_option("--seed", o.seed, "noise seed");
    simulate->add_option("--labels", o.labels, "SPL1 labeling the change must align with");
    add_config_flags(simulate, o);

    auto* evaluate = app.add_subcommand("evaluate", "Pd, Pfa and delay of estimates against truth");
    evaluate->add_option("--input", o.input, "directory of estimate masks")->required();
    evaluate->add_option("--truth", o.truth, "directory of truth masks")->required();
    evaluate->add_option("--output", o.output, "CSV path (stdout when omitted)");
    add_config_flags(evaluate, o);

    auto* roc = app.add_subcommand("roc", "Monte Carlo operating characteristics");
    roc->add_option("--output", o.output, "CSV path; a gnuplot script is written next to it")->required();
    roc->add_option("--method", o.method, "dagfss or cva")->check(CLI::IsMember({"dagfss", "cva"}));
    roc->add_option("--runs", o.runs, "Monte Carlo runs");
    roc->add_option("--seed", o.seed, "seed of run 0; run k uses seed + k");
    roc->add_option("--grid", o.grid, "comma-separated alpha (dagfss) or tau (cva) values");
    roc->add_option("--metric", o.metric, "delay or pd_pfa (default from the scenario)");
    add_config_flags(roc, o);

    auto* noise = app.add_subcommand("estimate-noise", "robust noise variance from the first frames");
    noise->add_option("--input", o.input, "MBS1 sequence")->required();
    noise->add_option("--output", o.output, "write a config line sigma2 = value");
    noise->add_option("--prefix", o.prefix, "number of leading frames (default min(T, 50))");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_user;
    }

    try {
        if (*segment) return cmd_segment(o);
        if (*detect) return cmd_detect(o);
        if (*simulate) return cmd_simulate(o);
        if (*evaluate) return cmd_evaluate(o);
        if (*roc) return cmd_roc(o);
        if (*noise) return cmd_estimate_noise(o);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_user;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return exit_internal;
    }
    return exit_internal;
}
