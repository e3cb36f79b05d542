#pragma once

// Binary containers:
//   MBS1  sequence: magic, u32 T H W L, then T*L*H*W f32 (frame, band, row-major pixel)
//   SPL1  labeling: magic, u32 H W, then H*W u32 labels
//   CMK1  mask:     magic, u32 H W, then H*W bytes in {0,1}
// All integers and floats little-endian.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "graphcpd/types.hpp"

namespace graphcpd::io {

namespace detail {

inline void put_u32(std::vector<char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f32(std::vector<char>& buf, float v) { put_u32(buf, std::bit_cast<std::uint32_t>(v)); }

inline std::uint32_t to_u32(std::size_t v, const char* field) {
    if (v > std::numeric_limits<std::uint32_t>::max())
        throw FormatError(std::string(field) + " does not fit in 32 bits");
    return static_cast<std::uint32_t>(v);
}

/// Cursor over an in-memory byte buffer; every read is bounds checked.
class Reader {
public:
    Reader(std::vector<char> bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

    void expect_magic(std::string_view magic) {
        if (bytes_.size() < magic.size() || std::string_view(bytes_.data(), magic.size()) != magic)
            throw FormatError(source_ + ": bad magic, expected \"" + std::string(magic) + "\"");
        pos_ = magic.size();
    }

    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    float f32(const char* field) { return std::bit_cast<float>(u32(field)); }

    std::uint8_t u8(const char* field) {
        need(1, field);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }

    void need(std::size_t n, const char* field) const {
        if (bytes_.size() - pos_ < n) throw FormatError(source_ + ": truncated payload while reading " + field);
    }

    void expect_end() const {
        if (pos_ != bytes_.size())
            throw FormatError(source_ + ": " + std::to_string(bytes_.size() - pos_) + " trailing bytes after payload");
    }

    [[nodiscard]] const std::string& source() const { return source_; }

private:
    std::vector<char> bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void dump(const std::filesystem::path& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

/// Product of payload dimensions; saturates so absurd headers read as truncation.
inline std::size_t payload_count(std::initializer_list<std::size_t> dims) {
    std::size_t n = 1;
    for (auto d : dims) {
        if (d != 0 && n > std::numeric_limits<std::size_t>::max() / 8 / d) return std::numeric_limits<std::size_t>::max() / 8;
        n *= d;
    }
    return n;
}

inline GridSize read_grid(Reader& r) {
    GridSize g{r.u32("H"), r.u32("W")};
    if (g.height == 0) throw FormatError(r.source() + ": zero dimension H");
    if (g.width == 0) throw FormatError(r.source() + ": zero dimension W");
    return g;
}

}  // namespace detail

// --- MBS1 -----------------------------------------------------------------

inline std::vector<char> encode_sequence(const ImageSequence& seq) {
    if (seq.empty()) throw DimensionError("cannot encode an empty sequence");
    for (const auto& f : seq.frames())
        if (!f.all_finite()) throw DomainError("sequence contains a non-finite value");
    const auto g = seq.grid();
    std::vector<char> buf{'M', 'B', 'S', '1'};
    buf.reserve(20 + 4 * seq.size() * seq.bands() * g.pixels());
    detail::put_u32(buf, detail::to_u32(seq.size(), "T"));
    detail::put_u32(buf, detail::to_u32(g.height, "H"));
    detail::put_u32(buf, detail::to_u32(g.width, "W"));
    detail::put_u32(buf, detail::to_u32(seq.bands(), "L"));
    for (const auto& f : seq.frames())
        for (float v : f.values()) detail::put_f32(buf, v);
    return buf;
}

inline ImageSequence decode_sequence(std::vector<char> bytes, std::string source = "<memory>") {
    detail::Reader r(std::move(bytes), std::move(source));
    r.expect_magic("MBS1");
    const std::size_t t = r.u32("T");
    const GridSize g = detail::read_grid(r);
    const std::size_t l = r.u32("L");
    if (t == 0) throw FormatError(r.source() + ": zero dimension T");
    if (l == 0) throw FormatError(r.source() + ": zero dimension L");
    r.need(4 * detail::payload_count({t, l, g.height, g.width}), "frame payload");
    const std::size_t per_frame = l * g.pixels();
    std::vector<Frame> frames;
    frames.reserve(t);
    for (std::size_t k = 0; k < t; ++k) {
        std::vector<float> values(per_frame);
        for (auto& v : values) {
            v = r.f32("frame payload");
            if (!std::isfinite(v))
                throw FormatError(r.source() + ": non-finite value in frame " + std::to_string(k + 1));
        }
        frames.emplace_back(g, l, std::move(values));
    }
    r.expect_end();
    return ImageSequence(std::move(frames));
}

inline ImageSequence read_sequence(const std::filesystem::path& path) {
    return decode_sequence(detail::slurp(path), path.string());
}

inline void write_sequence(const ImageSequence& seq, const std::filesystem::path& path) {
    detail::dump(path, encode_sequence(seq));
}

// --- SPL1 -----------------------------------------------------------------

inline std::vector<char> encode_labels(const Labeling& labels) {
    std::vector<char> buf{'S', 'P', 'L', '1'};
    detail::put_u32(buf, detail::to_u32(labels.grid().height, "H"));
    detail::put_u32(buf, detail::to_u32(labels.grid().width, "W"));
    for (auto l : labels.labels()) detail::put_u32(buf, l);
    return buf;
}

inline Labeling decode_labels(std::vector<char> bytes, std::string source = "<memory>") {
    detail::Reader r(std::move(bytes), std::move(source));
    r.expect_magic("SPL1");
    const GridSize g = detail::read_grid(r);
    r.need(4 * detail::payload_count({g.height, g.width}), "labels");
    std::vector<std::uint32_t> labels(g.pixels());
    for (auto& l : labels) l = r.u32("labels");
    r.expect_end();
    return Labeling(g, std::move(labels));
}

inline Labeling read_labels(const std::filesystem::path& path) {
    return decode_labels(detail::slurp(path), path.string());
}

inline void write_labels(const Labeling& labels, const std::filesystem::path& path) {
    detail::dump(path, encode_labels(labels));
}

// --- CMK1 -----------------------------------------------------------------
// The frame index is not part of the file; callers carry it in the file name
// (see mask_filename).

inline std::vector<char> encode_mask(const ChangeMask& mask) {
    std::vector<char> buf{'C', 'M', 'K', '1'};
    detail::put_u32(buf, detail::to_u32(mask.grid.height, "H"));
    detail::put_u32(buf, detail::to_u32(mask.grid.width, "W"));
    for (auto v : mask.flags) {
        if (v > 1) throw DomainError("mask value " + std::to_string(v) + " outside {0,1}");
        buf.push_back(static_cast<char>(v));
    }
    return buf;
}

inline ChangeMask decode_mask(std::vector<char> bytes, std::size_t t = 0, std::string source = "<memory>") {
    detail::Reader r(std::move(bytes), std::move(source));
    r.expect_magic("CMK1");
    const GridSize g = detail::read_grid(r);
    r.need(detail::payload_count({g.height, g.width}), "flags");
    std::vector<std::uint8_t> flags(g.pixels());
    for (auto& f : flags) {
        f = r.u8("flags");
        if (f > 1) throw DomainError(r.source() + ": mask value " + std::to_string(f) + " outside {0,1}");
    }
    r.expect_end();
    return ChangeMask(t, g, std::move(flags));
}

inline ChangeMask read_mask(const std::filesystem::path& path, std::size_t t = 0) {
    return decode_mask(detail::slurp(path), t, path.string());
}

inline void write_mask(const ChangeMask& mask, const std::filesystem::path& path) {
    detail::dump(path, encode_mask(mask));
}

/// "t00016.cmk" style name used for per-frame mask directories.
inline std::string mask_filename(std::size_t t, std::string_view extension = ".cmk") {
    char buf[32];
    std::snprintf(buf, sizeof buf, "t%05zu", t);
    return std::string(buf) + std::string(extension);
}

/// Reads every t#####.cmk file of a directory, sorted by frame index.
inline std::vector<ChangeMask> read_mask_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<ChangeMask> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.size() != 10 || name[0] != 't' || entry.path().extension() != ".cmk") continue;
        const auto digits = name.substr(1, 5);
        if (digits.find_first_not_of("0123456789") != std::string::npos) continue;
        out.push_back(read_mask(entry.path(), std::stoul(digits)));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    return out;
}

// --- PGM (P5) -------------------------------------------------------------

/// 8-bit binary PGM: changed pixels white, unchanged black.
inline void write_mask_pgm(const ChangeMask& mask, const std::filesystem::path& path) {
    std::ostringstream header;
    header << "P5\n" << mask.grid.width << ' ' << mask.grid.height << "\n255\n";
    const auto h = header.str();
    std::vector<char> buf(h.begin(), h.end());
    for (auto v : mask.flags) buf.push_back(static_cast<char>(v ? 255 : 0));
    detail::dump(path, buf);
}

// --- CSV ------------------------------------------------------------------

/// RFC-4180 field quoting: quote when the field holds a comma, quote, or line break.
inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

/// Shortest round-trippable decimal for a double; "NA" for NaN.
inline std::string csv_number(double v) {
    if (std::isnan(v)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // Trim to the shortest representation that parses back identically.
    for (int prec = 1; prec < 17; ++prec) {
        char shorter[32];
        std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
        if (std::strtod(shorter, nullptr) == v) return shorter;
    }
    return buf;
}

class CsvWriter {
public:
    CsvWriter(std::ostream& out, const std::vector<std::string>& header) : out_(out), columns_(header.size()) {
        row(header);
    }

    void row(const std::vector<std::string>& fields) {
        if (fields.size() != columns_) throw DimensionError("CSV row width does not match header");
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << csv_field(fields[i]);
        }
        out_ << "\r\n";
    }

private:
    std::ostream& out_;
    std::size_t columns_;
};

}  // namespace graphcpd::io
