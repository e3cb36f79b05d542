#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace graphcpd {

// Error hierarchy. Everything thrown by the library derives from Error so
// callers (the CLI in particular) can separate user errors from bugs.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
/// Malformed or truncated file contents.
struct FormatError : Error {
    using Error::Error;
};
/// Invalid algorithm parameter (rates, step sizes, levels...).
struct ParameterError : Error {
    using Error::Error;
};
/// Operands whose shapes do not agree.
struct DimensionError : Error {
    using Error::Error;
};
/// Argument outside the mathematical domain of a function.
struct DomainError : Error {
    using Error::Error;
};
/// File system failure.
struct IoError : Error {
    using Error::Error;
};

struct GridSize {
    std::size_t height = 0;
    std::size_t width = 0;

    [[nodiscard]] constexpr std::size_t pixels() const noexcept { return height * width; }
    friend constexpr bool operator==(GridSize, GridSize) = default;
};

/// One multiband image: `bands` rows of `pixels` values, band-major, pixels
/// in row-major order. This is the L x N matrix view used by the detector.
class Frame {
public:
    Frame() = default;

    Frame(GridSize grid, std::size_t bands)
        : grid_(grid), bands_(bands), values_(bands * grid.pixels(), 0.0f) {
        check_shape();
    }

    Frame(GridSize grid, std::size_t bands, std::vector<float> values)
        : grid_(grid), bands_(bands), values_(std::move(values)) {
        check_shape();
        if (values_.size() != bands_ * grid_.pixels())
            throw DimensionError("frame payload has " + std::to_string(values_.size()) +
                                 " values, expected " + std::to_string(bands_ * grid_.pixels()));
        for (float v : values_)
            if (!std::isfinite(v)) throw DomainError("frame contains a non-finite value");
    }

    [[nodiscard]] GridSize grid() const noexcept { return grid_; }
    [[nodiscard]] std::size_t bands() const noexcept { return bands_; }
    [[nodiscard]] std::size_t pixels() const noexcept { return grid_.pixels(); }

    [[nodiscard]] float at(std::size_t band, std::size_t pixel) const {
        return values_[band * pixels() + pixel];
    }
    float& at(std::size_t band, std::size_t pixel) { return values_[band * pixels() + pixel]; }

    [[nodiscard]] std::span<const float> band(std::size_t b) const {
        return std::span<const float>(values_).subspan(b * pixels(), pixels());
    }
    [[nodiscard]] std::span<const float> values() const noexcept { return values_; }
    [[nodiscard]] std::span<float> values() noexcept { return values_; }

    [[nodiscard]] bool all_finite() const {
        for (float v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const Frame&, const Frame&) = default;

private:
    void check_shape() const {
        if (grid_.height == 0 || grid_.width == 0) throw DimensionError("frame has a zero spatial dimension");
        if (bands_ == 0) throw DimensionError("frame has zero bands");
    }

    GridSize grid_{};
    std::size_t bands_ = 0;
    std::vector<float> values_;
};

/// T frames sharing one (H, W, L) shape.
class ImageSequence {
public:
    ImageSequence() = default;
    explicit ImageSequence(std::vector<Frame> frames) : frames_(std::move(frames)) {
        for (const auto& f : frames_)
            if (f.grid() != frames_.front().grid() || f.bands() != frames_.front().bands())
                throw DimensionError("sequence frames differ in shape");
    }

    void push_back(Frame f) {
        if (!frames_.empty() && (f.grid() != grid() || f.bands() != bands()))
            throw DimensionError("appended frame differs in shape from the sequence");
        frames_.push_back(std::move(f));
    }

    [[nodiscard]] std::size_t size() const noexcept { return frames_.size(); }
    [[nodiscard]] bool empty() const noexcept { return frames_.empty(); }
    [[nodiscard]] GridSize grid() const { return frames_.at(0).grid(); }
    [[nodiscard]] std::size_t bands() const { return frames_.at(0).bands(); }

    /// Zero-based access. Frame index t (1-based, as in the detector) is frames()[t - 1].
    [[nodiscard]] const Frame& operator[](std::size_t i) const { return frames_[i]; }
    [[nodiscard]] const std::vector<Frame>& frames() const noexcept { return frames_; }

    friend bool operator==(const ImageSequence&, const ImageSequence&) = default;

private:
    std::vector<Frame> frames_;
};

/// Binary per-pixel decision (or ground truth) for frame `t` (1-based).
struct ChangeMask {
    std::size_t t = 0;
    GridSize grid{};
    std::vector<std::uint8_t> flags;

    ChangeMask() = default;
    ChangeMask(std::size_t frame, GridSize g) : t(frame), grid(g), flags(g.pixels(), 0) {}
    ChangeMask(std::size_t frame, GridSize g, std::vector<std::uint8_t> f) : t(frame), grid(g), flags(std::move(f)) {
        if (flags.size() != grid.pixels()) throw DimensionError("mask size does not match its grid");
        for (auto v : flags)
            if (v > 1) throw DomainError("mask value " + std::to_string(v) + " outside {0,1}");
    }

    [[nodiscard]] std::size_t count() const {
        std::size_t c = 0;
        for (auto v : flags) c += v;
        return c;
    }
    [[nodiscard]] bool any() const { return count() > 0; }

    friend bool operator==(const ChangeMask&, const ChangeMask&) = default;
};

/// Superpixel segment id per pixel. Ids are contiguous 0..K-1.
class Labeling {
public:
    Labeling() = default;
    Labeling(GridSize grid, std::vector<std::uint32_t> labels) : grid_(grid), labels_(std::move(labels)) {
        if (labels_.size() != grid_.pixels())
            throw DimensionError("labeling has " + std::to_string(labels_.size()) + " entries for a " +
                                 std::to_string(grid_.height) + "x" + std::to_string(grid_.width) + " grid");
        std::uint32_t max_label = 0;
        for (auto l : labels_) max_label = std::max(max_label, l);
        std::vector<std::size_t> sizes(labels_.empty() ? 0 : max_label + 1, 0);
        for (auto l : labels_) ++sizes[l];
        for (std::size_t k = 0; k < sizes.size(); ++k)
            if (sizes[k] == 0) throw FormatError("labels are not contiguous: id " + std::to_string(k) + " is missing");
        sizes_ = std::move(sizes);
    }

    [[nodiscard]] GridSize grid() const noexcept { return grid_; }
    [[nodiscard]] std::size_t pixels() const noexcept { return labels_.size(); }
    [[nodiscard]] std::size_t segments() const noexcept { return sizes_.size(); }
    [[nodiscard]] std::uint32_t operator[](std::size_t n) const { return labels_[n]; }
    [[nodiscard]] std::span<const std::uint32_t> labels() const noexcept { return labels_; }
    [[nodiscard]] std::size_t segment_size(std::size_t k) const { return sizes_[k]; }

    /// Pixel indices of every segment, each list ascending.
    [[nodiscard]] std::vector<std::vector<std::size_t>> members() const {
        std::vector<std::vector<std::size_t>> out(segments());
        for (std::size_t k = 0; k < out.size(); ++k) out[k].reserve(sizes_[k]);
        for (std::size_t n = 0; n < labels_.size(); ++n) out[labels_[n]].push_back(n);
        return out;
    }

    friend bool operator==(const Labeling& a, const Labeling& b) {
        return a.grid_ == b.grid_ && a.labels_ == b.labels_;
    }

private:
    GridSize grid_{};
    std::vector<std::uint32_t> labels_;
    std::vector<std::size_t> sizes_;
};

}  // namespace graphcpd
