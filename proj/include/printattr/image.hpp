#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "printattr/error.hpp"

namespace printattr {

// Row-major 2-D array. Used both for 8-bit images and real-valued planes.
template <class T>
class Plane {
public:
    Plane() = default;
    Plane(int rows, int cols, T fill = T{}) : rows_(rows), cols_(cols) {
        if (rows < 0 || cols < 0) throw ShapeError("negative plane extent");
        data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
    }
    Plane(int rows, int cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
            throw ShapeError("plane data length does not match extents");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool same_shape(const auto& other) const { return rows_ == other.rows() && cols_ == other.cols(); }

    friend bool operator==(const Plane&, const Plane&) = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

using GrayImage = Plane<std::uint8_t>;
using RealPlane = Plane<double>;

struct RgbImage {
    GrayImage r, g, b;
};

// A photographed page in grayscale. source_id is "<printer>/<page>" for
// dataset images, free-form otherwise.
struct DocumentImage {
    GrayImage pixels;
    std::string source_id;

    int width() const { return pixels.cols(); }
    int height() const { return pixels.rows(); }
};

inline std::uint8_t clamp_to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Luminance round(0.299 R + 0.587 G + 0.114 B) clamped to [0, 255].
inline DocumentImage to_grayscale(const RgbImage& rgb, std::string source_id = {}) {
    if (!rgb.r.same_shape(rgb.g) || !rgb.r.same_shape(rgb.b))
        throw ShapeError("to_grayscale: channel extents differ");
    GrayImage out(rgb.r.rows(), rgb.r.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double y = 0.299 * rgb.r.data()[i] + 0.587 * rgb.g.data()[i] + 0.114 * rgb.b.data()[i];
        out.data()[i] = clamp_to_byte(y);
    }
    return {std::move(out), std::move(source_id)};
}

}  // namespace printattr
