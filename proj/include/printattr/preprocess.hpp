#pragma once

// Page -> letter crops -> (native, noise residual) two-channel patches.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "printattr/error.hpp"
#include "printattr/image.hpp"

namespace printattr {

struct BBox {
    int row = 0;
    int col = 0;
    int height = 0;
    int width = 0;

    int bottom() const { return row + height; }  // exclusive
    int right() const { return col + width; }    // exclusive
    friend bool operator==(const BBox&, const BBox&) = default;
};

struct GlyphImage {
    GrayImage pixels;
    BBox bbox;
    std::optional<char> letter_hint;
    std::string source_id;
};

struct ResidualParams {
    double alpha = 0.6;
    double beta = 1.2;

    void validate() const {
        if (!(alpha > 0.0 && alpha < beta))
            throw ConfigError("residual params must satisfy 0 < alpha < beta");
    }
};

enum class Region : std::uint8_t { Flat = 0, Edge = 1, Background = 2 };

struct RegionMask {
    Plane<Region> labels;
    double mu = 0.0;             // mean intensity of the glyph
    double max_intensity = 0.0;  // max(I)

    std::array<std::size_t, 3> counts() const {
        std::array<std::size_t, 3> c{};
        for (auto l : labels.data()) ++c[static_cast<int>(l)];
        return c;
    }
};

// ---------------------------------------------------------------------------
// Binarization and glyph extraction
// ---------------------------------------------------------------------------

// Otsu threshold over an 8-bit histogram. Pixels <= threshold are the dark
// class. Returns nullopt when one class would be empty (uniform image).
struct OtsuResult {
    int threshold = 0;
    double dark_mean = 0.0;
    double light_mean = 0.0;
};

inline std::optional<OtsuResult> otsu_threshold(const GrayImage& img) {
    std::array<double, 256> hist{};
    for (auto v : img.data()) hist[v] += 1.0;
    const double total = static_cast<double>(img.size());
    double sum_all = 0.0;
    for (int i = 0; i < 256; ++i) sum_all += i * hist[i];

    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    std::optional<OtsuResult> result;
    for (int t = 0; t < 255; ++t) {
        w0 += hist[t];
        sum0 += t * hist[t];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = sum0 / w0;
        const double m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            result = OtsuResult{t, m0, m1};
        }
    }
    return result;
}

struct ExtractOptions {
    std::optional<int> threshold;  // nullopt -> Otsu
    int min_area = 32;             // ink pixels per component
    int max_area = 100000;
    // Otsu split whose class means are closer than this is treated as a blank page.
    double min_contrast = 32.0;
    // Components cut by the image frame are partial letters.
    bool drop_border_touching = true;
    // Single-letter mode: keep only glyphs the classifier assigns to `letter`.
    std::optional<char> letter;
    std::function<std::optional<char>(const GlyphImage&)> classifier;
};

namespace detail {

struct Component {
    BBox box;
    int area = 0;
    bool touches_border = false;
};

// 8-connected labeling of `ink` by iterative flood fill, in raster order of
// each component's first pixel.
inline std::vector<Component> label_components(const Plane<std::uint8_t>& ink) {
    const int rows = ink.rows(), cols = ink.cols();
    Plane<std::uint8_t> seen(rows, cols, 0);
    std::vector<Component> out;
    std::vector<std::pair<int, int>> stack;
    for (int r0 = 0; r0 < rows; ++r0) {
        for (int c0 = 0; c0 < cols; ++c0) {
            if (!ink(r0, c0) || seen(r0, c0)) continue;
            int top = r0, bottom = r0, left = c0, right = c0, area = 0;
            stack.clear();
            stack.emplace_back(r0, c0);
            seen(r0, c0) = 1;
            while (!stack.empty()) {
                auto [r, c] = stack.back();
                stack.pop_back();
                ++area;
                top = std::min(top, r);
                bottom = std::max(bottom, r);
                left = std::min(left, c);
                right = std::max(right, c);
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = r + dr, cc = c + dc;
                        if (rr < 0 || cc < 0 || rr >= rows || cc >= cols) continue;
                        if (!ink(rr, cc) || seen(rr, cc)) continue;
                        seen(rr, cc) = 1;
                        stack.emplace_back(rr, cc);
                    }
                }
            }
            Component comp;
            comp.box = {top, left, bottom - top + 1, right - left + 1};
            comp.area = area;
            comp.touches_border = top == 0 || left == 0 || bottom == rows - 1 || right == cols - 1;
            out.push_back(comp);
        }
    }
    return out;
}

// Top-to-bottom by row band, then left-to-right. A component joins the
// current band when its vertical center lies inside the band's row span.
inline void sort_reading_order(std::vector<Component>& comps) {
    std::sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
        return a.box.row != b.box.row ? a.box.row < b.box.row : a.box.col < b.box.col;
    });
    std::vector<Component> ordered;
    ordered.reserve(comps.size());
    std::size_t i = 0;
    while (i < comps.size()) {
        int band_bottom = comps[i].box.bottom();
        std::size_t j = i + 1;
        while (j < comps.size()) {
            const int center2 = 2 * comps[j].box.row + comps[j].box.height;  // twice the center
            if (center2 >= 2 * band_bottom) break;
            band_bottom = std::max(band_bottom, comps[j].box.bottom());
            ++j;
        }
        std::sort(comps.begin() + static_cast<std::ptrdiff_t>(i), comps.begin() + static_cast<std::ptrdiff_t>(j),
                  [](const Component& a, const Component& b) {
                      return a.box.col != b.box.col ? a.box.col < b.box.col : a.box.row < b.box.row;
                  });
        ordered.insert(ordered.end(), comps.begin() + static_cast<std::ptrdiff_t>(i),
                       comps.begin() + static_cast<std::ptrdiff_t>(j));
        i = j;
    }
    comps = std::move(ordered);
}

}  // namespace detail

inline GrayImage crop(const GrayImage& img, const BBox& box) {
    GrayImage out(box.height, box.width);
    for (int r = 0; r < box.height; ++r)
        for (int c = 0; c < box.width; ++c) out(r, c) = img(box.row + r, box.col + c);
    return out;
}

// Tight crops of dark connected components in reading order.
//
// A perfectly uniform page is blank paper when bright (empty result) and a
// degenerate frame when dark (DegenerateImageError).
inline std::vector<GlyphImage> extract_glyphs(const DocumentImage& doc, const ExtractOptions& opts = {}) {
    const GrayImage& img = doc.pixels;
    if (img.empty()) throw ShapeError("extract_glyphs: empty document");

    int threshold = 0;
    if (opts.threshold) {
        threshold = *opts.threshold;
    } else {
        const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
        if (*lo == *hi) {
            if (*lo >= 128) return {};
            throw DegenerateImageError("extract_glyphs: uniform dark image, no threshold exists");
        }
        const auto otsu = otsu_threshold(img);
        if (!otsu) throw DegenerateImageError("extract_glyphs: Otsu threshold failed");
        if (otsu->light_mean - otsu->dark_mean < opts.min_contrast) return {};
        threshold = otsu->threshold;
    }

    Plane<std::uint8_t> ink(img.rows(), img.cols(), 0);
    for (std::size_t i = 0; i < img.size(); ++i) ink.data()[i] = img.data()[i] <= threshold ? 1 : 0;

    auto comps = detail::label_components(ink);
    std::erase_if(comps, [&](const detail::Component& c) {
        return c.area < opts.min_area || c.area > opts.max_area || c.box.height < 3 || c.box.width < 3 ||
               (opts.drop_border_touching && c.touches_border);
    });
    detail::sort_reading_order(comps);

    std::vector<GlyphImage> glyphs;
    glyphs.reserve(comps.size());
    for (const auto& c : comps) {
        GlyphImage g{crop(img, c.box), c.box, std::nullopt, doc.source_id};
        if (opts.letter) {
            if (!opts.classifier) throw ConfigError("extract_glyphs: letter filter set without a classifier");
            const auto guess = opts.classifier(g);
            if (guess != opts.letter) continue;
            g.letter_hint = guess;
        }
        glyphs.push_back(std::move(g));
    }
    return glyphs;
}

// ---------------------------------------------------------------------------
// Noise residual estimation
// ---------------------------------------------------------------------------

// Flat: I <= alpha*mu; edge: alpha*mu < I <= beta*mu; background: I > beta*mu.
inline RegionMask segment_regions(const GlyphImage& glyph, const ResidualParams& params) {
    params.validate();
    const GrayImage& img = glyph.pixels;
    if (img.empty()) throw ShapeError("segment_regions: empty glyph");

    std::uint64_t sum = 0;
    std::uint8_t vmax = 0;
    for (auto v : img.data()) {
        sum += v;
        vmax = std::max(vmax, v);
    }
    RegionMask mask;
    mask.mu = static_cast<double>(sum) / static_cast<double>(img.size());
    mask.max_intensity = vmax;
    const double flat_hi = params.alpha * mask.mu;
    const double edge_hi = params.beta * mask.mu;

    mask.labels = Plane<Region>(img.rows(), img.cols(), Region::Flat);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = img.data()[i];
        mask.labels.data()[i] = v <= flat_hi ? Region::Flat : (v <= edge_hi ? Region::Edge : Region::Background);
    }
    return mask;
}

// Lower-middle median of the 8-bit values in one histogram.
inline int lower_median(const std::array<std::size_t, 256>& hist, std::size_t count) {
    assert(count > 0);
    const std::size_t rank = (count - 1) / 2;  // 0-based lower-middle
    std::size_t seen = 0;
    for (int v = 0; v < 256; ++v) {
        seen += hist[v];
        if (seen > rank) return v;
    }
    return 255;
}

// Three-level ideal image: each pixel takes the median of its region.
inline RealPlane ideal_image(const GlyphImage& glyph, const RegionMask& mask) {
    const GrayImage& img = glyph.pixels;
    if (!img.same_shape(mask.labels)) throw ShapeError("ideal_image: mask does not match glyph");

    std::array<std::array<std::size_t, 256>, 3> hist{};
    std::array<std::size_t, 3> count{};
    for (std::size_t i = 0; i < img.size(); ++i) {
        const int r = static_cast<int>(mask.labels.data()[i]);
        ++hist[r][img.data()[i]];
        ++count[r];
    }
    std::array<double, 3> level{};
    for (int r = 0; r < 3; ++r)
        if (count[r] > 0) level[r] = lower_median(hist[r], count[r]);

    RealPlane out(img.rows(), img.cols());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const int r = static_cast<int>(mask.labels.data()[i]);
        assert(count[r] > 0);
        out.data()[i] = level[r];
    }
    return out;
}

// N = D - I, in [-255, 255].
inline RealPlane noise_residual(const GlyphImage& glyph, const RealPlane& ideal) {
    const GrayImage& img = glyph.pixels;
    if (!img.same_shape(ideal)) throw ShapeError("noise_residual: ideal image does not match glyph");
    RealPlane out(img.rows(), img.cols());
    for (std::size_t i = 0; i < img.size(); ++i) out.data()[i] = ideal.data()[i] - img.data()[i];
    return out;
}

// ---------------------------------------------------------------------------
// Patch normalization
// ---------------------------------------------------------------------------

// Offset of the source inside a P-wide window along one axis: positive means
// the source is padded by that many leading zeros, negative means that many
// leading source elements are cropped. Odd excess/deficit goes bottom/right.
inline int patch_offset(int extent, int patch) { return (patch - extent) >= 0 ? (patch - extent) / 2 : -((extent - patch) / 2); }

template <class T>
Plane<T> normalize_patch(const Plane<T>& img, int patch) {
    if (patch < 1) throw ShapeError("normalize_patch: patch size must be >= 1");
    if (img.empty()) throw ShapeError("normalize_patch: empty image");
    const int dr = patch_offset(img.rows(), patch);
    const int dc = patch_offset(img.cols(), patch);
    Plane<T> out(patch, patch, T{});
    for (int r = 0; r < patch; ++r) {
        const int sr = r - dr;
        if (sr < 0 || sr >= img.rows()) continue;
        for (int c = 0; c < patch; ++c) {
            const int sc = c - dc;
            if (sc < 0 || sc >= img.cols()) continue;
            out(r, c) = img(sr, sc);
        }
    }
    return out;
}

struct PatchMeta {
    std::string source_id;
    BBox bbox;
};

// P x P x 2, interleaved (row, col, channel). Channel 0 native/255, channel 1 residual/255.
struct TwoChannelPatch {
    int size = 0;
    std::vector<float> data;
    int label = 0;
    PatchMeta meta;

    float at(int r, int c, int ch) const { return data[(static_cast<std::size_t>(r) * size + c) * 2 + ch]; }
};

inline TwoChannelPatch assemble_patch(const RealPlane& native, const RealPlane& residual, int label, PatchMeta meta) {
    if (!native.same_shape(residual) || native.rows() != native.cols())
        throw ShapeError("assemble_patch: native and residual must be equal P x P planes");
    TwoChannelPatch p;
    p.size = native.rows();
    p.data.resize(native.size() * 2);
    for (std::size_t i = 0; i < native.size(); ++i) {
        p.data[2 * i] = static_cast<float>(native.data()[i] / 255.0);
        p.data[2 * i + 1] = static_cast<float>(residual.data()[i] / 255.0);
    }
    p.label = label;
    p.meta = std::move(meta);
    return p;
}

// Full chain for one glyph.
inline TwoChannelPatch make_patch(const GlyphImage& glyph, const ResidualParams& params, int patch, int label) {
    const auto mask = segment_regions(glyph, params);
    const auto ideal = ideal_image(glyph, mask);
    const auto residual = noise_residual(glyph, ideal);
    RealPlane native(glyph.pixels.rows(), glyph.pixels.cols());
    for (std::size_t i = 0; i < native.size(); ++i) native.data()[i] = glyph.pixels.data()[i];
    return assemble_patch(normalize_patch(native, patch), normalize_patch(residual, patch), label,
                          PatchMeta{glyph.source_id, glyph.bbox});
}

}  // namespace printattr
