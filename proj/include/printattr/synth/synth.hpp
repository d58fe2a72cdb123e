#pragma once

// Print-then-photograph simulator. A page is rendered from the embedded
// bitmap font, passed through a printer model (ink level, banding, toner
// spread, dot noise) and then a camera model (tilt, illumination, blur,
// sensor noise). Every random draw comes from a seed carried by a profile.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <exception>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "printattr/error.hpp"
#include "printattr/image.hpp"
#include "printattr/image_io.hpp"
#include "printattr/rng.hpp"
#include "printattr/synth/font.hpp"

namespace printattr::synth {

struct PageSpec {
    std::string text;
    int glyph_height = 32;
    int margin = 4;
    int line_spacing = 44;
    int page_width = 0;  // 0 sizes the page to the longest line, no wrapping

    void validate() const {
        if (text.empty()) throw ConfigError("page text is empty");
        if (glyph_height < kFontRows)
            throw ConfigError("glyph_height " + std::to_string(glyph_height) + " is below the font height " +
                              std::to_string(kFontRows));
        if (margin < 0) throw ConfigError("margin must be non-negative");
        if (line_spacing < 1) throw ConfigError("line_spacing must be positive");
        if (page_width < 0) throw ConfigError("page_width must be non-negative");
    }

    int glyph_width() const { return (kFontCols * glyph_height + kFontRows / 2) / kFontRows; }
    int advance() const { return (kFontAdvance * glyph_height + kFontRows / 2) / kFontRows; }
};

struct PrinterProfile {
    double banding_amplitude = 0.0;
    double banding_period = 10.0;
    int toner_spread_radius = 0;
    double dot_noise_density = 0.0;
    double dot_noise_strength = 0.0;
    double ink_level = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(banding_period >= 2.0)) throw ConfigError("banding_period must be at least 2");
        if (banding_amplitude < 0 || banding_amplitude > 255) throw ConfigError("banding_amplitude out of [0,255]");
        if (toner_spread_radius < 0) throw ConfigError("toner_spread_radius must be non-negative");
        if (dot_noise_density < 0 || dot_noise_density > 1) throw ConfigError("dot_noise_density out of [0,1]");
        if (dot_noise_strength < 0 || dot_noise_strength > 255) throw ConfigError("dot_noise_strength out of [0,255]");
        if (ink_level < 0 || ink_level > 255) throw ConfigError("ink_level out of [0,255]");
    }
};

struct CameraProfile {
    double tilt_degrees = 0.0;
    double tilt_jitter = 0.0;  // free-hand mode: uniform extra tilt in [-jitter, +jitter]
    double illumination_scale = 1.0;
    double blur_sigma = 0.0;
    double sensor_noise_sigma = 0.0;
    double focal_scale = 0.6;  // focal length as a multiple of the longer image side
    std::uint64_t seed = 0;

    void validate() const {
        if (!(illumination_scale > 0)) throw ConfigError("illumination_scale must be positive");
        if (!(blur_sigma >= 0)) throw ConfigError("blur_sigma must be non-negative");
        if (!(sensor_noise_sigma >= 0)) throw ConfigError("sensor_noise_sigma must be non-negative");
        if (!(focal_scale > 0)) throw ConfigError("focal_scale must be positive");
        if (!(tilt_jitter >= 0)) throw ConfigError("tilt_jitter must be non-negative");
    }
};

// Splits text into layout lines: '\n' breaks, and lines longer than
// `max_chars` wrap by character (max_chars <= 0 disables wrapping).
inline std::vector<std::string> layout_lines(const std::string& text, int max_chars) {
    std::vector<std::string> lines(1);
    for (char ch : text) {
        if (ch == '\n') {
            lines.emplace_back();
            continue;
        }
        if (max_chars > 0 && static_cast<int>(lines.back().size()) >= max_chars) lines.emplace_back();
        lines.back().push_back(ch);
    }
    return lines;
}

inline DocumentImage render_page(const PageSpec& spec) {
    spec.validate();
    for (char ch : spec.text)
        if (ch != '\n' && ch != ' ' && !find_glyph(ch))
            throw ConfigError(std::string("character '") + ch + "' is not in the embedded font");

    const int gh = spec.glyph_height, gw = spec.glyph_width(), adv = spec.advance();
    int max_chars = 0;
    if (spec.page_width > 0) {
        max_chars = (spec.page_width - 2 * spec.margin + (adv - gw)) / adv;
        if (max_chars < 1) throw ConfigError("page_width leaves no room for a glyph");
    }
    const auto lines = layout_lines(spec.text, max_chars);
    int width = spec.page_width;
    if (width == 0) {
        std::size_t longest = 1;
        for (const auto& l : lines) longest = std::max(longest, l.size());
        width = 2 * spec.margin + static_cast<int>(longest - 1) * adv + gw;
    }
    const int height = 2 * spec.margin + static_cast<int>(lines.size() - 1) * spec.line_spacing + gh;

    GrayImage px(height, width, 255);
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const int top = spec.margin + static_cast<int>(li) * spec.line_spacing;
        for (std::size_t ci = 0; ci < lines[li].size(); ++ci) {
            const auto g = find_glyph(lines[li][ci]);
            if (!g) continue;
            const int left = spec.margin + static_cast<int>(ci) * adv;
            for (int r = 0; r < gh; ++r) {
                const int sr = r * kFontRows / gh;
                for (int c = 0; c < gw; ++c) {
                    const int sc = std::min(c * kFontRows / gh, kFontCols - 1);
                    if (g->rows[sr][sc] == '#') px(top + r, left + c) = 0;
                }
            }
        }
    }
    return {std::move(px), {}};
}

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma, int radius) {
    std::vector<double> k(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k) v /= sum;
    return k;
}

// Separable Gaussian blur with clamped borders.
inline RealPlane gaussian_blur(const RealPlane& in, double sigma, int radius) {
    if (sigma <= 0 || radius <= 0) return in;
    const auto k = gaussian_kernel(sigma, radius);
    const int rows = in.rows(), cols = in.cols();
    RealPlane tmp(rows, cols), out(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double s = 0;
            for (int i = -radius; i <= radius; ++i) s += k[i + radius] * in(r, std::clamp(c + i, 0, cols - 1));
            tmp(r, c) = s;
        }
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double s = 0;
            for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp(std::clamp(r + i, 0, rows - 1), c);
            out(r, c) = s;
        }
    return out;
}

inline RealPlane to_real(const GrayImage& g) {
    return RealPlane(g.rows(), g.cols(), std::vector<double>(g.data().begin(), g.data().end()));
}

inline GrayImage to_bytes(const RealPlane& p) {
    GrayImage g(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.size(); ++i) g.data()[i] = clamp_to_byte(p.data()[i]);
    return g;
}

}  // namespace detail

inline DocumentImage apply_printer(const DocumentImage& img, const PrinterProfile& profile) {
    profile.validate();
    const GrayImage& src = img.pixels;
    const int rows = src.rows(), cols = src.cols();
    RealPlane v = detail::to_real(src);
    std::vector<char> ink(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) ink[i] = src.data()[i] < 128;

    for (int r = 0; r < rows; ++r) {
        const double band = profile.banding_amplitude * std::sin(2.0 * std::numbers::pi * r / profile.banding_period);
        for (int c = 0; c < cols; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * cols + c;
            if (ink[i]) v.data()[i] += profile.ink_level + band;
        }
    }

    if (const int rad = profile.toner_spread_radius; rad > 0) {
        // The boundary band holds pixels within `rad` (Chebyshev) of a pixel of
        // the other class; only those take the blurred value.
        const RealPlane blurred = detail::gaussian_blur(v, std::max(0.5, rad / 2.0), rad);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const char self = ink[static_cast<std::size_t>(r) * cols + c];
                bool boundary = false;
                for (int dr = -rad; dr <= rad && !boundary; ++dr) {
                    const int rr = r + dr;
                    if (rr < 0 || rr >= rows) continue;
                    for (int dc = -rad; dc <= rad; ++dc) {
                        const int cc = c + dc;
                        if (cc >= 0 && cc < cols && ink[static_cast<std::size_t>(rr) * cols + cc] != self) {
                            boundary = true;
                            break;
                        }
                    }
                }
                if (boundary) v(r, c) = blurred(r, c);
            }
    }

    if (profile.dot_noise_density > 0 && profile.dot_noise_strength > 0) {
        Rng rng(derive_seed(profile.seed, {0x6e6f697365ULL}));
        for (auto& p : v.data())
            if (rng.uniform() < profile.dot_noise_density)
                p += (rng.uniform() < 0.5 ? -1.0 : 1.0) * profile.dot_noise_strength;
    }
    return {detail::to_bytes(v), img.source_id};
}

namespace detail {

inline double bilinear(const RealPlane& p, double y, double x, double fill) {
    const int rows = p.rows(), cols = p.cols();
    if (y < -0.5 || x < -0.5 || y > rows - 0.5 || x > cols - 0.5) return fill;
    y = std::clamp(y, 0.0, rows - 1.0);
    x = std::clamp(x, 0.0, cols - 1.0);
    const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
    const int y1 = std::min(y0 + 1, rows - 1), x1 = std::min(x0 + 1, cols - 1);
    const double fy = y - y0, fx = x - x0;
    return (1 - fy) * ((1 - fx) * p(y0, x0) + fx * p(y0, x1)) + fy * ((1 - fx) * p(y1, x0) + fx * p(y1, x1));
}

// Pinhole view of the page plane rotated by `theta` about its horizontal
// centre line. Positive tilt pushes the top edge away from the camera, so
// the top shrinks and the bottom grows. Output pixel (u, v) relative to the
// image centre is traced back to page coordinates (xc, yc).
inline RealPlane tilt_page(const RealPlane& in, double degrees, double focal_scale) {
    const double theta = degrees * std::numbers::pi / 180.0;
    const double s = std::sin(theta), co = std::cos(theta);
    const int rows = in.rows(), cols = in.cols();
    const double f = focal_scale * std::max(rows, cols);
    const double cy = (rows - 1) / 2.0, cx = (cols - 1) / 2.0;
    RealPlane out(rows, cols);
    for (int r = 0; r < rows; ++r) {
        const double v = r - cy;
        const double den = f * co + v * s;
        for (int c = 0; c < cols; ++c) {
            double val = 255.0;
            if (den > 1e-9) {
                const double yc = v * f / den;
                const double xc = (c - cx) * (f - yc * s) / f;
                val = bilinear(in, yc + cy, xc + cx, 255.0);
            }
            out(r, c) = val;
        }
    }
    return out;
}

}  // namespace detail

inline DocumentImage apply_camera(const DocumentImage& img, const CameraProfile& profile) {
    profile.validate();
    Rng rng(derive_seed(profile.seed, {0x63616dULL}));
    double tilt = profile.tilt_degrees;
    if (profile.tilt_jitter > 0) tilt += rng.uniform(-profile.tilt_jitter, profile.tilt_jitter);
    if (std::abs(tilt) >= 90.0)
        throw DegenerateImageError("degenerate projection: tilt of " + std::to_string(tilt) + " degrees");

    RealPlane v = detail::to_real(img.pixels);
    if (tilt != 0.0) v = detail::tilt_page(v, tilt, profile.focal_scale);
    if (profile.illumination_scale != 1.0)
        for (auto& p : v.data()) p *= profile.illumination_scale;
    if (profile.blur_sigma > 0)
        v = detail::gaussian_blur(v, profile.blur_sigma, std::max(1, static_cast<int>(std::ceil(3 * profile.blur_sigma))));
    if (profile.sensor_noise_sigma > 0)
        for (auto& p : v.data()) p += profile.sensor_noise_sigma * rng.normal();
    return {detail::to_bytes(v), img.source_id};
}

// Random lowercase words, wrapped to `chars_per_line`.
inline std::string random_text(std::uint64_t seed, int lines, int chars_per_line) {
    Rng rng(seed);
    std::string out;
    for (int l = 0; l < lines; ++l) {
        std::string line;
        while (static_cast<int>(line.size()) < chars_per_line) {
            if (!line.empty()) line.push_back(' ');
            const std::size_t len = 2 + rng.below(6);
            for (std::size_t i = 0; i < len; ++i) line.push_back(kLowercase[rng.below(kLowercase.size())]);
        }
        line.resize(static_cast<std::size_t>(chars_per_line));
        if (line.back() == ' ') line.back() = kLowercase[rng.below(kLowercase.size())];
        if (l) out.push_back('\n');
        out += line;
    }
    return out;
}

// Printer k of the default spread. Each parameter cycles with a different
// period so classes differ in several artifacts at once while their
// noise statistics overlap.
inline PrinterProfile default_printer(int k, std::uint64_t master_seed) {
    static constexpr double kPeriods[] = {6.0, 9.0, 13.0, 17.0, 7.5, 11.0, 15.0, 20.0};
    static constexpr double kAmplitudes[] = {12.0, 20.0, 16.0, 24.0};
    static constexpr double kInk[] = {30.0, 55.0, 42.0, 68.0, 36.0, 61.0};
    PrinterProfile p;
    p.banding_period = kPeriods[k % 8];
    p.banding_amplitude = kAmplitudes[k % 4];
    p.toner_spread_radius = 1 + k % 3;
    p.dot_noise_density = 0.002 + 0.002 * (k % 5);
    p.dot_noise_strength = 40.0;
    p.ink_level = kInk[k % 6];
    p.seed = derive_seed(master_seed, {0x7072696eULL, static_cast<std::uint64_t>(k)});
    return p;
}

inline CameraProfile default_camera() {
    CameraProfile c;
    c.blur_sigma = 0.6;
    c.sensor_noise_sigma = 3.0;
    return c;
}

struct CorpusSpec {
    int printers = 4;
    int pages = 10;
    int glyph_height = 32;
    int margin = 4;
    int line_spacing = 44;
    int lines_per_page = 4;
    int chars_per_line = 16;
    CameraProfile camera = default_camera();
    std::uint64_t seed = 7;
    int jobs = 1;
    bool force = false;
    std::vector<PrinterProfile> profiles;  // empty selects the default spread

    void validate() const {
        if (printers < 2) throw ConfigError("at least 2 printers are required");
        if (pages < 1) throw ConfigError("at least 1 page per printer is required");
        if (lines_per_page < 1 || chars_per_line < 1) throw ConfigError("page text dimensions must be positive");
        if (!profiles.empty() && static_cast<int>(profiles.size()) != printers)
            throw ConfigError("profile count does not match printer count");
        camera.validate();
    }
};

inline std::string printer_id(int k) {
    std::ostringstream os;
    os << "printer_" << std::setw(2) << std::setfill('0') << k;
    return os.str();
}

inline std::string page_name(int page) {
    std::ostringstream os;
    os << "page_" << std::setw(3) << std::setfill('0') << page << ".png";
    return os.str();
}

// Page text depends only on (seed, page): every printer prints the same
// documents, as in a physical collection.
inline PageSpec corpus_page_spec(const CorpusSpec& spec, int page) {
    PageSpec ps;
    ps.text = random_text(derive_seed(spec.seed, {0x74657874ULL, static_cast<std::uint64_t>(page)}),
                          spec.lines_per_page, spec.chars_per_line);
    ps.glyph_height = spec.glyph_height;
    ps.margin = spec.margin;
    ps.line_spacing = spec.line_spacing;
    return ps;
}

inline std::vector<PrinterProfile> corpus_profiles(const CorpusSpec& spec) {
    if (!spec.profiles.empty()) return spec.profiles;
    std::vector<PrinterProfile> out;
    for (int k = 0; k < spec.printers; ++k) out.push_back(default_printer(k, spec.seed));
    return out;
}

// Fully rendered page `page` of printer `k`.
inline DocumentImage synthesize_page(const CorpusSpec& spec, const PrinterProfile& printer, int k, int page) {
    PrinterProfile pp = printer;
    pp.seed = derive_seed(printer.seed, {static_cast<std::uint64_t>(page)});
    CameraProfile cam = spec.camera;
    cam.seed = derive_seed(spec.camera.seed ^ spec.seed,
                           {0x63616dULL, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(page)});
    DocumentImage img = apply_camera(apply_printer(render_page(corpus_page_spec(spec, page)), pp), cam);
    img.source_id = printer_id(k) + "/" + page_name(page);
    return img;
}

inline std::string manifest_text(const CorpusSpec& spec, const std::vector<PrinterProfile>& profiles) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "version=1\n";
    os << "seed=" << spec.seed << "\n";
    os << "printers=" << spec.printers << "\n";
    os << "pages=" << spec.pages << "\n";
    os << "page.glyph_height=" << spec.glyph_height << "\n";
    os << "page.margin=" << spec.margin << "\n";
    os << "page.line_spacing=" << spec.line_spacing << "\n";
    os << "page.lines=" << spec.lines_per_page << "\n";
    os << "page.chars_per_line=" << spec.chars_per_line << "\n";
    const auto& c = spec.camera;
    os << "camera.tilt_degrees=" << c.tilt_degrees << "\n";
    os << "camera.tilt_jitter=" << c.tilt_jitter << "\n";
    os << "camera.illumination_scale=" << c.illumination_scale << "\n";
    os << "camera.blur_sigma=" << c.blur_sigma << "\n";
    os << "camera.sensor_noise_sigma=" << c.sensor_noise_sigma << "\n";
    os << "camera.focal_scale=" << c.focal_scale << "\n";
    os << "camera.seed=" << c.seed << "\n";
    for (std::size_t k = 0; k < profiles.size(); ++k) {
        const auto& p = profiles[k];
        const std::string pre = "printer." + std::to_string(k) + ".";
        os << pre << "id=" << printer_id(static_cast<int>(k)) << "\n";
        os << pre << "banding_amplitude=" << p.banding_amplitude << "\n";
        os << pre << "banding_period=" << p.banding_period << "\n";
        os << pre << "toner_spread_radius=" << p.toner_spread_radius << "\n";
        os << pre << "dot_noise_density=" << p.dot_noise_density << "\n";
        os << pre << "dot_noise_strength=" << p.dot_noise_strength << "\n";
        os << pre << "ink_level=" << p.ink_level << "\n";
        os << pre << "seed=" << p.seed << "\n";
    }
    return os.str();
}

// Writes `<out>/<printer_id>/page_NNN.png` for every printer and page plus
// `<out>/manifest.txt`. Refuses a non-empty output directory unless forced.
inline void generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out) {
    namespace fs = std::filesystem;
    spec.validate();
    if (fs::exists(out)) {
        if (!fs::is_directory(out)) throw IoError("output path exists and is not a directory: " + out.string());
        if (!fs::is_empty(out)) {
            if (!spec.force) throw IoError("output directory is not empty (use force to overwrite): " + out.string());
            fs::remove_all(out);
        }
    }
    const auto profiles = corpus_profiles(spec);
    for (const auto& p : profiles) p.validate();
    for (int k = 0; k < spec.printers; ++k) fs::create_directories(out / printer_id(k));

    const int total = spec.printers * spec.pages;
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (int job; (job = next++) < total;) {
            const int k = job / spec.pages, page = job % spec.pages;
            try {
                const auto img = synthesize_page(spec, profiles[k], k, page);
                write_png(out / printer_id(k) / page_name(page), img.pixels);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int jobs = std::clamp(spec.jobs, 1, total);
    std::vector<std::thread> threads;
    for (int j = 1; j < jobs; ++j) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);

    std::ofstream mf(out / "manifest.txt", std::ios::binary);
    mf << manifest_text(spec, profiles);
    if (!mf) throw IoError("cannot write manifest in " + out.string());
}

// Row-mean intensity of ink pixels (NaN-free: rows without ink repeat the
// previous value) and its DFT magnitude spectrum, bins 1..n/2.
inline std::vector<double> banding_spectrum(const GrayImage& img, int ink_below = 128, std::size_t bins = 64) {
    std::vector<double> profile;
    double last = 0;
    for (int r = 0; r < img.rows(); ++r) {
        double sum = 0;
        int n = 0;
        for (int c = 0; c < img.cols(); ++c)
            if (img(r, c) < ink_below) sum += img(r, c), ++n;
        if (n) last = sum / n;
        profile.push_back(last);
    }
    double mean = 0;
    for (double p : profile) mean += p;
    mean /= std::max<std::size_t>(1, profile.size());
    const std::size_t n = profile.size();
    std::vector<double> spec(bins, 0.0);
    for (std::size_t b = 0; b < bins; ++b) {
        // Bin b is the frequency (b + 1) / (2 * bins) cycles per pixel.
        const double freq = (b + 1.0) / (2.0 * bins);
        double re = 0, im = 0;
        for (std::size_t r = 0; r < n; ++r) {
            const double a = 2 * std::numbers::pi * freq * static_cast<double>(r);
            re += (profile[r] - mean) * std::cos(a);
            im -= (profile[r] - mean) * std::sin(a);
        }
        spec[b] = std::hypot(re, im) / std::max<std::size_t>(1, n);
    }
    return spec;
}

}  // namespace printattr::synth
