#pragma once

// Nearest-template letter classifier used to emulate single-letter mode.
// Glyphs are resampled to a fixed grid, centred and scaled to unit norm;
// the label is the template with the highest correlation, penalised by the
// log aspect-ratio mismatch so that 'l' and 'o' cannot collapse onto the
// same resampled shape.

#include <cmath>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "printattr/error.hpp"
#include "printattr/preprocess.hpp"
#include "printattr/synth/synth.hpp"

namespace printattr {

class TemplateClassifier {
public:
    static constexpr int kGrid = 16;

    struct Template {
        char letter;
        std::vector<double> shape;
        double aspect;  // height / width
    };

    double min_score = 0.5;
    double aspect_weight = 0.5;

    // One template per lowercase letter, rendered from the embedded font.
    static TemplateClassifier from_font(int glyph_height = 32) {
        TemplateClassifier tc;
        ExtractOptions opts;
        opts.min_area = 1;
        for (char ch : synth::kLowercase) {
            synth::PageSpec spec;
            spec.text = std::string(1, ch);
            spec.glyph_height = glyph_height;
            auto glyphs = extract_glyphs(synth::render_page(spec), opts);
            // Dotted letters: the body is the largest component.
            const GlyphImage* body = nullptr;
            for (const auto& g : glyphs)
                if (!body || g.bbox.height * g.bbox.width > body->bbox.height * body->bbox.width) body = &g;
            if (body) tc.templates_.push_back(make_template(ch, *body));
        }
        return tc;
    }

    // Mean template per letter from labelled sample glyphs.
    static TemplateClassifier from_samples(const std::vector<std::pair<char, GlyphImage>>& samples) {
        std::map<char, std::pair<Template, int>> acc;
        for (const auto& [ch, g] : samples) {
            const auto t = make_template(ch, g);
            auto [it, fresh] = acc.try_emplace(ch, t, 1);
            if (fresh) continue;
            auto& [sum, n] = it->second;
            for (std::size_t i = 0; i < sum.shape.size(); ++i) sum.shape[i] += t.shape[i];
            sum.aspect += t.aspect;
            ++n;
        }
        if (acc.empty()) throw InsufficientDataError("no template samples");
        TemplateClassifier tc;
        for (auto& [ch, entry] : acc) {
            auto& [t, n] = entry;
            t.aspect /= n;
            standardize(t.shape);
            tc.templates_.push_back(std::move(t));
        }
        return tc;
    }

    const std::vector<Template>& templates() const { return templates_; }

    // Best letter and its score, or nullopt if no template clears min_score.
    std::optional<std::pair<char, double>> classify(const GlyphImage& glyph) const {
        const auto probe = make_template('?', glyph);
        std::optional<std::pair<char, double>> best;
        for (const auto& t : templates_) {
            double corr = 0;
            for (std::size_t i = 0; i < t.shape.size(); ++i) corr += t.shape[i] * probe.shape[i];
            const double score = corr - aspect_weight * std::abs(std::log(probe.aspect / t.aspect));
            if (!best || score > best->second) best = std::make_pair(t.letter, score);
        }
        if (!best || best->second < min_score) return std::nullopt;
        return best;
    }

    std::optional<char> operator()(const GlyphImage& glyph) const {
        if (auto r = classify(glyph)) return r->first;
        return std::nullopt;
    }

private:
    std::vector<Template> templates_;

    static void standardize(std::vector<double>& v) {
        double mean = 0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double norm = 0;
        for (double& x : v) {
            x -= mean;
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm > 0)
            for (double& x : v) x /= norm;
    }

    // Ink darkness (255 - I) averaged over each cell of a kGrid x kGrid grid.
    static Template make_template(char letter, const GlyphImage& g) {
        const int rows = g.pixels.rows(), cols = g.pixels.cols();
        if (rows == 0 || cols == 0) throw ShapeError("template from empty glyph");
        Template t{letter, std::vector<double>(kGrid * kGrid, 0.0), static_cast<double>(rows) / cols};
        std::vector<double> weight(kGrid * kGrid, 0.0);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const int gr = r * kGrid / rows, gc = c * kGrid / cols;
                t.shape[gr * kGrid + gc] += 255.0 - g.pixels(r, c);
                weight[gr * kGrid + gc] += 1.0;
            }
        // Glyphs smaller than the grid leave empty cells; fill from the nearest source pixel.
        for (int gr = 0; gr < kGrid; ++gr)
            for (int gc = 0; gc < kGrid; ++gc) {
                const int i = gr * kGrid + gc;
                if (weight[i] > 0) {
                    t.shape[i] /= weight[i];
                } else {
                    const int r = std::min(rows - 1, (2 * gr + 1) * rows / (2 * kGrid));
                    const int c = std::min(cols - 1, (2 * gc + 1) * cols / (2 * kGrid));
                    t.shape[i] = 255.0 - g.pixels(r, c);
                }
            }
        standardize(t.shape);
        return t;
    }
};

// ExtractOptions preset for single-letter mode.
inline ExtractOptions letter_filter_options(char letter, const TemplateClassifier& tc, ExtractOptions base = {}) {
    base.letter = letter;
    base.classifier = [tc](const GlyphImage& g) { return tc(g); };
    return base;
}

}  // namespace printattr
