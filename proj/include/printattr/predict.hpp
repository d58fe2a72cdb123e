#pragma once

// Letter-level inference, page-level voting and accuracy bookkeeping.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "printattr/error.hpp"
#include "printattr/nn/model.hpp"
#include "printattr/preprocess.hpp"

namespace printattr {

struct LetterPrediction {
    int label = 0;
    std::vector<float> probs;
    PatchMeta meta;
};

// Copies patches into an [N, P, P, 2] batch.
inline nn::Tensor<float> make_batch(std::span<const TwoChannelPatch* const> patches, int patch) {
    const std::size_t p = static_cast<std::size_t>(patch), per = p * p * 2;
    nn::Tensor<float> x({patches.size(), p, p, 2});
    for (std::size_t i = 0; i < patches.size(); ++i) {
        if (patches[i]->size != patch || patches[i]->data.size() != per)
            throw ShapeError("patch of size " + std::to_string(patches[i]->size) + " does not match model patch size " +
                             std::to_string(patch));
        std::copy(patches[i]->data.begin(), patches[i]->data.end(), x.data() + i * per);
    }
    return x;
}

// Argmax with ties going to the lowest index.
inline int argmax(std::span<const float> v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

// Order-preserving inference in infer mode. Results do not depend on
// `batch` because batch norm uses running statistics.
inline std::vector<LetterPrediction> predict_letters(nn::Model<float>& model,
                                                     std::span<const TwoChannelPatch* const> patches,
                                                     std::size_t batch = 256) {
    model.set_mode(nn::BnMode::Infer);
    std::vector<LetterPrediction> out;
    out.reserve(patches.size());
    const int patch = model.config().patch;
    const std::size_t classes = static_cast<std::size_t>(model.config().classes);
    for (std::size_t start = 0; start < patches.size(); start += batch) {
        const std::size_t n = std::min(batch, patches.size() - start);
        const auto probs = model.predict_proba(make_batch(patches.subspan(start, n), patch));
        for (std::size_t i = 0; i < n; ++i) {
            LetterPrediction lp;
            lp.probs.assign(probs.data() + i * classes, probs.data() + (i + 1) * classes);
            lp.label = argmax(lp.probs);
            lp.meta = patches[start + i]->meta;
            out.push_back(std::move(lp));
        }
    }
    return out;
}

inline std::vector<LetterPrediction> predict_letters(nn::Model<float>& model, const std::vector<TwoChannelPatch>& patches,
                                                     std::size_t batch = 256) {
    std::vector<const TwoChannelPatch*> ptrs;
    for (const auto& p : patches) ptrs.push_back(&p);
    return predict_letters(model, std::span<const TwoChannelPatch* const>(ptrs), batch);
}

struct Vote {
    int label = 0;
    std::vector<int> counts;
    std::vector<double> prob_sums;
};

// Majority vote; ties go to the larger summed probability, then the lower index.
inline Vote vote_page(std::span<const LetterPrediction> letters) {
    if (letters.empty()) throw InsufficientDataError("vote_page: document has no letter predictions");
    const std::size_t c = letters.front().probs.size();
    Vote v{0, std::vector<int>(c, 0), std::vector<double>(c, 0.0)};
    for (const auto& l : letters) {
        if (l.probs.size() != c) throw ShapeError("vote_page: inconsistent class counts");
        ++v.counts.at(static_cast<std::size_t>(l.label));
        for (std::size_t k = 0; k < c; ++k) v.prob_sums[k] += l.probs[k];
    }
    for (std::size_t k = 1; k < c; ++k) {
        const auto b = static_cast<std::size_t>(v.label);
        if (v.counts[k] > v.counts[b] || (v.counts[k] == v.counts[b] && v.prob_sums[k] > v.prob_sums[b]))
            v.label = static_cast<int>(k);
    }
    return v;
}

// Page-level confusion matrix. Documents without any extracted letter have
// no prediction; they are kept in a per-class `unattributed` column so that
// every row still sums to the number of test documents of that class.
struct ConfusionMatrix {
    int classes = 0;
    std::vector<long> counts;  // row = true, col = predicted
    std::vector<long> unattributed;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int c)
        : classes(c), counts(static_cast<std::size_t>(c) * c, 0), unattributed(static_cast<std::size_t>(c), 0) {}

    long& at(int t, int p) { return counts.at(static_cast<std::size_t>(t) * classes + p); }
    long at(int t, int p) const { return counts.at(static_cast<std::size_t>(t) * classes + p); }

    long row_total(int t) const {
        long s = unattributed.at(static_cast<std::size_t>(t));
        for (int p = 0; p < classes; ++p) s += at(t, p);
        return s;
    }

    long total() const {
        long s = 0;
        for (int t = 0; t < classes; ++t) s += row_total(t);
        return s;
    }

    // Row-normalised percentages; the extra last column is the unattributed share.
    std::vector<double> row_percent(int t) const {
        std::vector<double> out(static_cast<std::size_t>(classes) + 1, 0.0);
        const long n = row_total(t);
        if (n == 0) return out;
        for (int p = 0; p < classes; ++p) out[static_cast<std::size_t>(p)] = 100.0 * at(t, p) / n;
        out.back() = 100.0 * unattributed.at(static_cast<std::size_t>(t)) / n;
        return out;
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        if (o.classes != classes) throw ShapeError("confusion matrices of different sizes");
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
        for (std::size_t i = 0; i < unattributed.size(); ++i) unattributed[i] += o.unattributed[i];
        return *this;
    }
};

struct DocumentPredictions {
    std::string id;
    int true_label = 0;
    std::vector<LetterPrediction> letters;
};

struct DocumentOutcome {
    std::string id;
    int true_label = 0;
    std::optional<int> predicted;
    std::vector<int> votes;
    long letters = 0;
    long correct_letters = 0;
};

struct Score {
    long letters = 0, correct_letters = 0;
    long pages = 0, correct_pages = 0;
    ConfusionMatrix confusion;
    std::vector<DocumentOutcome> documents;
    std::vector<std::string> diagnostics;

    double letter_accuracy() const { return letters ? 100.0 * correct_letters / letters : 0.0; }
    double page_accuracy() const { return pages ? 100.0 * correct_pages / pages : 0.0; }
};

inline Score score(const std::vector<DocumentPredictions>& docs, int classes) {
    Score s;
    s.confusion = ConfusionMatrix(classes);
    for (const auto& d : docs) {
        if (d.true_label < 0 || d.true_label >= classes) throw ConfigError("score: label out of range for " + d.id);
        DocumentOutcome o{d.id, d.true_label, std::nullopt, std::vector<int>(static_cast<std::size_t>(classes), 0), 0, 0};
        ++s.pages;
        if (d.letters.empty()) {
            ++s.confusion.unattributed[static_cast<std::size_t>(d.true_label)];
            s.diagnostics.push_back(d.id + ": no letters extracted, counted as misclassified");
        } else {
            const Vote v = vote_page(d.letters);
            o.predicted = v.label;
            o.votes = v.counts;
            ++s.confusion.at(d.true_label, v.label);
            if (v.label == d.true_label) ++s.correct_pages;
            for (const auto& l : d.letters) o.correct_letters += l.label == d.true_label;
            o.letters = static_cast<long>(d.letters.size());
        }
        s.letters += o.letters;
        s.correct_letters += o.correct_letters;
        s.documents.push_back(std::move(o));
    }
    return s;
}

inline std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

// Counts and row-percent views, one line per true class.
inline std::string format_confusion(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
    std::ostringstream os;
    std::size_t w = 10;
    for (const auto& n : names) w = std::max(w, n.size() + 1);
    auto header = [&] {
        os << std::setw(static_cast<int>(w)) << "true\\pred";
        for (const auto& n : names) os << ' ' << std::setw(static_cast<int>(w)) << n;
        os << ' ' << std::setw(static_cast<int>(w)) << "none" << '\n';
    };
    os << "confusion (counts)\n";
    header();
    for (int t = 0; t < cm.classes; ++t) {
        os << std::setw(static_cast<int>(w)) << names.at(static_cast<std::size_t>(t));
        for (int p = 0; p < cm.classes; ++p) os << ' ' << std::setw(static_cast<int>(w)) << cm.at(t, p);
        os << ' ' << std::setw(static_cast<int>(w)) << cm.unattributed[static_cast<std::size_t>(t)] << '\n';
    }
    os << "confusion (row %)\n";
    header();
    for (int t = 0; t < cm.classes; ++t) {
        os << std::setw(static_cast<int>(w)) << names.at(static_cast<std::size_t>(t));
        for (double v : cm.row_percent(t)) os << ' ' << std::setw(static_cast<int>(w)) << fixed2(v);
        os << '\n';
    }
    return os.str();
}

}  // namespace printattr
