#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "printattr/predict.hpp"
#include "printattr/rng.hpp"

using namespace printattr;

namespace {

LetterPrediction letter(int label, std::vector<float> probs) { return {label, std::move(probs), {}}; }

std::vector<TwoChannelPatch> random_patches(int n, int size, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TwoChannelPatch> out(static_cast<std::size_t>(n));
    for (auto& p : out) {
        p.size = size;
        p.data.resize(static_cast<std::size_t>(size * size * 2));
        for (auto& v : p.data) v = static_cast<float>(rng.uniform(-1, 1));
    }
    return out;
}

nn::Model<float> small_model(std::uint64_t seed) {
    nn::ModelConfig cfg;
    cfg.patch = 12;
    cfg.classes = 3;
    nn::Model<float> m(cfg);
    m.initialize(seed);
    return m;
}

}  // namespace

TEST(PredictLetters, EmptyInputEmptyOutput) {
    auto m = small_model(1);
    EXPECT_TRUE(predict_letters(m, std::vector<TwoChannelPatch>{}).empty());
}

TEST(PredictLetters, ZeroModelIsUniformWithLowestLabel) {
    auto m = small_model(1);
    m.zero_parameters();
    const auto preds = predict_letters(m, random_patches(4, 12, 2));
    for (const auto& p : preds) {
        EXPECT_EQ(p.label, 0);
        for (float v : p.probs) EXPECT_NEAR(v, 1.0f / 3.0f, 1e-6);
    }
}

TEST(PredictLetters, BatchEqualsSingle) {
    auto m = small_model(3);
    // Give BN non-trivial running stats.
    m.set_mode(nn::BnMode::Train);
    std::vector<const TwoChannelPatch*> ptrs;
    const auto warm = random_patches(8, 12, 4);
    for (const auto& p : warm) ptrs.push_back(&p);
    m.forward(make_batch(ptrs, 12));

    const auto patches = random_patches(7, 12, 5);
    const auto batched = predict_letters(m, patches, 256);
    const auto single = predict_letters(m, patches, 1);
    ASSERT_EQ(batched.size(), 7u);
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_EQ(batched[i].label, single[i].label);
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(batched[i].probs[k], single[i].probs[k], 1e-5);
        EXPECT_NEAR(std::accumulate(batched[i].probs.begin(), batched[i].probs.end(), 0.0), 1.0, 1e-6);
    }
}

TEST(PredictLetters, SizeMismatchThrows) {
    auto m = small_model(1);
    EXPECT_THROW(predict_letters(m, random_patches(2, 14, 1)), ShapeError);
}

TEST(VotePage, MajorityAndTieRules) {
    std::vector<LetterPrediction> aab{letter(0, {0.6f, 0.4f}), letter(0, {0.7f, 0.3f}), letter(1, {0.1f, 0.9f})};
    EXPECT_EQ(vote_page(aab).label, 0);

    // One vote each; summed probabilities A 1.9, B 1.1.
    std::vector<LetterPrediction> ab{letter(0, {0.95f, 0.05f}), letter(1, {0.95f, 0.05f})};
    ab[1] = letter(1, {0.95f, 1.05f});
    EXPECT_EQ(vote_page(ab).label, 0);
    std::vector<LetterPrediction> flipped{letter(0, {0.5f, 0.5f}), letter(1, {0.2f, 0.8f})};
    EXPECT_EQ(vote_page(flipped).label, 1);
    std::vector<LetterPrediction> dead_even{letter(0, {0.5f, 0.5f}), letter(1, {0.5f, 0.5f})};
    EXPECT_EQ(vote_page(dead_even).label, 0);

    std::vector<LetterPrediction> one{letter(1, {0.2f, 0.8f})};
    EXPECT_EQ(vote_page(one).label, 1);
    EXPECT_THROW(vote_page(std::vector<LetterPrediction>{}), InsufficientDataError);
}

TEST(VotePage, PermutationInvarianceAndMonotonicity) {
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
        std::vector<LetterPrediction> v;
        const int n = 1 + static_cast<int>(rng.below(9));
        for (int i = 0; i < n; ++i) {
            std::vector<float> p(3);
            float s = 0;
            for (auto& x : p) s += x = static_cast<float>(rng.uniform(0.01, 1));
            for (auto& x : p) x /= s;
            v.push_back(letter(static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()), p));
        }
        const int label = vote_page(v).label;
        auto shuffled = v;
        rng.shuffle(shuffled);
        EXPECT_EQ(vote_page(shuffled).label, label);
        std::vector<float> p(3, 0.0f);
        p[static_cast<std::size_t>(label)] = 1.0f;
        v.push_back(letter(label, p));
        EXPECT_EQ(vote_page(v).label, label);
    }
}

TEST(Score, PerfectRun) {
    std::vector<DocumentPredictions> docs{{"a", 0, {letter(0, {1, 0}), letter(0, {1, 0})}},
                                          {"b", 1, {letter(1, {0, 1})}}};
    const auto s = score(docs, 2);
    EXPECT_EQ(s.letter_accuracy(), 100.0);
    EXPECT_EQ(s.page_accuracy(), 100.0);
    EXPECT_EQ(s.confusion.at(0, 0), 1);
    EXPECT_EQ(s.confusion.at(1, 1), 1);
    EXPECT_EQ(s.confusion.at(0, 1), 0);
}

TEST(Score, OneWrongPageOfFour) {
    std::vector<DocumentPredictions> docs{{"a", 0, {letter(0, {1, 0})}},
                                          {"b", 0, {letter(1, {0, 1})}},
                                          {"c", 1, {letter(1, {0, 1})}},
                                          {"d", 1, {letter(1, {0, 1})}}};
    const auto s = score(docs, 2);
    EXPECT_EQ(s.page_accuracy(), 75.0);
    EXPECT_EQ(s.confusion.at(0, 1), 1);
    EXPECT_EQ(s.confusion.total(), 4);
}

TEST(Score, ZeroGlyphDocumentIsMisclassified) {
    std::vector<DocumentPredictions> docs{{"a", 0, {letter(0, {1, 0})}}, {"blank", 1, {}}};
    const auto s = score(docs, 2);
    EXPECT_EQ(s.page_accuracy(), 50.0);
    EXPECT_EQ(s.confusion.total(), 2);
    EXPECT_EQ(s.confusion.unattributed[1], 1);
    ASSERT_EQ(s.diagnostics.size(), 1u);
    EXPECT_NE(s.diagnostics[0].find("blank"), std::string::npos);
    const auto pct = s.confusion.row_percent(1);
    EXPECT_NEAR(std::accumulate(pct.begin(), pct.end(), 0.0), 100.0, 0.1);
}

TEST(Score, ConfusionFormatting) {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 3;
    cm.at(0, 1) = 1;
    cm.at(1, 1) = 2;
    const auto text = format_confusion(cm, {"alpha", "beta"});
    EXPECT_NE(text.find("75.00"), std::string::npos);
    EXPECT_NE(text.find("100.00"), std::string::npos);
}
