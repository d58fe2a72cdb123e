#include <gtest/gtest.h>

#include <filesystem>

#include "printattr/dataset.hpp"
#include "printattr/image_io.hpp"
#include "printattr/letter_filter.hpp"
#include "printattr/patch_cache.hpp"
#include "printattr/preprocess.hpp"
#include "printattr/rng.hpp"
#include "printattr/synth/synth.hpp"

using namespace printattr;
namespace fs = std::filesystem;

namespace {

GlyphImage glyph_of(std::vector<std::uint8_t> values, int rows, int cols) {
    return GlyphImage{GrayImage(rows, cols, std::move(values)), BBox{0, 0, rows, cols}, std::nullopt, "g"};
}

fs::path temp_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("printattr_pre_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Grayscale, FixedPoints) {
    RgbImage white{GrayImage(2, 2, 255), GrayImage(2, 2, 255), GrayImage(2, 2, 255)};
    const auto w = to_grayscale(white);
    for (auto v : w.pixels.data()) EXPECT_EQ(v, 255);
    RgbImage black{GrayImage(2, 2, 0), GrayImage(2, 2, 0), GrayImage(2, 2, 0)};
    const auto b = to_grayscale(black);
    for (auto v : b.pixels.data()) EXPECT_EQ(v, 0);
}

TEST(Grayscale, WeightedSum) {
    RgbImage px{GrayImage(1, 1, 100), GrayImage(1, 1, 150), GrayImage(1, 1, 200)};
    // 0.299*100 + 0.587*150 + 0.114*200 = 140.75
    EXPECT_EQ(to_grayscale(px).pixels(0, 0), 141);
}

TEST(Grayscale, MismatchedChannelsThrow) {
    RgbImage bad{GrayImage(2, 2, 0), GrayImage(2, 3, 0), GrayImage(2, 2, 0)};
    EXPECT_THROW(to_grayscale(bad), ShapeError);
}

TEST(Extract, AllWhitePageIsEmpty) {
    DocumentImage doc{GrayImage(40, 40, 255), "white"};
    EXPECT_TRUE(extract_glyphs(doc).empty());
}

TEST(Extract, UniformDarkPageIsDegenerate) {
    DocumentImage doc{GrayImage(40, 40, 20), "dark"};
    EXPECT_THROW(extract_glyphs(doc), DegenerateImageError);
}

TEST(Extract, ThreeSquaresInReadingOrder) {
    DocumentImage doc{GrayImage(60, 80, 255), "sq"};
    const int corners[3][2] = {{30, 5}, {5, 50}, {5, 10}};
    for (const auto& [r0, c0] : corners)
        for (int r = r0; r < r0 + 10; ++r)
            for (int c = c0; c < c0 + 10; ++c) doc.pixels(r, c) = 0;
    ExtractOptions o;
    o.min_area = 4;
    const auto g = extract_glyphs(doc, o);
    ASSERT_EQ(g.size(), 3u);
    for (const auto& x : g) {
        EXPECT_EQ(x.bbox.height, 10);
        EXPECT_EQ(x.bbox.width, 10);
    }
    EXPECT_EQ(g[0].bbox.col, 10);
    EXPECT_EQ(g[1].bbox.col, 50);
    EXPECT_EQ(g[2].bbox.row, 30);
    const auto again = extract_glyphs(doc, o);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(again[i].bbox.col, g[i].bbox.col);
}

TEST(Extract, SpeckIsRejected) {
    DocumentImage doc{GrayImage(20, 20, 255), "speck"};
    doc.pixels(5, 5) = doc.pixels(5, 6) = 0;
    ExtractOptions o;
    o.min_area = 4;
    EXPECT_TRUE(extract_glyphs(doc, o).empty());
}

TEST(Extract, DiagonalPixelsAreConnected) {
    DocumentImage doc{GrayImage(20, 20, 255), "diag"};
    for (int i = 2; i < 12; ++i) doc.pixels(i, i) = 0;
    ExtractOptions o;
    o.min_area = 4;
    const auto g = extract_glyphs(doc, o);
    ASSERT_EQ(g.size(), 1u);
    EXPECT_EQ(g[0].bbox.height, 10);
}

TEST(Extract, BorderTouchingComponentsDropped) {
    DocumentImage doc{GrayImage(20, 20, 255), "edge"};
    for (int r = 0; r < 6; ++r)
        for (int c = 5; c < 10; ++c) doc.pixels(r, c) = 0;
    ExtractOptions o;
    o.min_area = 4;
    EXPECT_TRUE(extract_glyphs(doc, o).empty());
    o.drop_border_touching = false;
    EXPECT_EQ(extract_glyphs(doc, o).size(), 1u);
}

TEST(Segment, ConstantImageIsAllEdge) {
    const auto g = glyph_of(std::vector<std::uint8_t>(9, 90), 3, 3);
    const auto m = segment_regions(g, {});
    EXPECT_DOUBLE_EQ(m.mu, 90.0);
    for (auto l : m.labels.data()) EXPECT_EQ(l, Region::Edge);
}

TEST(Segment, HalvesSplitIntoFlatAndBackground) {
    const auto g = glyph_of({0, 0, 255, 255}, 2, 2);
    const auto m = segment_regions(g, {});
    EXPECT_DOUBLE_EQ(m.mu, 127.5);
    EXPECT_EQ(m.labels(0, 0), Region::Flat);
    EXPECT_EQ(m.labels(0, 1), Region::Flat);
    EXPECT_EQ(m.labels(1, 0), Region::Background);
    const auto counts = m.counts();
    EXPECT_EQ(counts[static_cast<int>(Region::Edge)], 0u);
    const auto d = ideal_image(g, m);
    EXPECT_EQ(d(0, 0), 0.0);
    EXPECT_EQ(d(1, 1), 255.0);
    const auto n = noise_residual(g, d);
    for (double v : n.data()) EXPECT_EQ(v, 0.0);
}

TEST(Segment, AllZeroIsFlat) {
    const auto m = segment_regions(glyph_of(std::vector<std::uint8_t>(4, 0), 2, 2), {});
    for (auto l : m.labels.data()) EXPECT_EQ(l, Region::Flat);
}

TEST(Segment, InvalidParamsThrow) {
    ResidualParams p{1.5, 1.2};
    EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Ideal, OddAndEvenMedians) {
    // FLAT {10, 20, 30}; everything else background.
    const auto g = glyph_of({10, 20, 30, 250, 250, 250}, 2, 3);
    const auto d = ideal_image(g, segment_regions(g, {}));
    EXPECT_EQ(d(0, 0), 20.0);
    EXPECT_EQ(d(0, 2), 20.0);
    // Even count: lower-middle element.
    const auto g2 = glyph_of({10, 20, 30, 40, 250, 250, 250, 250}, 2, 4);
    const auto d2 = ideal_image(g2, segment_regions(g2, {}));
    EXPECT_EQ(d2(0, 0), 20.0);
}

TEST(Residual, DefinitionAndShapeCheck) {
    const auto g = glyph_of({100}, 1, 1);
    RealPlane d(1, 1, 120.0);
    EXPECT_EQ(noise_residual(g, d)(0, 0), 20.0);
    EXPECT_THROW(noise_residual(g, RealPlane(2, 1, 0.0)), ShapeError);
}

TEST(Residual, RegionPartitionOnRandomGlyphs) {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        const int rows = 3 + static_cast<int>(rng.below(10)), cols = 3 + static_cast<int>(rng.below(10));
        std::vector<std::uint8_t> v(static_cast<std::size_t>(rows * cols));
        for (auto& x : v) x = static_cast<std::uint8_t>(rng.below(256));
        const auto m = segment_regions(glyph_of(v, rows, cols), {});
        const auto c = m.counts();
        EXPECT_EQ(c[0] + c[1] + c[2], v.size());
    }
}

TEST(Normalize, CropAndPadRule) {
    RealPlane img(31, 26);
    for (int r = 0; r < 31; ++r)
        for (int c = 0; c < 26; ++c) img(r, c) = r * 100 + c + 1;
    const auto out = normalize_patch(img, 30);
    ASSERT_EQ(out.rows(), 30);
    EXPECT_EQ(out(0, 2), 1.0);      // row 0 kept, 2 zero columns on the left
    EXPECT_EQ(out(29, 27), 2926.0);  // row 30 cropped from the bottom
    EXPECT_EQ(out(0, 1), 0.0);
    EXPECT_EQ(out(0, 28), 0.0);
}

TEST(Normalize, IdentityAndCentre) {
    RealPlane same(4, 4, 7.0);
    EXPECT_EQ(normalize_patch(same, 4).data(), same.data());
    RealPlane one(1, 1, 5.0);
    const auto out = normalize_patch(one, 3);
    EXPECT_EQ(out(1, 1), 5.0);
    EXPECT_EQ(out(0, 0), 0.0);
    RealPlane two(2, 2, 1.0);
    const auto odd = normalize_patch(two, 3);  // extra zero goes bottom/right
    EXPECT_EQ(odd(0, 0), 1.0);
    EXPECT_EQ(odd(2, 2), 0.0);
}

TEST(Assemble, ScalingAndPadding) {
    const auto p = assemble_patch(RealPlane(3, 3, 255.0), RealPlane(3, 3, -255.0), 2, {});
    EXPECT_FLOAT_EQ(p.at(1, 1, 0), 1.0f);
    EXPECT_FLOAT_EQ(p.at(1, 1, 1), -1.0f);
    EXPECT_EQ(p.label, 2);
    EXPECT_THROW(assemble_patch(RealPlane(3, 3), RealPlane(3, 2), 0, {}), ShapeError);

    const auto g = glyph_of(std::vector<std::uint8_t>(4, 40), 2, 2);
    const auto q = make_patch(g, {}, 6, 0);
    EXPECT_EQ(q.at(0, 0, 0), 0.0f);
    EXPECT_EQ(q.at(0, 0, 1), 0.0f);
    EXPECT_FLOAT_EQ(q.at(2, 2, 0), 40.0f / 255.0f);
}

TEST(PatchCache, RoundTrip) {
    const auto dir = temp_dir("cache");
    PatchCache c{4, 2, 3, {}};
    for (int i = 0; i < 5; ++i) {
        TwoChannelPatch p;
        p.size = 4;
        p.label = i % 3;
        p.data.assign(32, 0.25f * static_cast<float>(i));
        p.meta = {"printer_0" + std::to_string(i) + "/page_000.png", BBox{i, i + 1, 10, 12}};
        c.records.push_back(p);
    }
    write_patch_cache(dir / "c.ptpc", c);
    const auto back = read_patch_cache(dir / "c.ptpc");
    EXPECT_EQ(back.patch, 4);
    EXPECT_EQ(back.classes, 3);
    ASSERT_EQ(back.records.size(), 5u);
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(back.records[i].data, c.records[i].data);
        EXPECT_EQ(back.records[i].label, c.records[i].label);
        EXPECT_EQ(back.records[i].meta.source_id, c.records[i].meta.source_id);
        EXPECT_EQ(back.records[i].meta.bbox.width, 12);
    }
    // Header layout: magic, version, P, channels, classes, count.
    std::ifstream in(dir / "c.ptpc", std::ios::binary);
    char hdr[16];
    in.read(hdr, 16);
    EXPECT_EQ(std::string(hdr, 4), "PTPC");
    EXPECT_EQ(hdr[6], 4);
    EXPECT_EQ(hdr[8], 2);
    EXPECT_EQ(hdr[10], 3);
    EXPECT_EQ(hdr[12], 5);
    fs::remove_all(dir);
}

TEST(PatchCache, RejectsGarbage) {
    const auto dir = temp_dir("garbage");
    std::ofstream(dir / "bad.ptpc") << "NOPE";
    EXPECT_THROW(read_patch_cache(dir / "bad.ptpc"), IoError);
    fs::remove_all(dir);
}

TEST(LetterFilter, FontTemplatesClassifyCleanGlyphs) {
    const auto tc = TemplateClassifier::from_font();
    ExtractOptions o;
    o.min_area = 32;
    synth::PageSpec spec;
    spec.text = "the quick brown fox jumps over a lazy dog";
    int correct = 0, total = 0;
    const auto glyphs = extract_glyphs(synth::render_page(spec), o);
    std::string letters;
    for (char ch : spec.text)
        if (ch != ' ') letters.push_back(ch);
    ASSERT_EQ(glyphs.size(), letters.size());
    for (std::size_t i = 0; i < glyphs.size(); ++i) {
        correct += tc(glyphs[i]) == letters[i];
        ++total;
    }
    EXPECT_EQ(correct, total);
}

TEST(LetterFilter, KeepsOnlyTheRequestedLetter) {
    const auto tc = TemplateClassifier::from_font();
    synth::PageSpec spec;
    spec.text = "eaeaeaea\naeaeaeae";
    const auto doc = synth::render_page(spec);
    const auto all = extract_glyphs(doc);
    const auto only_e = extract_glyphs(doc, letter_filter_options('e', tc));
    EXPECT_EQ(all.size(), 16u);
    EXPECT_EQ(only_e.size(), 8u);
    for (const auto& g : only_e) EXPECT_EQ(g.letter_hint, 'e');
}

TEST(LetterFilter, SampleTemplatesAverage) {
    const auto font = TemplateClassifier::from_font();
    std::vector<std::pair<char, GlyphImage>> samples;
    for (char ch : std::string("oox")) {
        synth::PageSpec spec;
        spec.text = std::string(1, ch);
        samples.emplace_back(ch, extract_glyphs(synth::render_page(spec)).at(0));
    }
    const auto tc = TemplateClassifier::from_samples(samples);
    EXPECT_EQ(tc.templates().size(), 2u);
    EXPECT_EQ(tc(samples[2].second), 'x');
}

TEST(Dataset, BuildSaveLoad) {
    const auto dir = temp_dir("dataset");
    synth::CorpusSpec cs;
    cs.printers = 2;
    cs.pages = 2;
    cs.lines_per_page = 1;
    cs.chars_per_line = 6;
    synth::generate_corpus(cs, dir / "corpus");
    // A blank page yields a document with zero patches.
    write_png(dir / "corpus" / "printer_01" / "page_999.png", GrayImage(40, 60, 255));
    ExtractConfig ec;
    ec.patch = 24;
    const auto ds = build_dataset(dir / "corpus", ec);
    ASSERT_EQ(ds.docs.size(), 5u);
    EXPECT_EQ(ds.class_names, (std::vector<std::string>{"printer_00", "printer_01"}));
    EXPECT_TRUE(ds.docs.back().patches.empty());
    EXPECT_GT(ds.patches.size(), 10u);
    save_dataset(dir / "p.ptpc", ds);
    const auto back = load_dataset(dir / "p.ptpc");
    EXPECT_EQ(back.patch, 24);
    ASSERT_EQ(back.docs.size(), ds.docs.size());
    for (std::size_t i = 0; i < ds.docs.size(); ++i) {
        EXPECT_EQ(back.docs[i].id, ds.docs[i].id);
        EXPECT_EQ(back.docs[i].patches, ds.docs[i].patches);
    }
    EXPECT_EQ(back.patches[3].data, ds.patches[3].data);

    ec.jobs = 3;
    const auto parallel = build_dataset(dir / "corpus", ec);
    ASSERT_EQ(parallel.patches.size(), ds.patches.size());
    for (std::size_t i = 0; i < ds.patches.size(); ++i) EXPECT_EQ(parallel.patches[i].data, ds.patches[i].data);
    fs::remove_all(dir);
}
