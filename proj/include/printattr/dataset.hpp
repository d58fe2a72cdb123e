#pragma once

// Dataset ingestion: `<root>/<printer_id>/<page>.png`, class labels from the
// lexicographic order of printer directories. Documents keep their glyph
// count even when it is zero so that scoring can count extraction failures.

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "printattr/error.hpp"
#include "printattr/image_io.hpp"
#include "printattr/letter_filter.hpp"
#include "printattr/patch_cache.hpp"
#include "printattr/preprocess.hpp"

namespace printattr {

struct DatasetLayout {
    std::vector<std::string> class_names;
    std::vector<std::vector<std::filesystem::path>> pages;  // per class, sorted
};

inline bool is_image_file(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

inline DatasetLayout scan_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    DatasetLayout layout;
    for (const auto& d : dirs) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(d))
            if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
        if (files.empty()) continue;
        std::sort(files.begin(), files.end());
        layout.class_names.push_back(d.filename().string());
        layout.pages.push_back(std::move(files));
    }
    if (layout.class_names.empty()) throw InsufficientDataError("no printer directories with images under " + root.string());
    return layout;
}

struct ExtractConfig {
    int patch = 30;
    ResidualParams residual;
    std::optional<int> threshold;
    int min_area = 32;
    int max_area = 100000;
    std::optional<char> letter;  // single-letter mode; nullopt = all letters
    int template_height = 32;
    int jobs = 1;

    void validate() const {
        residual.validate();
        if (patch < 1) throw ConfigError("patch size must be >= 1");
        if (min_area < 1 || max_area < min_area) throw ConfigError("invalid area bounds");
        if (threshold && (*threshold < 0 || *threshold > 255)) throw ConfigError("threshold out of [0,255]");
    }
};

struct DocumentEntry {
    std::string id;  // "<printer_id>/<file name>"
    int label = 0;
    std::vector<std::size_t> patches;  // indices into PatchDataset::patches
};

struct PatchDataset {
    int patch = 30;
    std::vector<std::string> class_names;
    std::vector<TwoChannelPatch> patches;
    std::vector<DocumentEntry> docs;
    ExtractConfig config;

    int classes() const { return static_cast<int>(class_names.size()); }
};

inline ExtractOptions make_extract_options(const ExtractConfig& cfg) {
    ExtractOptions o;
    o.threshold = cfg.threshold;
    o.min_area = cfg.min_area;
    o.max_area = cfg.max_area;
    if (cfg.letter) o = letter_filter_options(*cfg.letter, TemplateClassifier::from_font(cfg.template_height), o);
    return o;
}

// All two-channel patches of one page.
inline std::vector<TwoChannelPatch> page_patches(const DocumentImage& doc, const ExtractConfig& cfg,
                                                 const ExtractOptions& opts, int label) {
    std::vector<TwoChannelPatch> out;
    for (const auto& g : extract_glyphs(doc, opts)) out.push_back(make_patch(g, cfg.residual, cfg.patch, label));
    return out;
}

// Runs fn(i) for i in [0, n) on `jobs` threads; the first exception wins.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex m;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(m);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    const std::size_t extra = n == 0 ? 0 : std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs))) - 1;
    for (std::size_t j = 0; j < extra; ++j) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

// One page to ingest; `load` is called on a worker thread.
struct DocumentSource {
    std::string id;
    int label = 0;
    std::function<DocumentImage()> load;
};

inline PatchDataset build_dataset(std::vector<std::string> class_names, const std::vector<DocumentSource>& sources,
                                  const ExtractConfig& cfg) {
    cfg.validate();
    const auto opts = make_extract_options(cfg);
    std::vector<std::vector<TwoChannelPatch>> per_doc(sources.size());
    parallel_for(sources.size(), cfg.jobs, [&](std::size_t i) {
        auto doc = sources[i].load();
        doc.source_id = sources[i].id;
        per_doc[i] = page_patches(doc, cfg, opts, sources[i].label);
    });

    PatchDataset ds;
    ds.patch = cfg.patch;
    ds.class_names = std::move(class_names);
    ds.config = cfg;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        DocumentEntry d{sources[i].id, sources[i].label, {}};
        for (auto& p : per_doc[i]) {
            d.patches.push_back(ds.patches.size());
            ds.patches.push_back(std::move(p));
        }
        ds.docs.push_back(std::move(d));
    }
    return ds;
}

inline PatchDataset build_dataset(const DatasetLayout& layout, const ExtractConfig& cfg) {
    std::vector<DocumentSource> sources;
    for (std::size_t k = 0; k < layout.pages.size(); ++k)
        for (const auto& p : layout.pages[k])
            sources.push_back({layout.class_names[k] + "/" + p.filename().string(), static_cast<int>(k),
                               [p] { return load_document(p); }});
    return build_dataset(layout.class_names, sources, cfg);
}

inline PatchDataset build_dataset(const std::filesystem::path& root, const ExtractConfig& cfg) {
    return build_dataset(scan_dataset(root), cfg);
}

inline nlohmann::json extract_config_json(const ExtractConfig& c) {
    nlohmann::json j;
    j["patch"] = c.patch;
    j["alpha"] = c.residual.alpha;
    j["beta"] = c.residual.beta;
    j["threshold"] = c.threshold ? nlohmann::json(*c.threshold) : nlohmann::json("auto");
    j["min_area"] = c.min_area;
    j["max_area"] = c.max_area;
    j["letter"] = c.letter ? std::string(1, *c.letter) : std::string("all");
    j["template_height"] = c.template_height;
    return j;
}

inline ExtractConfig extract_config_from_json(const nlohmann::json& j) {
    ExtractConfig c;
    c.patch = j.at("patch").get<int>();
    c.residual.alpha = j.at("alpha").get<double>();
    c.residual.beta = j.at("beta").get<double>();
    if (j.at("threshold").is_number()) c.threshold = j.at("threshold").get<int>();
    c.min_area = j.at("min_area").get<int>();
    c.max_area = j.at("max_area").get<int>();
    const auto letter = j.at("letter").get<std::string>();
    if (letter != "all") c.letter = letter.at(0);
    c.template_height = j.value("template_height", 32);
    return c;
}

// The sidecar next to a cache file lists every document (including those
// with zero patches), the class names and the extraction settings.
inline std::filesystem::path sidecar_path(const std::filesystem::path& cache) {
    auto p = cache;
    p += ".json";
    return p;
}

inline void save_dataset(const std::filesystem::path& path, const PatchDataset& ds) {
    write_patch_cache(path, PatchCache{ds.patch, 2, ds.classes(), ds.patches});
    nlohmann::json j;
    j["format"] = "printattr-patch-index";
    j["version"] = 1;
    j["classes"] = ds.class_names;
    j["extract"] = extract_config_json(ds.config);
    auto& docs = j["documents"] = nlohmann::json::array();
    for (const auto& d : ds.docs) docs.push_back({{"id", d.id}, {"label", d.label}, {"patches", d.patches.size()}});
    std::ofstream out(sidecar_path(path), std::ios::binary);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("cannot write " + sidecar_path(path).string());
}

inline PatchDataset load_dataset(const std::filesystem::path& path) {
    auto cache = read_patch_cache(path);
    std::ifstream in(sidecar_path(path), std::ios::binary);
    if (!in) throw IoError("missing patch index " + sidecar_path(path).string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed patch index: " + std::string(e.what()));
    }
    PatchDataset ds;
    ds.patch = cache.patch;
    ds.class_names = j.at("classes").get<std::vector<std::string>>();
    ds.config = extract_config_from_json(j.at("extract"));
    if (static_cast<int>(ds.class_names.size()) != cache.classes)
        throw IoError("patch index class count disagrees with cache header");
    ds.patches = std::move(cache.records);
    // Patches are stored grouped by document in index order.
    std::size_t next = 0;
    for (const auto& jd : j.at("documents")) {
        DocumentEntry d{jd.at("id").get<std::string>(), jd.at("label").get<int>(), {}};
        const auto n = jd.at("patches").get<std::size_t>();
        for (std::size_t i = 0; i < n; ++i, ++next) {
            if (next >= ds.patches.size() || ds.patches[next].meta.source_id != d.id)
                throw IoError("patch index does not match cache records at document " + d.id);
            d.patches.push_back(next);
        }
        ds.docs.push_back(std::move(d));
    }
    if (next != ds.patches.size()) throw IoError("patch cache has records not listed in its index");
    return ds;
}

}  // namespace printattr
