#pragma once

// Command-line front end. Every command is callable in-process through
// run_cli(), which returns the process exit code:
//   0 success, 1 usage error, 2 data error, 3 numerical failure.
//
// Options can also come from a key=value config file (--config, or the
// PRINTATTR_CONFIG environment variable); command-line flags win. Keys are
// long flag names, scoped by a [command] section or a "command." prefix.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "printattr/dataset.hpp"
#include "printattr/error.hpp"
#include "printattr/image_io.hpp"
#include "printattr/nn/model_io.hpp"
#include "printattr/predict.hpp"
#include "printattr/synth/synth.hpp"
#include "printattr/training.hpp"

namespace printattr::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

inline constexpr const char* kConfigEnv = "PRINTATTR_CONFIG";

// Ordered key=value pairs echoed into artifacts.
using Echo = std::vector<std::pair<std::string, std::string>>;

inline std::string echo_block(const std::string& section, const Echo& echo) {
    std::ostringstream os;
    os << "[" << section << "]\n";
    for (const auto& [k, v] : echo) os << k << "=" << v << "\n";
    return os.str();
}

inline nlohmann::json echo_json(const Echo& echo) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : echo) j[k] = v;
    return j;
}

inline std::string join(const std::vector<std::string>& v, const char* sep = ",") {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : sep) + x;
    return s;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

struct ExtractFlags {
    ExtractConfig cfg;
    std::string threshold = "auto";
    std::string letter = "all";
    CLI::Option* patch_opt = nullptr;
    std::map<std::string, CLI::Option*> opts;

    void bind(CLI::App* app) {
        patch_opt = app->add_option("--patch-size", cfg.patch, "letter patch side P")->capture_default_str();
        opts["alpha"] = app->add_option("--alpha", cfg.residual.alpha, "flat-region bound (x local std)")->capture_default_str();
        opts["beta"] = app->add_option("--beta", cfg.residual.beta, "background bound (x local std)")->capture_default_str();
        opts["threshold"] = app->add_option("--threshold", threshold, "binarization threshold 0..255 or auto (Otsu)")->capture_default_str();
        opts["min_area"] = app->add_option("--min-area", cfg.min_area, "smallest glyph component, pixels")->capture_default_str();
        opts["max_area"] = app->add_option("--max-area", cfg.max_area, "largest glyph component, pixels")->capture_default_str();
        opts["letter"] = app->add_option("--letter", letter, "keep only this letter, or all")->capture_default_str();
        opts["template_height"] = app->add_option("--template-height", cfg.template_height, "font height for letter templates")->capture_default_str();
    }

    ExtractConfig resolve(int jobs) const {
        ExtractConfig c = cfg;
        c.jobs = jobs;
        if (threshold == "auto") {
            c.threshold.reset();
        } else {
            try {
                std::size_t used = 0;
                c.threshold = std::stoi(threshold, &used);
                if (used != threshold.size()) throw std::invalid_argument(threshold);
            } catch (const std::exception&) {
                throw ConfigError("--threshold must be an integer or auto, got " + threshold);
            }
        }
        if (letter == "all") {
            c.letter.reset();
        } else {
            if (letter.size() != 1 || !synth::find_glyph(letter[0]))
                throw ConfigError("--letter must be a single font character or all, got " + letter);
            c.letter = letter[0];
        }
        c.validate();
        return c;
    }

    // Fills settings not given on the command line from a stored config.
    ExtractConfig merge(ExtractConfig stored, int jobs) const {
        const ExtractConfig given = resolve(jobs);
        auto set = [&](const char* key) { return opts.at(key)->count() > 0; };
        if (patch_opt->count()) stored.patch = given.patch;
        if (set("alpha")) stored.residual.alpha = given.residual.alpha;
        if (set("beta")) stored.residual.beta = given.residual.beta;
        if (set("threshold")) stored.threshold = given.threshold;
        if (set("min_area")) stored.min_area = given.min_area;
        if (set("max_area")) stored.max_area = given.max_area;
        if (set("letter")) stored.letter = given.letter;
        if (set("template_height")) stored.template_height = given.template_height;
        stored.jobs = jobs;
        stored.validate();
        return stored;
    }
};

inline Echo extract_echo(const ExtractConfig& c) {
    Echo e;
    const auto j = extract_config_json(c);
    for (const auto& [k, v] : j.items())
        e.emplace_back("extract." + k, v.is_string() ? v.get<std::string>() : v.dump());
    return e;
}

inline std::map<std::string, std::string> with_prefix(const Echo& echo) {
    return {echo.begin(), echo.end()};
}

// Recovers an extraction config stored as "extract.*" model metadata.
inline std::optional<ExtractConfig> extract_from_metadata(const std::map<std::string, std::string>& meta) {
    nlohmann::json j;
    for (const auto& [k, v] : meta) {
        if (!k.starts_with("extract.")) continue;
        const auto key = k.substr(8);
        try {
            j[key] = nlohmann::json::parse(v);
        } catch (const nlohmann::json::exception&) {
            j[key] = v;
        }
    }
    if (j.empty()) return std::nullopt;
    try {
        return extract_config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("model metadata has a malformed extraction config: " + std::string(e.what()));
    }
}

struct TrainFlags {
    TrainConfig cfg;
    std::string activation = "relu";
    std::string pool = "max";

    void bind(CLI::App* app) {
        app->add_option("--epochs", cfg.epochs, "training epochs per fold")->capture_default_str();
        app->add_option("--batch-size", cfg.batch_size, "minibatch size")->capture_default_str();
        app->add_option("--lr", cfg.adam.lr0, "initial Adam learning rate")->capture_default_str();
        app->add_option("--decay", cfg.adam.decay, "learning-rate decay, lr_t = lr / (1 + decay t)")->capture_default_str();
        app->add_option("--weight-decay", cfg.adam.weight_decay, "L2 coefficient")->capture_default_str();
        app->add_option("--bn-momentum", cfg.bn_momentum, "batch-norm running-stat momentum")->capture_default_str();
        app->add_option("--bn-eps", cfg.bn_eps, "batch-norm epsilon")->capture_default_str();
        app->add_option("--val-fraction", cfg.val_fraction, "validation share of training documents")->capture_default_str();
        app->add_option("--seed", cfg.seed, "master seed for plans, splits, init and shuffles")->capture_default_str();
    }

    void bind_single(CLI::App* app) {
        app->add_option("--activation", activation, "relu, tanh, elu or prelu")->capture_default_str();
        app->add_option("--pool", pool, "max or avg")->capture_default_str();
    }

    TrainConfig resolve() const {
        TrainConfig c = cfg;
        c.activation = nn::parse_activation(activation);
        c.pool = nn::parse_pool(pool);
        c.validate();
        return c;
    }
};

inline Echo train_echo(const TrainConfig& c) {
    Echo e;
    const auto j = train_config_json(c);
    for (const auto& [k, v] : j.items())
        e.emplace_back("train." + k, v.is_string() ? v.get<std::string>() : v.dump());
    return e;
}

// A patch set from either a dataset directory (extracted on the fly) or a
// patch cache written by `extract`.
struct DataFlags {
    std::string data;
    std::string cache;

    void bind(CLI::App* app) {
        auto* d = app->add_option("--data", data, "dataset root: <root>/<printer>/<page>.png");
        auto* c = app->add_option("--cache", cache, "patch cache written by extract");
        d->excludes(c);
    }

    void require() const {
        if (data.empty() && cache.empty()) throw ConfigError("one of --data or --cache is required");
    }

    PatchDataset load(const ExtractFlags& ef, int jobs, std::optional<int> patch = std::nullopt) const {
        require();
        if (!cache.empty()) {
            auto ds = load_dataset(cache);
            if (patch && *patch != ds.patch)
                throw ShapeError("patch cache holds P=" + std::to_string(ds.patch) + ", requested P=" +
                                 std::to_string(*patch));
            return ds;
        }
        auto cfg = ef.resolve(jobs);
        if (patch) cfg.patch = *patch;
        return build_dataset(std::filesystem::path(data), cfg);
    }

    Echo echo() const { return data.empty() ? Echo{{"cache", cache}} : Echo{{"data", data}}; }
};

inline std::string run_tag(int patch, nn::Activation a, nn::Pool p) {
    return "p" + std::to_string(patch) + "_" + nn::to_string(a) + "_" + nn::to_string(p);
}

inline std::map<std::string, std::string> model_metadata(const Echo& echo, const RunRecord& rec) {
    auto meta = with_prefix(echo);
    meta["fold"] = std::to_string(rec.fold);
    meta["init_seed"] = std::to_string(rec.init_seed);
    meta["best_epoch"] = std::to_string(rec.best_epoch);
    return meta;
}

inline std::string fold_model_name(int fold) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "fold_%02d.ptnn", fold);
    return buf;
}

struct Context {
    std::ostream& out;
    std::ostream& err;
    bool quiet = false;

    EpochCallback progress(const std::string& tag) const {
        if (quiet) return {};
        return [this, tag](int fold, const EpochStats& e) {
            err << tag << " fold " << fold << " epoch " << e.epoch << " train_loss " << format_double(e.train_loss)
                << " val_loss " << format_double(e.val_loss) << " val_acc " << fixed2(e.val_accuracy) << "\n";
        };
    }
};

// synth ---------------------------------------------------------------------

struct SynthCommand {
    synth::CorpusSpec spec;
    std::string out;

    void bind(CLI::App* app) {
        app->add_option("--out", out, "output directory")->required();
        app->add_option("--printers", spec.printers, "number of simulated printers")->capture_default_str();
        app->add_option("--pages", spec.pages, "pages per printer")->capture_default_str();
        app->add_option("--seed", spec.seed, "master seed")->capture_default_str();
        app->add_flag("--force", spec.force, "overwrite a non-empty output directory");
        app->add_option("--tilt", spec.camera.tilt_degrees, "camera tilt about the horizontal axis, degrees")->capture_default_str();
        app->add_option("--tilt-jitter", spec.camera.tilt_jitter, "uniform extra tilt per page, degrees")->capture_default_str();
        app->add_option("--illumination", spec.camera.illumination_scale, "illumination gain")->capture_default_str();
        app->add_option("--blur", spec.camera.blur_sigma, "camera blur sigma, pixels")->capture_default_str();
        app->add_option("--sensor-noise", spec.camera.sensor_noise_sigma, "sensor noise sigma, grey levels")->capture_default_str();
        app->add_option("--focal-scale", spec.camera.focal_scale, "focal length over the longer image side")->capture_default_str();
        app->add_option("--glyph-height", spec.glyph_height, "rendered glyph height, pixels")->capture_default_str();
        app->add_option("--margin", spec.margin, "page margin, pixels")->capture_default_str();
        app->add_option("--line-spacing", spec.line_spacing, "baseline distance, pixels")->capture_default_str();
        app->add_option("--lines", spec.lines_per_page, "text lines per page")->capture_default_str();
        app->add_option("--chars", spec.chars_per_line, "characters per line")->capture_default_str();
    }

    int run(const Context& ctx, int jobs) {
        spec.jobs = jobs;
        synth::generate_corpus(spec, out);
        ctx.out << "wrote " << spec.printers * spec.pages << " pages for " << spec.printers << " printers to " << out
                << "\n";
        return kOk;
    }
};

// extract -------------------------------------------------------------------

struct ExtractCommand {
    ExtractFlags ef;
    std::string data;
    std::string out;

    void bind(CLI::App* app) {
        app->add_option("--data", data, "dataset root: <root>/<printer>/<page>.png")->required();
        app->add_option("--out", out, "patch cache path; the index goes to <out>.json")->required();
        ef.bind(app);
    }

    int run(const Context& ctx, int jobs) {
        const auto ds = build_dataset(std::filesystem::path(data), ef.resolve(jobs));
        save_dataset(out, ds);
        long empty = 0;
        for (const auto& d : ds.docs) empty += d.patches.empty();
        ctx.out << "documents " << ds.docs.size() << " records " << ds.patches.size() << " patch " << ds.patch
                << " classes " << ds.classes() << "\n";
        if (ds.patches.empty()) ctx.err << "warning: no letters were extracted; the cache is empty\n";
        else if (empty > 0) ctx.err << "warning: " << empty << " documents yielded no letters\n";
        return kOk;
    }
};

// xval / train --------------------------------------------------------------

inline FoldPlan load_plan(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read fold plan " + path);
    try {
        return fold_plan_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed fold plan " + path + ": " + e.what());
    }
}

struct XvalCommand {
    ExtractFlags ef;
    TrainFlags tf;
    DataFlags df;
    std::string out;
    std::vector<int> patch_sizes;
    std::vector<std::string> activations{"relu"};
    std::vector<std::string> pools{"max"};
    std::string plan_in;
    bool no_models = false;

    void bind(CLI::App* app) {
        df.bind(app);
        app->add_option("--out", out, "output directory for report, plan and fold models")->required();
        ef.bind(app);
        tf.bind(app);
        app->add_option("--patch-sizes", patch_sizes, "patch-size sweep, e.g. 22,24,26 (needs --data)")->delimiter(',');
        app->add_option("--activations", activations, "activation sweep: relu,tanh,elu,prelu")->delimiter(',')->capture_default_str();
        app->add_option("--pools", pools, "pooling sweep: max,avg")->delimiter(',')->capture_default_str();
        app->add_option("--plan-in", plan_in, "reuse a fold plan written by an earlier run");
        app->add_flag("--no-models", no_models, "do not write per-fold model files");
    }

    struct Run {
        int patch;
        TrainConfig cfg;
        std::vector<RunRecord> records;
    };

    int run(const Context& ctx, int jobs) {
        namespace fs = std::filesystem;
        df.require();
        if (patch_sizes.empty()) patch_sizes.push_back(ef.cfg.patch);
        if (!df.cache.empty() && patch_sizes.size() > 1) throw ConfigError("--patch-sizes sweeps need --data");
        std::vector<TrainConfig> grid;
        for (const auto& a : activations)
            for (const auto& p : pools) {
                TrainFlags t = tf;
                t.activation = a;
                t.pool = p;
                grid.push_back(t.resolve());
            }
        tf.resolve();

        std::optional<FoldPlan> plan;
        if (!plan_in.empty()) plan = load_plan(plan_in);

        Echo base = df.echo();
        std::vector<std::string> sizes;
        for (int p : patch_sizes) sizes.push_back(std::to_string(p));
        std::vector<std::string> acts, pls;
        for (const auto& g : grid) {
            if (std::find(acts.begin(), acts.end(), nn::to_string(g.activation)) == acts.end())
                acts.push_back(nn::to_string(g.activation));
            if (std::find(pls.begin(), pls.end(), nn::to_string(g.pool)) == pls.end()) pls.push_back(nn::to_string(g.pool));
        }
        base.emplace_back("patch_sizes", join(sizes));
        base.emplace_back("activations", join(acts));
        base.emplace_back("pools", join(pls));
        base.emplace_back("plan_in", plan_in.empty() ? "none" : plan_in);

        std::vector<Run> runs;
        std::ostringstream body;
        nlohmann::json jruns = nlohmann::json::array();
        Echo first_echo;
        for (int patch : patch_sizes) {
            const auto ds = df.load(ef, jobs, patch);
            if (ds.patches.empty()) throw InsufficientDataError("no letters were extracted from the dataset");
            if (!plan) plan = make_fold_plan(ds, tf.cfg.seed);
            for (const auto& cfg : grid) {
                const auto tag = run_tag(ds.patch, cfg.activation, cfg.pool);
                Echo echo = extract_echo(ds.config);
                const auto te = train_echo(cfg);
                echo.insert(echo.end(), te.begin(), te.end());
                if (first_echo.empty()) first_echo = echo;
                auto results = run_xval(ds, *plan, cfg, jobs, ctx.progress(tag));
                Run r{ds.patch, cfg, {}};
                body << "== run " << tag << "\n";
                if (grid.size() * patch_sizes.size() > 1) body << echo_block("run", echo);
                for (auto& res : results) {
                    body << format_run_record(res.record, ds.class_names);
                    if (!no_models) {
                        Echo meta = base;
                        meta.insert(meta.end(), echo.begin(), echo.end());
                        const auto path = fs::path(out) / tag / fold_model_name(res.record.fold);
                        fs::create_directories(path.parent_path());
                        nn::save_model(path, res.model, ds.class_names, model_metadata(meta, res.record));
                    }
                    r.records.push_back(std::move(res.record));
                }
                body << format_summary(r.records);
                nlohmann::json jr{{"tag", tag}, {"patch", ds.patch}, {"config", echo_json(echo)}};
                const auto ps = page_stats(r.records), ls = letter_stats(r.records);
                jr["page_accuracy"] = {{"mean", ps.mean}, {"median", ps.median}, {"sigma", ps.sigma}};
                jr["letter_accuracy"] = {{"mean", ls.mean}, {"median", ls.median}, {"sigma", ls.sigma}};
                nn::ModelConfig mc = model_config(cfg, ds.patch, ds.classes());
                nn::Model<float> probe(mc);
                jr["parameters"] = probe.parameter_count();
                auto& folds = jr["folds"] = nlohmann::json::array();
                for (const auto& rec : r.records) folds.push_back(run_record_json(rec));
                jruns.push_back(std::move(jr));
                runs.push_back(std::move(r));
            }
        }

        std::ostringstream report;
        report << "printattr xval report\n";
        Echo header = base;
        if (runs.size() == 1) header.insert(header.end(), first_echo.begin(), first_echo.end());
        report << echo_block("xval", header);
        report << body.str();
        if (runs.size() > 1) report << sweep_table(runs);

        fs::create_directories(out);
        write_text(fs::path(out) / "report.txt", report.str());
        write_text(fs::path(out) / "plan.json", fold_plan_json(*plan).dump(2) + "\n");
        nlohmann::json summary{{"format", "printattr-xval-summary"},
                               {"config", echo_json(header)},
                               {"plan_seed", plan->seed},
                               {"runs", jruns}};
        write_text(fs::path(out) / "summary.json", summary.dump(2) + "\n");
        if (runs.size() > 1) ctx.out << sweep_table(runs);
        else ctx.out << format_summary(runs.front().records);
        return kOk;
    }

    // One row per configuration: the patch-size and activation x pooling tables.
    static std::string sweep_table(const std::vector<Run>& runs) {
        std::ostringstream os;
        os << "sweep\n";
        os << "patch  activation  pool  page_mean  page_median  page_sigma  letter_mean  parameters\n";
        for (const auto& r : runs) {
            const auto ps = page_stats(r.records), ls = letter_stats(r.records);
            nn::Model<float> probe(model_config(r.cfg, r.patch, r.records.front().confusion.classes));
            char buf[160];
            std::snprintf(buf, sizeof buf, "%5d  %10s  %4s  %9.2f  %11.2f  %10.2f  %11.2f  %10zu\n", r.patch,
                          nn::to_string(r.cfg.activation).c_str(), nn::to_string(r.cfg.pool).c_str(), ps.mean,
                          ps.median, ps.sigma, ls.mean, probe.parameter_count());
            os << buf;
        }
        return os.str();
    }
};

struct TrainCommand {
    ExtractFlags ef;
    TrainFlags tf;
    DataFlags df;
    int fold = 0;
    std::string plan_in;
    std::string model_out;
    std::string report;

    void bind(CLI::App* app) {
        df.bind(app);
        ef.bind(app);
        tf.bind(app);
        tf.bind_single(app);
        app->add_option("--fold", fold, "fold index 0..9")->capture_default_str();
        app->add_option("--plan-in", plan_in, "fold plan file; generated from --seed when absent");
        app->add_option("--model-out", model_out, "where to write the trained model")->required();
        app->add_option("--report", report, "write the run record here instead of stdout");
    }

    int run(const Context& ctx, int jobs) {
        const auto cfg = tf.resolve();
        const auto ds = df.load(ef, jobs);
        const auto plan = plan_in.empty() ? make_fold_plan(ds, cfg.seed) : load_plan(plan_in);
        auto res = train_fold(ds, plan, fold, cfg, ctx.progress(run_tag(ds.patch, cfg.activation, cfg.pool)));

        Echo echo = df.echo();
        echo.emplace_back("plan_in", plan_in.empty() ? "none" : plan_in);
        echo.emplace_back("plan_seed", std::to_string(plan.seed));
        const auto xe = extract_echo(ds.config), te = train_echo(cfg);
        echo.insert(echo.end(), xe.begin(), xe.end());
        echo.insert(echo.end(), te.begin(), te.end());
        nn::save_model(model_out, res.model, ds.class_names, model_metadata(echo, res.record));

        const std::string text =
            "printattr train report\n" + echo_block("train", echo) + format_run_record(res.record, ds.class_names);
        if (report.empty()) ctx.out << text;
        else write_text(report, text);
        return kOk;
    }
};

// predict / score -----------------------------------------------------------

inline nn::ModelFile load_model_checked(const std::string& path) {
    auto mf = nn::load_model(path);
    if (mf.class_names.empty()) throw IoError("model " + path + " carries no class names");
    return mf;
}

inline ExtractConfig model_extract_config(const nn::ModelFile& mf, const ExtractFlags& ef, int jobs) {
    const int model_patch = mf.model.config().patch;
    if (ef.patch_opt->count() && ef.cfg.patch != model_patch)
        throw ShapeError("model expects " + std::to_string(model_patch) + "x" + std::to_string(model_patch) +
                         " patches but --patch-size is " + std::to_string(ef.cfg.patch));
    auto stored = extract_from_metadata(mf.metadata).value_or(ExtractConfig{});
    stored.patch = model_patch;
    auto cfg = ef.merge(stored, jobs);
    cfg.patch = model_patch;
    return cfg;
}

struct PredictCommand {
    ExtractFlags ef;
    std::string model;
    std::vector<std::string> images;
    std::string dump_filters;
    std::string report;

    void bind(CLI::App* app) {
        app->add_option("--model", model, "model written by train or xval")->required();
        app->add_option("images", images, "page images to attribute");
        ef.bind(app);
        app->add_option("--dump-filters", dump_filters, "write the first-layer filters as an image");
        app->add_option("--report", report, "write the report here instead of stdout");
    }

    int run(const Context& ctx, int jobs) {
        auto mf = load_model_checked(model);
        const auto cfg = model_extract_config(mf, ef, jobs);
        if (!dump_filters.empty()) write_image(dump_filters, nn::filter_grid(mf.model.conv1()));
        if (images.empty() && dump_filters.empty()) throw ConfigError("no page images given");

        Echo echo{{"model", model}};
        const auto xe = extract_echo(cfg);
        echo.insert(echo.end(), xe.begin(), xe.end());
        std::ostringstream os;
        os << "printattr predict report\n" << echo_block("predict", echo);
        const auto opts = make_extract_options(cfg);
        for (const auto& path : images) {
            auto doc = load_document(path, path);
            const auto patches = page_patches(doc, cfg, opts, -1);
            if (static_cast<int>(patches.size()) > 0 && patches.front().size != mf.model.config().patch)
                throw ShapeError("patch size does not match the model");
            const auto letters = predict_letters(mf.model, patches);
            os << "page " << path << "\n";
            os << "  letters " << letters.size() << "\n";
            if (letters.empty()) {
                os << "  label none\n  diagnostic no letters extracted; page left unattributed\n";
                continue;
            }
            const auto v = vote_page(letters);
            os << "  label " << mf.class_names.at(static_cast<std::size_t>(v.label)) << "\n";
            os << "  votes\n";
            for (std::size_t k = 0; k < v.counts.size(); ++k) {
                char buf[160];
                std::snprintf(buf, sizeof buf, "    %-16s %6d  %6.2f%%  prob_sum %.4f\n", mf.class_names[k].c_str(),
                              v.counts[k], 100.0 * v.counts[k] / static_cast<double>(letters.size()), v.prob_sums[k]);
                os << buf;
            }
        }
        if (report.empty()) ctx.out << os.str();
        else write_text(report, os.str());
        return kOk;
    }
};

struct ScoreCommand {
    ExtractFlags ef;
    DataFlags df;
    std::string model;
    std::string report;

    void bind(CLI::App* app) {
        app->add_option("--model", model, "model written by train or xval")->required();
        df.bind(app);
        ef.bind(app);
        app->add_option("--report", report, "write the report here instead of stdout");
    }

    int run(const Context& ctx, int jobs) {
        auto mf = load_model_checked(model);
        const int model_patch = mf.model.config().patch;
        PatchDataset ds;
        if (!df.cache.empty()) {
            ds = df.load(ef, jobs, model_patch);
        } else {
            df.require();
            ds = build_dataset(std::filesystem::path(df.data), model_extract_config(mf, ef, jobs));
        }
        if (ds.class_names != mf.class_names)
            throw InsufficientDataError("dataset printers (" + join(ds.class_names) + ") differ from the model's (" +
                                        join(mf.class_names) + ")");
        std::vector<std::string> ids;
        for (const auto& d : ds.docs) ids.push_back(d.id);
        const auto sc = score(predict_documents(mf.model, ds, ids), ds.classes());

        Echo echo{{"model", model}};
        const auto de = df.echo(), xe = extract_echo(ds.config);
        echo.insert(echo.end(), de.begin(), de.end());
        echo.insert(echo.end(), xe.begin(), xe.end());
        std::ostringstream os;
        os << "printattr score report\n" << echo_block("score", echo);
        os << "letters " << sc.letters << " correct " << sc.correct_letters << " letter_accuracy "
           << fixed2(sc.letter_accuracy()) << "\n";
        os << "pages " << sc.pages << " correct " << sc.correct_pages << " page_accuracy " << fixed2(sc.page_accuracy())
           << "\n";
        os << format_confusion(sc.confusion, ds.class_names);
        for (const auto& d : sc.diagnostics) os << "diagnostic " << d << "\n";
        if (report.empty()) ctx.out << os.str();
        else write_text(report, os.str());
        return kOk;
    }
};

// entry point ----------------------------------------------------------------

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kUsage;
    if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
    return kData;
}

// `args` excludes the program name.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"printattr: printer attribution from photographed text pages"};
    app.name("printattr");
    app.set_config("--config", "", "key=value config file; flags given on the command line win")->envname(kConfigEnv);
    app.require_subcommand(1);
    int jobs = 1;
    bool quiet = false;
    app.add_option("--jobs,-j", jobs, "worker threads; 1 is the sequential bit-exact mode")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_flag("--quiet,-q", quiet, "no per-epoch progress on stderr");

    SynthCommand synth_cmd;
    ExtractCommand extract_cmd;
    XvalCommand xval_cmd;
    TrainCommand train_cmd;
    PredictCommand predict_cmd;
    ScoreCommand score_cmd;
    auto* s_synth = app.add_subcommand("synth", "generate a synthetic print-and-capture corpus");
    auto* s_extract = app.add_subcommand("extract", "extract two-channel letter patches into a cache");
    auto* s_xval = app.add_subcommand("xval", "5x2 cross-validation with per-fold models and a report");
    auto* s_train = app.add_subcommand("train", "train a single fold of the cross-validation plan");
    auto* s_predict = app.add_subcommand("predict", "attribute page images with a saved model");
    auto* s_score = app.add_subcommand("score", "score a saved model on a labelled dataset");
    synth_cmd.bind(s_synth);
    extract_cmd.bind(s_extract);
    xval_cmd.bind(s_xval);
    train_cmd.bind(s_train);
    predict_cmd.bind(s_predict);
    score_cmd.bind(s_score);

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kOk : kUsage;
    }

    const Context ctx{out, err, quiet};
    try {
        if (s_synth->parsed()) return synth_cmd.run(ctx, jobs);
        if (s_extract->parsed()) return extract_cmd.run(ctx, jobs);
        if (s_xval->parsed()) return xval_cmd.run(ctx, jobs);
        if (s_train->parsed()) return train_cmd.run(ctx, jobs);
        if (s_predict->parsed()) return predict_cmd.run(ctx, jobs);
        if (s_score->parsed()) return score_cmd.run(ctx, jobs);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kUsage;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run_cli(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace printattr::cli
