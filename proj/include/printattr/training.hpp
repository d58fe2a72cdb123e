#pragma once

// 5x2 cross-validation protocol: seeded fold plans, per-fold training with
// whole-document validation and best-validation-loss checkpointing, and
// fold-aggregated statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "printattr/dataset.hpp"
#include "printattr/error.hpp"
#include "printattr/nn/adam.hpp"
#include "printattr/nn/model.hpp"
#include "printattr/predict.hpp"
#include "printattr/rng.hpp"

namespace printattr {

inline constexpr int kFoldIterations = 5;

// Per-printer partition of document ids for one iteration.
struct FoldIteration {
    std::vector<std::vector<std::string>> set_a, set_b;
};

struct FoldPlan {
    std::uint64_t seed = 0;
    std::vector<std::string> printers;
    std::vector<FoldIteration> iterations;

    int folds() const { return 2 * static_cast<int>(iterations.size()); }
};

struct FoldSplit {
    std::vector<std::vector<std::string>> train, test;  // per printer
};

// Fold 2j trains on set A of iteration j and tests on set B; fold 2j+1 swaps.
inline FoldSplit fold_split(const FoldPlan& plan, int fold) {
    if (fold < 0 || fold >= plan.folds())
        throw ConfigError("fold " + std::to_string(fold) + " outside [0, " + std::to_string(plan.folds()) + ")");
    const auto& it = plan.iterations[static_cast<std::size_t>(fold / 2)];
    return fold % 2 == 0 ? FoldSplit{it.set_a, it.set_b} : FoldSplit{it.set_b, it.set_a};
}

// Each iteration shuffles every printer's documents independently and puts
// the first floor(n/2) in set A (12 of 25, 5 of 10, 2 of 4).
inline FoldPlan make_fold_plan(const std::vector<std::string>& printers,
                               const std::vector<std::vector<std::string>>& docs, std::uint64_t seed,
                               int iterations = kFoldIterations) {
    if (printers.size() != docs.size()) throw ConfigError("make_fold_plan: printer and document lists differ in length");
    if (docs.empty()) throw InsufficientDataError("make_fold_plan: no printers");
    const std::size_t n = docs.front().size();
    for (std::size_t k = 0; k < docs.size(); ++k) {
        if (docs[k].size() < 2)
            throw InsufficientDataError("make_fold_plan: printer " + printers[k] + " has fewer than 2 documents");
        if (docs[k].size() != n)
            throw ConfigError("make_fold_plan: printers must have equal document counts (" + printers[k] + " has " +
                              std::to_string(docs[k].size()) + ", expected " + std::to_string(n) + ")");
    }
    FoldPlan plan{seed, printers, {}};
    for (int i = 0; i < iterations; ++i) {
        FoldIteration it;
        for (std::size_t k = 0; k < docs.size(); ++k) {
            auto ids = docs[k];
            std::sort(ids.begin(), ids.end());
            Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i), k}));
            rng.shuffle(ids);
            const auto half = static_cast<std::ptrdiff_t>(ids.size() / 2);
            std::vector<std::string> a(ids.begin(), ids.begin() + half), b(ids.begin() + half, ids.end());
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            it.set_a.push_back(std::move(a));
            it.set_b.push_back(std::move(b));
        }
        plan.iterations.push_back(std::move(it));
    }
    return plan;
}

inline FoldPlan make_fold_plan(const PatchDataset& ds, std::uint64_t seed, int iterations = kFoldIterations) {
    std::vector<std::vector<std::string>> docs(ds.class_names.size());
    for (const auto& d : ds.docs) docs.at(static_cast<std::size_t>(d.label)).push_back(d.id);
    return make_fold_plan(ds.class_names, docs, seed, iterations);
}

inline nlohmann::json fold_plan_json(const FoldPlan& plan) {
    nlohmann::json j;
    j["format"] = "printattr-fold-plan";
    j["version"] = 1;
    j["seed"] = plan.seed;
    j["printers"] = plan.printers;
    auto& its = j["iterations"] = nlohmann::json::array();
    for (const auto& it : plan.iterations) its.push_back({{"set_a", it.set_a}, {"set_b", it.set_b}});
    return j;
}

inline FoldPlan fold_plan_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "printattr-fold-plan") throw IoError("not a fold plan document");
    FoldPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.printers = j.at("printers").get<std::vector<std::string>>();
    for (const auto& it : j.at("iterations")) {
        FoldIteration fi;
        fi.set_a = it.at("set_a").get<std::vector<std::vector<std::string>>>();
        fi.set_b = it.at("set_b").get<std::vector<std::vector<std::string>>>();
        if (fi.set_a.size() != plan.printers.size() || fi.set_b.size() != plan.printers.size())
            throw IoError("fold plan iteration does not cover every printer");
        plan.iterations.push_back(std::move(fi));
    }
    return plan;
}

struct ValidationSplit {
    std::vector<std::vector<std::string>> train, val;  // per printer
};

// Holds out max(1, round(fraction * n)) whole documents per printer.
inline ValidationSplit split_validation(const std::vector<std::vector<std::string>>& train_docs, double fraction,
                                        std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 0.5)) throw ConfigError("val_fraction must lie in (0, 0.5)");
    ValidationSplit out;
    for (std::size_t k = 0; k < train_docs.size(); ++k) {
        const auto& docs = train_docs[k];
        if (docs.size() < 2)
            throw InsufficientDataError("split_validation: printer " + std::to_string(k) +
                                        " has fewer than 2 training documents");
        const auto n_val = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(fraction * static_cast<double>(docs.size()))), 1, docs.size() - 1);
        auto ids = docs;
        Rng rng(derive_seed(seed, {k}));
        rng.shuffle(ids);
        std::vector<std::string> val(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
        std::vector<std::string> tr(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
        std::sort(val.begin(), val.end());
        std::sort(tr.begin(), tr.end());
        out.val.push_back(std::move(val));
        out.train.push_back(std::move(tr));
    }
    return out;
}

struct TrainConfig {
    int epochs = 50;
    int batch_size = 100;
    nn::AdamConfig adam;
    nn::Activation activation = nn::Activation::ReLU;
    nn::Pool pool = nn::Pool::Max;
    double bn_eps = 1e-5;
    double bn_momentum = 0.99;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch norm needs two samples)");
        if (!(val_fraction > 0.0 && val_fraction < 0.5)) throw ConfigError("val_fraction must lie in (0, 0.5)");
        if (!(adam.lr0 > 0)) throw ConfigError("learning rate must be positive");
        if (!(bn_momentum >= 0 && bn_momentum < 1)) throw ConfigError("bn_momentum must lie in [0, 1)");
    }
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0;
    double val_loss = 0;
    double val_accuracy = 0;  // letter level, percent
};

struct RunRecord {
    int fold = 0;
    std::vector<std::string> train_docs, val_docs, test_docs;
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    double best_val_loss = 0;
    std::uint64_t init_seed = 0;
    long test_letters = 0;
    long test_pages = 0;
    double letter_accuracy = 0;
    double page_accuracy = 0;
    ConfusionMatrix confusion;
    std::vector<std::string> diagnostics;
};

class PoisonedTrainingError : public NumericalError {
public:
    PoisonedTrainingError(const std::string& what, RunRecord partial)
        : NumericalError(what), partial_(std::move(partial)) {}
    const RunRecord& partial() const { return partial_; }

private:
    RunRecord partial_;
};

struct FoldResult {
    nn::Model<float> model;
    RunRecord record;
    Score test;
};

namespace detail {

inline std::vector<std::string> flatten_ids(const std::vector<std::vector<std::string>>& per_printer) {
    std::vector<std::string> out;
    for (const auto& v : per_printer) out.insert(out.end(), v.begin(), v.end());
    return out;
}

inline std::map<std::string, const DocumentEntry*> doc_index(const PatchDataset& ds) {
    std::map<std::string, const DocumentEntry*> idx;
    for (const auto& d : ds.docs) idx[d.id] = &d;
    return idx;
}

inline std::vector<const TwoChannelPatch*> gather(const PatchDataset& ds,
                                                  const std::map<std::string, const DocumentEntry*>& idx,
                                                  const std::vector<std::string>& ids) {
    std::vector<const TwoChannelPatch*> out;
    for (const auto& id : ids) {
        const auto it = idx.find(id);
        if (it == idx.end()) throw InsufficientDataError("document " + id + " is not in the patch set");
        for (auto p : it->second->patches) out.push_back(&ds.patches[p]);
    }
    return out;
}

}  // namespace detail

struct Evaluation {
    double loss = 0;
    double accuracy = 0;  // percent
};

// Mean cross-entropy and letter accuracy in infer mode.
inline Evaluation evaluate(nn::Model<float>& model, std::span<const TwoChannelPatch* const> patches,
                           std::size_t batch = 256) {
    if (patches.empty()) throw InsufficientDataError("evaluate: no patches");
    model.set_mode(nn::BnMode::Infer);
    const std::size_t c = static_cast<std::size_t>(model.config().classes);
    double loss = 0;
    long correct = 0;
    for (std::size_t start = 0; start < patches.size(); start += batch) {
        const std::size_t n = std::min(batch, patches.size() - start);
        const auto probs = model.predict_proba(make_batch(patches.subspan(start, n), model.config().patch));
        for (std::size_t i = 0; i < n; ++i) {
            const float* row = probs.data() + i * c;
            const int label = patches[start + i]->label;
            loss -= std::log(std::max(static_cast<double>(row[label]), 1e-30));
            correct += argmax(std::span<const float>(row, c)) == label;
        }
    }
    return {loss / static_cast<double>(patches.size()), 100.0 * static_cast<double>(correct) / patches.size()};
}

inline std::vector<DocumentPredictions> predict_documents(nn::Model<float>& model, const PatchDataset& ds,
                                                          const std::vector<std::string>& ids) {
    const auto idx = detail::doc_index(ds);
    std::vector<DocumentPredictions> out;
    for (const auto& id : ids) {
        const auto it = idx.find(id);
        if (it == idx.end()) throw InsufficientDataError("document " + id + " is not in the patch set");
        std::vector<const TwoChannelPatch*> ptrs;
        for (auto p : it->second->patches) ptrs.push_back(&ds.patches[p]);
        out.push_back({id, it->second->label, predict_letters(model, std::span<const TwoChannelPatch* const>(ptrs))});
    }
    return out;
}

inline nn::ModelConfig model_config(const TrainConfig& cfg, int patch, int classes) {
    nn::ModelConfig mc;
    mc.patch = patch;
    mc.classes = classes;
    mc.activation = cfg.activation;
    mc.pool = cfg.pool;
    mc.bn_eps = cfg.bn_eps;
    mc.bn_momentum = cfg.bn_momentum;
    return mc;
}

using EpochCallback = std::function<void(int fold, const EpochStats&)>;

inline FoldResult train_fold(const PatchDataset& ds, const FoldPlan& plan, int fold, const TrainConfig& cfg,
                             const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (plan.printers != ds.class_names) throw ConfigError("fold plan printers do not match the dataset classes");
    const auto split = fold_split(plan, fold);
    const std::uint64_t fold_id = static_cast<std::uint64_t>(fold);
    const auto vs = split_validation(split.train, cfg.val_fraction, derive_seed(cfg.seed, {fold_id, 0x76616cULL}));

    RunRecord rec;
    rec.fold = fold;
    rec.train_docs = detail::flatten_ids(vs.train);
    rec.val_docs = detail::flatten_ids(vs.val);
    rec.test_docs = detail::flatten_ids(split.test);
    rec.init_seed = derive_seed(cfg.seed, {fold_id, 0x696e6974ULL});

    const auto idx = detail::doc_index(ds);
    const auto train = detail::gather(ds, idx, rec.train_docs);
    const auto val = detail::gather(ds, idx, rec.val_docs);
    if (train.size() < 2) throw InsufficientDataError("fold " + std::to_string(fold) + ": fewer than 2 training patches");
    if (val.empty()) throw InsufficientDataError("fold " + std::to_string(fold) + ": validation documents have no patches");

    nn::Model<float> model(model_config(cfg, ds.patch, ds.classes()));
    model.initialize(rec.init_seed);
    nn::Model<float> best = model;
    auto params = model.parameters();
    auto adam = nn::make_adam_state<float>(params, cfg.adam);

    std::vector<std::size_t> order(train.size());
    std::vector<int> labels;
    std::vector<const TwoChannelPatch*> batch;
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, {fold_id, static_cast<std::uint64_t>(epoch), 0x73687566ULL}));
        rng.shuffle(order);
        double loss_sum = 0;
        std::size_t seen = 0;
        model.set_mode(nn::BnMode::Train);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t n = std::min(bs, order.size() - start);
            if (n < 2) break;  // batch norm cannot train on a single sample
            batch.clear();
            labels.clear();
            for (std::size_t i = 0; i < n; ++i) {
                batch.push_back(train[order[start + i]]);
                labels.push_back(train[order[start + i]]->label);
            }
            const float loss = model.loss_and_gradients(make_batch(batch, ds.patch), labels);
            if (!std::isfinite(loss)) {
                throw PoisonedTrainingError("fold " + std::to_string(fold) + " epoch " + std::to_string(epoch) +
                                                ": non-finite training loss",
                                            rec);
            }
            try {
                nn::adam_step<float>(params, adam);
            } catch (const NumericalError& e) {
                throw PoisonedTrainingError(e.what(), rec);
            }
            loss_sum += static_cast<double>(loss) * static_cast<double>(n);
            seen += n;
        }
        const auto ev = evaluate(model, val);
        if (!std::isfinite(ev.loss))
            throw PoisonedTrainingError("fold " + std::to_string(fold) + ": non-finite validation loss", rec);
        const EpochStats es{epoch, seen ? loss_sum / static_cast<double>(seen) : 0.0, ev.loss, ev.accuracy};
        rec.epochs.push_back(es);
        if (epoch == 1 || ev.loss < rec.best_val_loss) {
            rec.best_val_loss = ev.loss;
            rec.best_epoch = epoch;
            best.copy_state_from(model);
        }
        if (on_epoch) on_epoch(fold, es);
    }

    best.set_mode(nn::BnMode::Infer);
    Score sc = score(predict_documents(best, ds, rec.test_docs), ds.classes());
    rec.test_letters = sc.letters;
    rec.test_pages = sc.pages;
    rec.letter_accuracy = sc.letter_accuracy();
    rec.page_accuracy = sc.page_accuracy();
    rec.confusion = sc.confusion;
    rec.diagnostics = sc.diagnostics;
    return {std::move(best), std::move(rec), std::move(sc)};
}

// Runs the given folds (all folds when empty), `jobs` at a time. Each fold
// owns its RNG streams, so results do not depend on the job count.
inline std::vector<FoldResult> run_xval(const PatchDataset& ds, const FoldPlan& plan, const TrainConfig& cfg, int jobs = 1,
                                        const EpochCallback& on_epoch = {}, std::vector<int> folds = {}) {
    if (folds.empty())
        for (int f = 0; f < plan.folds(); ++f) folds.push_back(f);
    std::vector<std::optional<FoldResult>> slots(folds.size());
    std::mutex cb_mutex;
    EpochCallback guarded;
    if (on_epoch)
        guarded = [&](int fold, const EpochStats& es) {
            std::lock_guard lock(cb_mutex);
            on_epoch(fold, es);
        };
    parallel_for(folds.size(), jobs, [&](std::size_t i) { slots[i] = train_fold(ds, plan, folds[i], cfg, guarded); });
    std::vector<FoldResult> out;
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

struct Stats {
    double mean = 0, median = 0, sigma = 0;
    std::size_t n = 0;
};

// Sample standard deviation (n - 1); lower-middle median for even counts.
inline Stats aggregate_stats(std::vector<double> values) {
    if (values.empty()) throw InsufficientDataError("aggregate_stats: no values");
    Stats s;
    s.n = values.size();
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.sigma = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    std::sort(values.begin(), values.end());
    s.median = values[(s.n - 1) / 2];
    return s;
}

inline Stats page_stats(const std::vector<RunRecord>& records) {
    std::vector<double> v;
    for (const auto& r : records) v.push_back(r.page_accuracy);
    return aggregate_stats(v);
}

inline Stats letter_stats(const std::vector<RunRecord>& records) {
    std::vector<double> v;
    for (const auto& r : records) v.push_back(r.letter_accuracy);
    return aggregate_stats(v);
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

inline std::string format_run_record(const RunRecord& r, const std::vector<std::string>& class_names) {
    std::ostringstream os;
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
        return s;
    };
    os << "fold " << r.fold << "\n";
    os << "  train_docs " << join(r.train_docs) << "\n";
    os << "  val_docs " << join(r.val_docs) << "\n";
    os << "  test_docs " << join(r.test_docs) << "\n";
    os << "  init_seed " << r.init_seed << "\n";
    for (const auto& e : r.epochs)
        os << "  epoch " << e.epoch << " train_loss " << format_double(e.train_loss) << " val_loss "
           << format_double(e.val_loss) << " val_acc " << fixed2(e.val_accuracy) << "\n";
    os << "  best_epoch " << r.best_epoch << " best_val_loss " << format_double(r.best_val_loss) << "\n";
    os << "  test_letters " << r.test_letters << " test_pages " << r.test_pages << "\n";
    os << "  letter_accuracy " << fixed2(r.letter_accuracy) << "\n";
    os << "  page_accuracy " << fixed2(r.page_accuracy) << "\n";
    std::istringstream cm(format_confusion(r.confusion, class_names));
    for (std::string line; std::getline(cm, line);) os << "  " << line << "\n";
    for (const auto& d : r.diagnostics) os << "  diagnostic " << d << "\n";
    return os.str();
}

// Fold rows followed by the mean / median / sigma table.
inline std::string format_summary(const std::vector<RunRecord>& records) {
    std::ostringstream os;
    os << "fold  page_acc  letter_acc  best_epoch\n";
    for (const auto& r : records) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%4d  %8.2f  %10.2f  %10d\n", r.fold, r.page_accuracy, r.letter_accuracy,
                      r.best_epoch);
        os << buf;
    }
    const auto ps = page_stats(records), ls = letter_stats(records);
    os << "metric            mean  median   sigma\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "page_accuracy   %6.2f  %6.2f  %6.2f\n", ps.mean, ps.median, ps.sigma);
    os << buf;
    std::snprintf(buf, sizeof buf, "letter_accuracy %6.2f  %6.2f  %6.2f\n", ls.mean, ls.median, ls.sigma);
    os << buf;
    return os.str();
}

inline nlohmann::json run_record_json(const RunRecord& r) {
    nlohmann::json j;
    j["fold"] = r.fold;
    j["train_docs"] = r.train_docs;
    j["val_docs"] = r.val_docs;
    j["test_docs"] = r.test_docs;
    j["init_seed"] = r.init_seed;
    auto& ep = j["epochs"] = nlohmann::json::array();
    for (const auto& e : r.epochs)
        ep.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"val_accuracy", e.val_accuracy}});
    j["best_epoch"] = r.best_epoch;
    j["best_val_loss"] = r.best_val_loss;
    j["test_letters"] = r.test_letters;
    j["test_pages"] = r.test_pages;
    j["letter_accuracy"] = r.letter_accuracy;
    j["page_accuracy"] = r.page_accuracy;
    j["confusion"] = {{"classes", r.confusion.classes},
                      {"counts", r.confusion.counts},
                      {"unattributed", r.confusion.unattributed}};
    j["diagnostics"] = r.diagnostics;
    return j;
}

inline nlohmann::json train_config_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr0", c.adam.lr0},
            {"decay", c.adam.decay},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"adam_eps", c.adam.eps},
            {"weight_decay", c.adam.weight_decay},
            {"activation", nn::to_string(c.activation)},
            {"pool", nn::to_string(c.pool)},
            {"bn_eps", c.bn_eps},
            {"bn_momentum", c.bn_momentum},
            {"val_fraction", c.val_fraction},
            {"seed", c.seed}};
}

}  // namespace printattr
