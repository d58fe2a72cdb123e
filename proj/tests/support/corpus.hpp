#pragma once

// In-memory synthetic corpora: same ids and pixels as generate_corpus
// would write, without touching the disk.

#include "printattr/dataset.hpp"
#include "printattr/synth/synth.hpp"

namespace printattr::testing {

inline PatchDataset synthetic_dataset(const synth::CorpusSpec& spec, const ExtractConfig& cfg) {
    const auto profiles = synth::corpus_profiles(spec);
    std::vector<std::string> names;
    std::vector<DocumentSource> sources;
    for (int k = 0; k < spec.printers; ++k) {
        names.push_back(synth::printer_id(k));
        for (int p = 0; p < spec.pages; ++p)
            sources.push_back({synth::printer_id(k) + "/" + synth::page_name(p), k,
                               [&spec, &profiles, k, p] { return synth::synthesize_page(spec, profiles[k], k, p); }});
    }
    return build_dataset(names, sources, cfg);
}

}  // namespace printattr::testing
