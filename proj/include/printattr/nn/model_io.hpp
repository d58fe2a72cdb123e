#pragma once

// "PTNN" model container.
//
//   magic "PTNN" | version u16 | P u16 | C u16 | activation u8 | pool u8
//   blocks: layer id u8 | tensor count u8 | per tensor: rank u8, dims u32[rank], f32 LE data
//   trailer block id 0xFF: u32 length + UTF-8 "key=value" lines (class names, BN constants, run config)
//
// Layer ids: 1 conv1, 2 bn1, 3 conv2, 4 bn2, 5 dense1, 6 dense2, 7 PReLU slopes.
// BN blocks carry gamma, beta, running mean, running variance.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "printattr/binary_io.hpp"
#include "printattr/image.hpp"
#include "printattr/nn/model.hpp"

namespace printattr::nn {

inline constexpr std::uint16_t kModelFormatVersion = 1;

struct ModelFile {
    Model<float> model;
    std::vector<std::string> class_names;
    std::map<std::string, std::string> metadata;
};

namespace detail {

inline void put_tensor(std::ostream& out, const Tensor<float>& t) {
    bin::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    bin::put_floats(out, t.span());
}

inline void get_tensor(std::istream& in, Tensor<float>& t, const std::string& what) {
    const auto rank = bin::get<std::uint8_t>(in);
    Shape s(rank);
    for (auto& d : s) d = bin::get<std::uint32_t>(in);
    if (s != t.shape())
        throw ShapeError("model file: " + what + " has shape " + shape_str(s) + ", architecture expects " +
                         shape_str(t.shape()));
    bin::get_floats(in, t.span());
}

inline void put_block(std::ostream& out, std::uint8_t id, const std::vector<const Tensor<float>*>& ts) {
    bin::put<std::uint8_t>(out, id);
    bin::put<std::uint8_t>(out, static_cast<std::uint8_t>(ts.size()));
    for (const auto* t : ts) put_tensor(out, *t);
}

}  // namespace detail

inline void save_model(const std::filesystem::path& path, Model<float>& model,
                       const std::vector<std::string>& class_names,
                       const std::map<std::string, std::string>& metadata = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write model " + path.string());
    const auto& cfg = model.config();
    bin::put_magic(out, "PTNN");
    bin::put<std::uint16_t>(out, kModelFormatVersion);
    bin::put<std::uint16_t>(out, static_cast<std::uint16_t>(cfg.patch));
    bin::put<std::uint16_t>(out, static_cast<std::uint16_t>(cfg.classes));
    bin::put<std::uint8_t>(out, static_cast<std::uint8_t>(cfg.activation));
    bin::put<std::uint8_t>(out, static_cast<std::uint8_t>(cfg.pool));

    auto& bn1 = model.bn1();
    auto& bn2 = model.bn2();
    detail::put_block(out, 1, {&model.conv1().weights, &model.conv1().bias});
    detail::put_block(out, 2, {&bn1.gamma, &bn1.beta, &bn1.running_mean, &bn1.running_var});
    detail::put_block(out, 3, {&model.conv2().weights, &model.conv2().bias});
    detail::put_block(out, 4, {&bn2.gamma, &bn2.beta, &bn2.running_mean, &bn2.running_var});
    detail::put_block(out, 5, {&model.dense1().weights, &model.dense1().bias});
    detail::put_block(out, 6, {&model.dense2().weights, &model.dense2().bias});
    if (cfg.activation == Activation::PReLU) {
        auto params = model.parameters();
        std::vector<const Tensor<float>*> slopes;
        for (auto& p : params)
            if (p.name.ends_with(".slopes")) slopes.push_back(p.value);
        detail::put_block(out, 7, slopes);
    }

    std::ostringstream meta;
    meta << "bn_eps=" << cfg.bn_eps << "\n";
    meta << "bn_momentum=" << cfg.bn_momentum << "\n";
    for (std::size_t i = 0; i < class_names.size(); ++i) meta << "class." << i << "=" << class_names[i] << "\n";
    for (const auto& [k, v] : metadata) meta << k << "=" << v << "\n";
    const std::string text = meta.str();
    bin::put<std::uint8_t>(out, 0xFF);
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("failed writing model " + path.string());
}

inline ModelFile load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model " + path.string());
    bin::expect_magic(in, "PTNN", path.string());
    const auto version = bin::get<std::uint16_t>(in);
    if (version != kModelFormatVersion) throw IoError("model file: unsupported version " + std::to_string(version));
    ModelConfig cfg;
    cfg.patch = bin::get<std::uint16_t>(in);
    cfg.classes = bin::get<std::uint16_t>(in);
    const auto act = bin::get<std::uint8_t>(in);
    const auto pool = bin::get<std::uint8_t>(in);
    if (act > 3 || pool > 1) throw IoError("model file: unknown activation/pool id");
    cfg.activation = static_cast<Activation>(act);
    cfg.pool = static_cast<Pool>(pool);

    ModelFile mf{Model<float>(cfg), {}, {}};
    Model<float>& m = mf.model;
    auto& bn1 = m.bn1();
    auto& bn2 = m.bn2();
    std::vector<Tensor<float>*> slopes;
    for (auto& p : m.parameters())
        if (p.name.ends_with(".slopes")) slopes.push_back(p.value);

    for (;;) {
        const auto id = bin::get<std::uint8_t>(in);
        if (id == 0xFF) break;
        const auto count = bin::get<std::uint8_t>(in);
        std::vector<Tensor<float>*> dst;
        switch (id) {
            case 1: dst = {&m.conv1().weights, &m.conv1().bias}; break;
            case 2: dst = {&bn1.gamma, &bn1.beta, &bn1.running_mean, &bn1.running_var}; break;
            case 3: dst = {&m.conv2().weights, &m.conv2().bias}; break;
            case 4: dst = {&bn2.gamma, &bn2.beta, &bn2.running_mean, &bn2.running_var}; break;
            case 5: dst = {&m.dense1().weights, &m.dense1().bias}; break;
            case 6: dst = {&m.dense2().weights, &m.dense2().bias}; break;
            case 7: dst = slopes; break;
            default: throw IoError("model file: unknown layer id " + std::to_string(id));
        }
        if (count != dst.size()) throw IoError("model file: layer " + std::to_string(id) + " tensor count mismatch");
        for (auto* t : dst) detail::get_tensor(in, *t, "layer " + std::to_string(id));
    }

    const auto len = bin::get<std::uint32_t>(in);
    std::string text(len, '\0');
    if (!in.read(text.data(), len)) throw IoError("model file: truncated metadata");
    std::istringstream lines(text);
    std::string line;
    std::map<int, std::string> classes;
    while (std::getline(lines, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key.starts_with("class.")) {
            classes[std::stoi(key.substr(6))] = value;
        } else if (key == "bn_eps") {
            bn1.eps = bn2.eps = std::stof(value);
        } else if (key == "bn_momentum") {
            bn1.momentum = bn2.momentum = std::stof(value);
        } else {
            mf.metadata[key] = value;
        }
    }
    for (auto& [i, name] : classes) mf.class_names.push_back(name);
    m.set_mode(BnMode::Infer);
    return mf;
}

// First-layer filters as an image: one 5 x 10 grid per input channel, side by
// side, each 3x3 tap drawn as a `cell` x `cell` block. Intensities are
// min/max-scaled over all taps.
inline GrayImage filter_grid(const ConvLayer<float>& conv, int cell = 8) {
    const int cin = static_cast<int>(conv.in_channels()), cout = static_cast<int>(conv.out_channels());
    const int grid_cols = 10, grid_rows = (cout + grid_cols - 1) / grid_cols;
    const int gap = 2, tile = 3 * cell + gap;
    const int channel_w = grid_cols * tile + gap;
    GrayImage img(grid_rows * tile + gap, cin * channel_w + (cin - 1) * 2 * gap, 255);
    const auto [lo, hi] = std::minmax_element(conv.weights.vec().begin(), conv.weights.vec().end());
    const float span = std::max(*hi - *lo, 1e-12f);
    for (int ch = 0; ch < cin; ++ch)
        for (int f = 0; f < cout; ++f) {
            const int oy = gap + (f / grid_cols) * tile;
            const int ox = ch * (channel_w + 2 * gap) + gap + (f % grid_cols) * tile;
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const float w = conv.weights[((static_cast<std::size_t>(ky) * 3 + kx) * cin + ch) * cout + f];
                    const auto v = static_cast<std::uint8_t>(std::lround(255.0f * (w - *lo) / span));
                    for (int y = 0; y < cell; ++y)
                        for (int x = 0; x < cell; ++x) img(oy + ky * cell + y, ox + kx * cell + x) = v;
                }
        }
    return img;
}

}  // namespace printattr::nn
