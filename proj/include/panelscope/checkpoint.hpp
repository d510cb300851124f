#pragma once

// Model checkpoint file.
//
//   offset 0   8 bytes   magic "PSCKPT01"
//   offset 8   u32 LE    header length H
//   offset 12  H bytes   UTF-8 JSON header:
//                          format, version, input_dim, hidden_units, outputs,
//                          activation, seed, config (full TrainConfig echo),
//                          standardized (bool)
//   then       f64 LE    W1 (input_dim x hidden_units, row-major)
//                        b1 (hidden_units)
//                        W2 (hidden_units x 6, row-major)
//                        b2 (6)
//                        if standardized: mean (input_dim), scale (input_dim)
//
// Doubles are stored by bit pattern, so save/load is bit-exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>

#include "panelscope/classifier.hpp"
#include "panelscope/features.hpp"

namespace panelscope {

struct Checkpoint {
    MlpParams params;
    TrainConfig config;
    Standardizer standardizer;

    bool operator==(const Checkpoint& o) const {
        return params == o.params && to_json(config) == to_json(o.config) &&
               standardizer.mean == o.standardizer.mean && standardizer.scale == o.standardizer.scale;
    }
};

namespace detail {
inline constexpr char kCheckpointMagic[8] = {'P', 'S', 'C', 'K', 'P', 'T', '0', '1'};

inline void write_f64s(std::ostream& out, std::span<const double> xs) {
    for (double x : xs) write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
}

inline void read_f64s(std::istream& in, std::span<double> xs) {
    for (double& x : xs) x = std::bit_cast<double>(read_le<std::uint64_t>(in));
}
}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    ck.params.check_shapes();
    json header = {{"format", "panelscope-mlp"},
                   {"version", 1},
                   {"input_dim", ck.params.input_dim()},
                   {"hidden_units", ck.params.hidden()},
                   {"outputs", kNumLabels},
                   {"activation", to_string(ck.config.output_activation)},
                   {"seed", ck.config.seed},
                   {"config", to_json(ck.config)},
                   {"standardized", !ck.standardizer.empty()}};
    const std::string h = header.dump();
    auto out = io::open_out(path, std::ios::out | std::ios::trunc | std::ios::binary);
    out.write(detail::kCheckpointMagic, 8);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.size()));
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (auto t : ck.params.tensors()) detail::write_f64s(out, t);
    if (!ck.standardizer.empty()) {
        detail::write_f64s(out, ck.standardizer.mean);
        detail::write_f64s(out, ck.standardizer.scale);
    }
    if (!out) throw Error("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    char magic[8] = {};
    in.read(magic, 8);
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
        throw ParseError(path.string(), "not a panelscope checkpoint");
    auto hlen = detail::read_le<std::uint32_t>(in);
    std::string h(hlen, '\0');
    if (!in.read(h.data(), hlen)) throw ParseError(path.string(), "truncated header");
    json header;
    try {
        header = json::parse(h);
    } catch (const json::exception& e) {
        throw ParseError(path.string(), std::string("bad header: ") + e.what());
    }
    Checkpoint ck;
    ck.config = train_config_from_json(header.at("config"));
    const auto in_dim = header.at("input_dim").get<Eigen::Index>();
    const auto hidden = header.at("hidden_units").get<Eigen::Index>();
    if (header.at("outputs").get<std::size_t>() != kNumLabels)
        throw ShapeError("checkpoint has an unsupported output size");
    ck.params = MlpParams::zeros(in_dim, hidden);
    for (auto t : ck.params.tensors()) detail::read_f64s(in, t);
    if (header.value("standardized", false)) {
        ck.standardizer.mean.resize(static_cast<std::size_t>(in_dim));
        ck.standardizer.scale.resize(static_cast<std::size_t>(in_dim));
        detail::read_f64s(in, ck.standardizer.mean);
        detail::read_f64s(in, ck.standardizer.scale);
    }
    if (!ck.params.all_finite()) throw ValidationError("checkpoint contains non-finite parameters");
    return ck;
}

}  // namespace panelscope
