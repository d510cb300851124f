#pragma once

// Panel descriptor ingestion. Descriptors are produced outside the toolkit
// (e.g. penultimate-layer activations of an image network) and stored one
// panel per line:
//
//   dim=<N>
//   <book_id> <page_index> <panel_index> v1 ... vN
//
// A binary form is also supported (see save_features_binary).

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "panelscope/corpus.hpp"
#include "panelscope/error.hpp"

namespace panelscope {

class FeatureStore {
public:
    FeatureStore() = default;
    explicit FeatureStore(std::size_t dim) : dim_(dim) {
        if (dim == 0) throw ValidationError("feature dim must be positive");
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return vectors_.size(); }
    bool contains(const PanelKey& k) const { return vectors_.count(k) != 0; }

    void insert(PanelKey key, std::vector<double> v) {
        if (v.size() != dim_)
            throw ValidationError("descriptor " + key.str() + " has length " +
                                  std::to_string(v.size()) + ", expected dim " + std::to_string(dim_));
        for (double x : v)
            if (!std::isfinite(x)) throw ValidationError("descriptor " + key.str() + " has a non-finite component");
        auto label = key.str();
        if (!vectors_.emplace(std::move(key), std::move(v)).second)
            throw ValidationError("duplicate descriptor key " + label);
    }

    const std::vector<double>& at(const PanelKey& k) const {
        auto it = vectors_.find(k);
        if (it == vectors_.end()) throw NotFoundError("no descriptor for panel " + k.str());
        return it->second;
    }

    const std::map<PanelKey, std::vector<double>>& vectors() const { return vectors_; }

    bool operator==(const FeatureStore&) const = default;

private:
    std::size_t dim_ = 0;
    std::map<PanelKey, std::vector<double>> vectors_;
};

namespace detail {

inline constexpr char kBinaryMagic[4] = {'P', 'S', 'F', 'B'};

template <typename T>
T read_le(std::istream& in) {
    unsigned char buf[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(T)))
        throw ParseError("binary file", "unexpected end of payload");
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= std::uint64_t(buf[i]) << (8 * i);
    if constexpr (sizeof(T) == 4 && std::is_floating_point_v<T>) {
        return std::bit_cast<T>(static_cast<std::uint32_t>(bits));
    } else {
        return static_cast<T>(bits);
    }
}

template <typename T>
void write_le(std::ostream& out, T value) {
    std::uint64_t bits;
    if constexpr (sizeof(T) == 4 && std::is_floating_point_v<T>) {
        bits = std::bit_cast<std::uint32_t>(value);
    } else {
        bits = static_cast<std::uint64_t>(value);
    }
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

inline FeatureStore load_features_binary(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    auto dim = read_le<std::uint32_t>(in);
    auto count = read_le<std::uint64_t>(in);
    FeatureStore store(dim);
    for (std::uint64_t r = 0; r < count; ++r) {
        auto len = read_le<std::uint32_t>(in);
        std::string book(len, '\0');
        if (!in.read(book.data(), len)) throw ParseError("feature file", "truncated key");
        auto page = read_le<std::int32_t>(in);
        auto panel = read_le<std::int32_t>(in);
        std::vector<double> v(dim);
        for (auto& x : v) x = read_le<float>(in);
        store.insert({std::move(book), page, panel}, std::move(v));
    }
    return store;
}

}  // namespace detail

inline FeatureStore load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    in.clear();
    in.seekg(0);
    if (std::memcmp(magic, detail::kBinaryMagic, 4) == 0) return detail::load_features_binary(in);

    std::string line;
    std::size_t lineno = 0;
    auto where = [&] { return path.string() + ":" + std::to_string(lineno); };
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (line.rfind("dim=", 0) != 0) throw ParseError(where(), "expected header 'dim=<N>'");
        auto rest = line.substr(4);
        while (!rest.empty() && (rest.back() == '\r' || rest.back() == ' ')) rest.pop_back();
        auto [p, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), dim);
        if (ec != std::errc() || p != rest.data() + rest.size() || dim == 0)
            throw ParseError(where(), "invalid dim header");
        break;
    }
    if (dim == 0) throw ParseError(path.string(), "missing 'dim=<N>' header");

    FeatureStore store(dim);
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string book;
        if (!(ss >> book)) continue;
        std::string tok;
        std::vector<std::string> toks;
        while (ss >> tok) toks.push_back(tok);
        if (toks.size() < 2) throw ParseError(where(), "expected book_id page_index panel_index values");
        auto parse_int = [&](const std::string& s) {
            int v = 0;
            auto [q, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || q != s.data() + s.size() || v < 0)
                throw ParseError(where(), "invalid index '" + s + "'");
            return v;
        };
        PanelKey key{book, parse_int(toks[0]), parse_int(toks[1])};
        std::vector<double> v;
        v.reserve(toks.size() - 2);
        for (std::size_t i = 2; i < toks.size(); ++i) {
            double x = 0;
            auto [q, ec] = std::from_chars(toks[i].data(), toks[i].data() + toks[i].size(), x);
            if (q != toks[i].data() + toks[i].size() ||
                (ec != std::errc() && ec != std::errc::result_out_of_range))
                throw ParseError(where(), "invalid number '" + toks[i] + "'");
            v.push_back(x);
        }
        try {
            store.insert(std::move(key), std::move(v));
        } catch (const ValidationError& e) {
            throw ValidationError(where() + ": " + e.what());
        }
    }
    return store;
}

inline void save_features(const std::filesystem::path& path, const FeatureStore& store) {
    auto out = io::open_out(path);
    out << "dim=" << store.dim() << '\n';
    char buf[32];
    for (const auto& [k, v] : store.vectors()) {
        out << k.book_id << ' ' << k.page_index << ' ' << k.panel_index;
        for (double x : v) {
            auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
            out << ' ' << std::string_view(buf, static_cast<std::size_t>(p - buf));
        }
        out << '\n';
    }
}

// Layout (all little-endian): "PSFB", u32 dim, u64 count, then per record
// u32 key length, key bytes (book_id), i32 page, i32 panel, dim x f32.
// Values are narrowed to float.
inline void save_features_binary(const std::filesystem::path& path, const FeatureStore& store) {
    auto out = io::open_out(path, std::ios::out | std::ios::trunc | std::ios::binary);
    out.write(detail::kBinaryMagic, 4);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
    detail::write_le<std::uint64_t>(out, store.size());
    for (const auto& [k, v] : store.vectors()) {
        detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(k.book_id.size()));
        out.write(k.book_id.data(), static_cast<std::streamsize>(k.book_id.size()));
        detail::write_le<std::int32_t>(out, k.page_index);
        detail::write_le<std::int32_t>(out, k.panel_index);
        for (double x : v) detail::write_le<float>(out, static_cast<float>(x));
    }
}

struct PairFeature {
    PanelPair pair;
    std::vector<double> x;  // first panel's descriptor, then the second's
};

inline PairFeature pair_feature(const FeatureStore& store, const PanelPair& pair) {
    const auto& a = store.at(pair.first_key());
    const auto& b = store.at(pair.second_key());
    PairFeature f{pair, {}};
    f.x.reserve(a.size() + b.size());
    f.x.insert(f.x.end(), a.begin(), a.end());
    f.x.insert(f.x.end(), b.begin(), b.end());
    return f;
}

// Per-component z-scoring fitted on a training pool. Components with zero
// variance are only centred.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(std::span<const std::vector<double>> xs) {
        if (xs.empty()) throw EmptyInputError("Standardizer::fit: no vectors");
        const auto d = xs.front().size();
        Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
        for (const auto& x : xs) {
            if (x.size() != d) throw ShapeError("Standardizer::fit: ragged input");
            for (std::size_t i = 0; i < d; ++i) s.mean[i] += x[i];
        }
        for (auto& m : s.mean) m /= static_cast<double>(xs.size());
        for (const auto& x : xs)
            for (std::size_t i = 0; i < d; ++i) s.scale[i] += (x[i] - s.mean[i]) * (x[i] - s.mean[i]);
        for (auto& v : s.scale) {
            v = std::sqrt(v / static_cast<double>(xs.size()));
            if (v == 0.0) v = 1.0;
        }
        return s;
    }

    bool empty() const { return mean.empty(); }

    void apply(std::vector<double>& x) const {
        if (empty()) return;
        if (x.size() != mean.size()) throw ShapeError("Standardizer::apply: dimension mismatch");
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - mean[i]) / scale[i];
    }
};

}  // namespace panelscope
