#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

#include "panelscope/error.hpp"

namespace panelscope {

using json = nlohmann::json;

namespace io {

// Calls `fn(record, line_number)` for every non-blank line of a JSONL file.
// Parse failures are reported as ParseError("path:line", ...). Lines must be
// objects unless `objects_only` is false.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const json&, std::size_t)>& fn, bool objects_only = true) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno), e.what());
        }
        if (objects_only && !rec.is_object()) {
            throw ParseError(path.string() + ":" + std::to_string(lineno), "record is not an object");
        }
        try {
            fn(rec, lineno);
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno), e.what());
        }
    }
}

inline std::ofstream open_out(const std::filesystem::path& path,
                              std::ios::openmode mode = std::ios::out | std::ios::trunc) {
    std::ofstream out(path, mode);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace io
}  // namespace panelscope
