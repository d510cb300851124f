#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "panelscope/log.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("panelscope-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// Collects warnings for the lifetime of the object.
class WarningCapture {
public:
    WarningCapture() {
        prev_ = panelscope::log::set_warning_sink([this](const std::string& m) { messages.push_back(m); });
    }
    ~WarningCapture() { panelscope::log::set_warning_sink(prev_); }

    bool contains(const std::string& needle) const {
        for (const auto& m : messages)
            if (m.find(needle) != std::string::npos) return true;
        return false;
    }

    std::vector<std::string> messages;

private:
    panelscope::log::Sink prev_;
};

}  // namespace testutil
