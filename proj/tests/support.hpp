#pragma once
// Test helpers: fixture paths, instance builders, scratch directories.

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "ctxprobe/core_data.hpp"

namespace testing_support {

inline std::string fixture(const std::string& name) { return std::string(CTXPROBE_FIXTURE_DIR) + "/" + name; }

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline ctxprobe::Instance nli(std::string id, std::string p, std::string h, ctxprobe::Label gold,
                              ctxprobe::Split split = ctxprobe::Split::test) {
    return {std::move(id), ctxprobe::Task::NLI, std::move(p), std::move(h), std::nullopt, gold, split};
}

inline ctxprobe::Instance dnli(std::string id, std::string p, std::string h, std::string u, ctxprobe::Label gold,
                               ctxprobe::Split split = ctxprobe::Split::test) {
    return {std::move(id), ctxprobe::Task::DefeasibleNLI, std::move(p), std::move(h), std::move(u), gold, split};
}

// Fresh empty directory under the system temp dir, removed on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("ctxprobe-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

}  // namespace testing_support
