#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "posediff/errors.hpp"

namespace testutil {

// Fresh scratch directory per test, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<uint64_t> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("posediff_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline posediff::ErrorCode thrown_code(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const posediff::Error& e) {
        return e.code();
    }
    throw std::runtime_error("expected a posediff::Error");
}

}  // namespace testutil
