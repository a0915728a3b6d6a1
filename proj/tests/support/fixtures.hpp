#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace testsup {

inline std::filesystem::path fixture_dir() {
    const char* env = std::getenv("PROXYSCOPE_FIXTURES");
    if (env != nullptr && *env != '\0') return std::filesystem::path(env);
    return std::filesystem::path(__FILE__).parent_path().parent_path() / "fixtures";
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing fixture " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline std::string fixture_text(const std::string& name) {
    return read_file(fixture_dir() / name);
}

inline std::string fixture_path(const std::string& name) {
    return (fixture_dir() / name).string();
}

class TempDir {
  public:
    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        for (int i = 0; i < 1000; ++i) {
            auto candidate = base / ("proxyscope_test_" + std::to_string(::getpid()) + "_" +
                                     std::to_string(counter_++));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("cannot create temp dir");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

  private:
    static inline int counter_ = 0;
    std::filesystem::path path_;
};

}  // namespace testsup
