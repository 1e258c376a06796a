#pragma once

#include "taskagg/generator.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace testutil {

inline Eigen::MatrixXd gaussian(Eigen::Index n, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng = taskagg::make_engine(seed, 7);
    return taskagg::standard_normal(n, cols, rng);
}

inline Eigen::MatrixXd centered(const Eigen::MatrixXd& m) { return m.rowwise() - m.colwise().mean(); }

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() / ("taskagg_" + tag + "_" + std::to_string(stamp));
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

}  // namespace testutil
