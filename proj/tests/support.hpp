#pragma once

// Shared helpers for the test binaries: independent oracles, fixture paths,
// temp-dir management. Everything here is test-side code; production headers
// must not include it.

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace testsup {

// ---------------------------------------------------------------- paths ----

#ifndef V3LPLAB_REPO_DIR
#error "tests must be compiled with -DV3LPLAB_REPO_DIR=..."
#endif

inline std::string repo_dir() { return V3LPLAB_REPO_DIR; }
inline std::string config_path(const std::string& name) { return repo_dir() + "/config/" + name; }
inline std::string fixture_path(const std::string& name) {
    return repo_dir() + "/data/fixtures/" + name;
}

// Fresh directory under the system temp root; removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        auto base = std::filesystem::temp_directory_path();
        for (int i = 0; i < 10000; ++i) {
            auto p = base / (tag + "-" + std::to_string(i));
            std::error_code ec;
            if (std::filesystem::create_directory(p, ec)) {
                path_ = p.string();
                return;
            }
        }
        throw std::runtime_error("TempDir: could not create a scratch directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("slurp: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// -------------------------------------------------------------- oracles ----

// Exact-exponent power by repeated squaring in extended precision. Oracle
// for the tick-price map; independent of std::pow.
inline long double binpow(long double base, long long exp) {
    if (exp < 0) return 1.0L / binpow(base, -exp);
    long double acc = 1.0L;
    long double sq = base;
    while (exp > 0) {
        if (exp & 1) acc *= sq;
        sq *= sq;
        exp >>= 1;
    }
    return acc;
}

// Chi-square critical values at p = 0.01 for the dof used by the
// uniformity tests.
inline double chi2_crit_99(int dof) {
    switch (dof) {
        case 9: return 21.666;
        case 10: return 23.209;
        case 4: return 13.277;
        default: throw std::runtime_error("chi2_crit_99: dof not tabulated");
    }
}

inline double chi2_stat(const std::vector<long>& observed, double expected_each) {
    double stat = 0.0;
    for (long o : observed) {
        const double d = static_cast<double>(o) - expected_each;
        stat += d * d / expected_each;
    }
    return stat;
}

// Relative error convention used by the gradient and oracle comparisons.
inline double rel_err(double a, double b) {
    const double scale = std::max({1.0, std::abs(a), std::abs(b)});
    return std::abs(a - b) / scale;
}

}  // namespace testsup
