#ifndef ABSORBKIT_COMMON_HPP
#define ABSORBKIT_COMMON_HPP

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace absorbkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using Index = Eigen::Index;

inline constexpr const char* kToolkitVersion = "0.1.0";

/// Base error. `code()` is a stable machine-readable tag ("MissingColumn",
/// "ZeroVariance", ...) used by tests and by the CLI's exit-code mapping.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

/// Invalid configuration or CLI usage (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data (exit code 3).
class DataError : public Error {
public:
    using Error::Error;
};

/// ceil(frac * n) robust to products like 0.8*10 landing a hair above 8.
inline Index ceil_fraction(double frac, Index n) {
    return static_cast<Index>(std::ceil(frac * static_cast<double>(n) - 1e-9));
}

/// Shortest round-trip decimal form of a double. Locale-independent and
/// deterministic, so emitted CSV/JSON artifacts are byte-stable across runs.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, bool& ok) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    auto res = std::from_chars(b, e, v);
    const char* p = res.ptr;
    while (p < e && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
    ok = (res.ec == std::errc()) && p == e && b != e;
    return v;
}

}  // namespace absorbkit

#endif
