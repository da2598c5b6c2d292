// Shared basics: seeded RNG, angle/float helpers, error types.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ssn {

inline constexpr double kPi = 3.14159265358979323846;

/// Shape/contract violations (dimension mismatches and the like).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed dataset/config text input. `line` is 1-based where known.
struct ParseError : std::runtime_error {
    int line;
    ParseError(int line_no, const std::string& what)
        : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
    explicit ParseError(const std::string& what) : std::runtime_error(what), line(0) {}
};

/// Checkpoint format/version/config-echo failures.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Deterministic RNG: mt19937_64 engine with hand-rolled transforms so the
/// stream is bit-identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
        return static_cast<int>((static_cast<unsigned __int128>(engine_()) *
                                 static_cast<unsigned __int128>(n)) >> 64);
    }

    /// Derive an independent, reproducible substream.
    Rng fork(std::uint64_t stream) const {
        std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ull * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(uniform_int(i + 1))]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
    double w = std::atan2(std::sin(a), std::cos(a));
    return w == -kPi ? kPi : w;
}

/// Round to `digits` significant decimal digits (text round-trip, exact on re-parse).
inline double round_sig(double v, int digits = 9) {
    if (!std::isfinite(v) || v == 0.0) return v == 0.0 ? 0.0 : v;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
    return std::strtod(buf, nullptr);
}

}  // namespace ssn
