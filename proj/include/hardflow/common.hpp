#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hardflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Scheduler with Lambda(t) numerically zero at the requested time.
class DegenerateSchedulerError : public Error {
public:
    using Error::Error;
};

/// Requested optional capability (e.g. input VJP) is not provided.
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Problem structure does not meet a method's preconditions (closed form, projection).
class UnsupportedStructureError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered in a state, loss or iterate.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A hard-constrained sampler could not certify a feasible terminal sample.
class SolverFailure : public Error {
public:
    using Error::Error;
};

/// Invalid user configuration, file or command line.
class ConfigError : public Error {
public:
    using Error::Error;
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }

/// SplitMix64 finalizer; used to derive independent per-sample seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// 64-bit FNV-1a over a byte string (stable config hashes).
inline std::uint64_t fnv1a64(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace hardflow
