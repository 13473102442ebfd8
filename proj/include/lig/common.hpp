#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace lig {

using Vec3 = Eigen::Vector3d;
using Point3 = Eigen::Vector3d;

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument or violated precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents: bad magic, wrong version, truncation, shape mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or similar numerical breakdown.
class NumericalError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

inline bool is_finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

/// Derives an independent stream seed from a base seed and a stream id (splitmix64).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Process-wide worker count used by the parallel loops. 0 means hardware concurrency.
inline unsigned& thread_count_setting() {
  static unsigned n = 0;
  return n;
}

inline void set_thread_count(unsigned n) { thread_count_setting() = n; }

inline unsigned thread_count() {
  unsigned n = thread_count_setting();
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

/// Runs fn(chunk) for chunk in [0, chunks). Each chunk must write only to its own outputs,
/// so results do not depend on the number of workers.
inline void parallel_chunks(std::size_t chunks, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += workers) fn(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Splits [0, n) into fixed-size ranges and processes them with parallel_chunks.
inline void parallel_ranges(std::size_t n, std::size_t chunk,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t chunks = (n + chunk - 1) / chunk;
  parallel_chunks(chunks, [&](std::size_t c) {
    const std::size_t lo = c * chunk;
    fn(lo, std::min(n, lo + chunk));
  });
}

}  // namespace lig
