#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ecomp {

// Dense double-precision carriers used throughout. Row-major so flat
// parameter blobs and per-sample batch rows map directly onto storage.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// Raised when a computation produces NaN/Inf. CLI maps this to exit code 3.
struct NumericFault : std::runtime_error {
  explicit NumericFault(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration / malformed input. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline void require_finite(const Mat& m, const char* where) {
  if (!m.allFinite()) throw NumericFault(std::string("non-finite value in ") + where);
}

inline void require_finite(const Vec& v, const char* where) {
  if (!v.allFinite()) throw NumericFault(std::string("non-finite value in ") + where);
}

inline void require_finite(double x, const char* where) {
  if (!std::isfinite(x)) throw NumericFault(std::string("non-finite value in ") + where);
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a master seed. Stable across
// platforms so seeded runs are reproducible.
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 0x51ed2701ull));
}

// mt19937_64 core with a Box-Muller normal so the generated sequence does not
// depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed) {}

  double uniform() {  // [0, 1)
    return (gen_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    uint64_t threshold = (~uint64_t(0) - n + 1) % n;
    for (;;) {
      uint64_t r = gen_();
      if (r >= threshold) return r % n;
    }
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do { u1 = uniform(); } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  void fill_normal(Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal();
  }

  uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline int thread_count() {
  if (const char* env = std::getenv("ECOMP_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Static block partition; shard boundaries depend only on (n, shards) so any
// reduction done in shard order is reproducible for a fixed thread count.
// The first exception thrown by a shard is rethrown after the join.
inline void parallel_shards(int n, int shards,
                            const std::function<void(int shard, int lo, int hi)>& fn) {
  shards = std::max(1, std::min(shards, n));
  if (shards == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(static_cast<size_t>(shards));
  pool.reserve(static_cast<size_t>(shards));
  int base = n / shards, rem = n % shards, lo = 0;
  for (int s = 0; s < shards; ++s) {
    int hi = lo + base + (s < rem ? 1 : 0);
    pool.emplace_back([&fn, &errs, s, lo, hi] {
      try {
        fn(s, lo, hi);
      } catch (...) {
        errs[static_cast<size_t>(s)] = std::current_exception();
      }
    });
    lo = hi;
  }
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

}  // namespace ecomp
