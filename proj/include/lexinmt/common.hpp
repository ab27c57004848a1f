#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lexinmt {

using TokenSeq = std::vector<std::string>;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] void fail(const std::string& msg);

// Deterministic splitmix64-based RNG. <random> distributions are
// implementation-defined, so seeded runs would not be reproducible across
// standard libraries; everything random in this codebase goes through here.
class DetRng {
 public:
  explicit DetRng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();
  // Uniform in [0, n), n > 0. Lemire's multiply-shift rejection method.
  uint64_t below(uint64_t n);
  // Uniform in [0, 1).
  double uniform();
  // Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Stateless hash of two words; used to derive independent stream seeds.
  static uint64_t mix(uint64_t a, uint64_t b);

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

TokenSeq split_ws(const std::string& s);
std::string join_ws(const TokenSeq& toks);

std::string read_file(const std::string& path);
// Writes content to path via a temp file + rename so failures never leave a
// partial artifact behind.
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace lexinmt
