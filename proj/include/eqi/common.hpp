#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace eqi {

// Data/integrity failures; the CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ParseError : public DataError {
 public:
  using DataError::DataError;
};
class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};
class SizeError : public DataError {
 public:
  using DataError::DataError;
};
class DimError : public DataError {
 public:
  using DataError::DataError;
};

// Bad flag values; the CLI maps these to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 64-bit finalizer mix (splitmix64 style).
uint64_t mix64(uint64_t x);

// Keyed FNV-1a over the bytes, finalized with mix64. Platform-independent.
// Recorded in serialized headers as "fnv1a64-mix".
uint64_t keyed_hash64(std::string_view bytes, uint64_t seed);

// Named sub-stream derivation so one root --seed fans out per stage.
uint64_t derive_seed(uint64_t root, std::string_view stream);

// xoshiro256** seeded through splitmix64. Fully specified, portable output.
class Rng {
 public:
  explicit Rng(uint64_t seed);
  uint64_t next_u64();
  // Uniform in [0, n), unbiased (multiply-shift with rejection). n >= 1.
  uint64_t bounded(uint64_t n);
  // Uniform in [0, 1) with 53-bit resolution.
  double next_double();

 private:
  uint64_t s_[4];
};

// Uniform sample without replacement from a sorted id list; result re-sorted
// ascending. Deterministic for a fixed seed.
std::vector<uint64_t> sample_ids(const std::vector<uint64_t>& ids, size_t n,
                                 uint64_t seed);

// Shortest decimal that round-trips the exact value.
std::string format_double(double v);
std::string format_float(float v);

double parse_double(std::string_view s, const std::string& context);
uint64_t parse_u64(std::string_view s, const std::string& context);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     std::string_view content);

// LF-separated; a trailing newline does not yield a final empty element.
std::vector<std::string_view> split_lines(std::string_view text);
std::vector<std::string_view> split_on(std::string_view s, char sep);

// Static partition of [0, n) over at most `threads` workers; fn(begin, end).
// threads <= 1 runs inline. Chunks are fixed by n and threads only, so any
// per-slot output is identical across thread counts.
void parallel_chunks(size_t n, int threads,
                     const std::function<void(size_t, size_t)>& fn);

}  // namespace eqi
