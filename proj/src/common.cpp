#include "eqi/common.hpp"

#include <charconv>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

namespace eqi {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t keyed_hash64(std::string_view bytes, uint64_t seed) {
  uint64_t h = 14695981039346656037ull ^ mix64(seed);
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return mix64(h);
}

uint64_t derive_seed(uint64_t root, std::string_view stream) {
  return mix64(root ^ keyed_hash64(stream, 0x5eed5eed5eed5eedull));
}

static inline uint64_t rotl64(uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

Rng::Rng(uint64_t seed) {
  uint64_t st = seed;
  for (auto& s : s_) {
    st += 0x9e3779b97f4a7c15ull;
    uint64_t z = st;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    s = z ^ (z >> 31);
  }
  if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

uint64_t Rng::next_u64() {
  uint64_t result = rotl64(s_[1] * 5, 7) * 9;
  uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl64(s_[3], 45);
  return result;
}

uint64_t Rng::bounded(uint64_t n) {
  // Lemire multiply-shift; rejection keeps it exactly uniform.
  unsigned __int128 m = (unsigned __int128)next_u64() * n;
  uint64_t lo = (uint64_t)m;
  if (lo < n) {
    uint64_t threshold = (0 - n) % n;
    while (lo < threshold) {
      m = (unsigned __int128)next_u64() * n;
      lo = (uint64_t)m;
    }
  }
  return (uint64_t)(m >> 64);
}

double Rng::next_double() {
  return (double)(next_u64() >> 11) * 0x1.0p-53;
}

std::vector<uint64_t> sample_ids(const std::vector<uint64_t>& ids, size_t n,
                                 uint64_t seed) {
  if (n > ids.size())
    throw SizeError("sample: requested " + std::to_string(n) + " of " +
                    std::to_string(ids.size()) + " items");
  std::vector<uint64_t> pool(ids);
  Rng rng(seed);
  for (size_t i = 0; i < n; ++i) {
    size_t j = i + (size_t)rng.bounded(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_float(float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& context) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError(context + ": bad real number '" + std::string(s) + "'");
  return v;
}

uint64_t parse_u64(std::string_view s, const std::string& context) {
  uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError(context + ": bad non-negative integer '" +
                     std::string(s) + "'");
  return v;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("io: cannot open " + path.string());
  std::string out;
  in.seekg(0, std::ios::end);
  out.resize((size_t)in.tellg());
  in.seekg(0);
  in.read(out.data(), (std::streamsize)out.size());
  if (!in) throw DataError("io: short read on " + path.string());
  return out;
}

void write_text_file(const std::filesystem::path& path,
                     std::string_view content) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("io: cannot write " + path.string());
  out.write(content.data(), (std::streamsize)content.size());
  if (!out) throw DataError("io: short write on " + path.string());
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (start < text.size()) {
    size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      out.push_back(text.substr(start));
      break;
    }
    out.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    size_t p = s.find(sep, start);
    if (p == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, p - start));
    start = p + 1;
  }
}

void parallel_chunks(size_t n, int threads,
                     const std::function<void(size_t, size_t)>& fn) {
  if (n == 0) return;
  size_t workers = threads <= 1 ? 1 : std::min<size_t>((size_t)threads, n);
  if (workers == 1) {
    fn(0, n);
    return;
  }
  size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (size_t w = 0; w < workers; ++w) {
    size_t lo = w * chunk;
    size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi]() {
      try {
        fn(lo, hi);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace eqi
