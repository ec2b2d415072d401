#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "toolweave/error.hpp"

namespace toolweave {

namespace detail {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
inline bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
inline char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

}  // namespace detail

/// Canonical tool identifier: lowercase, leading/trailing punctuation and
/// whitespace stripped, internal whitespace runs collapsed to one '_'.
inline std::string normalize_tool_id(std::string_view raw) {
  std::size_t begin = 0;
  std::size_t end = raw.size();
  while (begin < end && (detail::is_space(raw[begin]) || detail::is_punct(raw[begin]))) ++begin;
  while (end > begin && (detail::is_space(raw[end - 1]) || detail::is_punct(raw[end - 1]))) --end;

  std::string out;
  out.reserve(end - begin);
  bool in_space = false;
  for (std::size_t i = begin; i < end; ++i) {
    const char c = raw[i];
    if (detail::is_space(c)) {
      in_space = true;
      continue;
    }
    if (in_space) {
      out.push_back('_');
      in_space = false;
    }
    out.push_back(detail::lower(c));
  }
  if (out.empty()) {
    fail(ErrorCode::EmptyAfterNormalization, "'" + std::string(raw) + "' normalizes to an empty id");
  }
  return out;
}

/// Lowercase alphanumeric tokens; every other character is a separator.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (detail::is_alnum(c)) {
      current.push_back(detail::lower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

/// True when `needle` occurs in `haystack` as a contiguous token run.
inline bool contains_token_sequence(const std::vector<std::string>& haystack,
                                    const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      if (haystack[i + j] != needle[j]) {
        match = false;
        break;
      }
    }
    if (match) return true;
  }
  return false;
}

inline std::size_t count_words(std::string_view text) {
  std::size_t count = 0;
  bool in_word = false;
  for (char c : text) {
    if (detail::is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && detail::is_space(s[b])) ++b;
  while (e > b && detail::is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = detail::lower(c);
  return out;
}

// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t basis = 0xcbf29ce484222325ULL) {
  std::uint64_t h = basis;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return out;
}

/// Uniform integer in [0, bound) by rejection sampling. std::uniform_int_distribution
/// is implementation-defined, so it is avoided wherever output must match across platforms.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t limit = std::mt19937_64::max() - (std::mt19937_64::max() % bound);
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % bound;
}

/// Uniform real in [0, 1) from the top 53 bits.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// First `n` elements of a seeded Fisher-Yates shuffle of [0, population).
inline std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n,
                                               std::uint64_t seed) {
  std::vector<std::size_t> idx(population);
  for (std::size_t i = 0; i < population; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n && i < population; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, population - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(std::min(n, population));
  return idx;
}

}  // namespace toolweave
