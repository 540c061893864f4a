#pragma once

// Shared vocabulary: vertex handles, the discourse relation enumeration,
// error types and the deterministic random stream used everywhere.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ceqa {

using VertexId = std::uint32_t;

enum class RelationType : std::uint8_t {
  Precedence,
  Succession,
  Synchronous,
  Reason,
  Result,
  Condition,
  Concession,
  Contrast,
  Conjunction,
  Instantiation,
  Restatement,
  Alternative,
  ChosenAlternative,
  Exception,
};

inline constexpr std::size_t kNumRelations = 14;

inline constexpr std::array<RelationType, kNumRelations> kAllRelations = {
    RelationType::Precedence,    RelationType::Succession,
    RelationType::Synchronous,   RelationType::Reason,
    RelationType::Result,        RelationType::Condition,
    RelationType::Concession,    RelationType::Contrast,
    RelationType::Conjunction,   RelationType::Instantiation,
    RelationType::Restatement,   RelationType::Alternative,
    RelationType::ChosenAlternative, RelationType::Exception,
};

constexpr std::size_t index_of(RelationType r) { return static_cast<std::size_t>(r); }

std::string_view relation_name(RelationType r);

// Total over the 14 names, nullopt for anything else.
std::optional<RelationType> parse_relation(std::string_view name);

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte " + std::to_string(offset)), offset(offset) {}
  std::size_t offset;
};

struct SchemaError : Error {
  explicit SchemaError(std::string field_name)
      : Error("schema violation: " + field_name), field(std::move(field_name)) {}
  std::string field;
};

// Seeded stream with portable integer draws (std distributions are
// implementation-defined, which would break cross-platform byte-identity).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, n), n > 0.
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; derives independent stream seeds from (seed, tag...).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace ceqa
