#include "relex/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace relex {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

std::uint64_t fnv1a(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::mt19937_64 named_stream(std::uint64_t seed, std::string_view name) {
  std::uint64_t state = seed ^ fnv1a(name);
  return std::mt19937_64(splitmix64(state));
}

double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

int sample_categorical(std::mt19937_64& gen, std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("sample_categorical: empty distribution");
  const double u = uniform01(gen);
  double acc = 0.0;
  int last_positive = -1;
  for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  // u landed in the rounding slack past the accumulated mass
  return last_positive >= 0 ? last_positive : static_cast<int>(probs.size()) - 1;
}

std::string rng_state_string(const std::mt19937_64& gen) {
  std::ostringstream os;
  os << gen;
  return os.str();
}

std::mt19937_64 rng_from_state_string(const std::string& text) {
  std::istringstream is(text);
  std::mt19937_64 gen;
  is >> gen;
  if (is.fail()) throw std::invalid_argument("bad rng state string");
  return gen;
}

}  // namespace relex
