#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace relex {

// splitmix64 step; used to derive substream seeds.
std::uint64_t splitmix64(std::uint64_t& state);

// Engine for a named substream of a base seed. The same (seed, name) pair
// always yields the same sequence, independent of any other stream.
std::mt19937_64 named_stream(std::uint64_t seed, std::string_view name);

// Uniform double in [0, 1) built from 53 random bits. Avoids
// std::uniform_real_distribution so sequences do not depend on the
// standard library implementation.
double uniform01(std::mt19937_64& gen);

// Index sample from a probability vector by CDF walk. The vector is used
// as stored; rows are normalized at construction time, never here.
int sample_categorical(std::mt19937_64& gen, std::span<const double> probs);

// mt19937_64 state as text, for exact checkpoint round trips.
std::string rng_state_string(const std::mt19937_64& gen);
std::mt19937_64 rng_from_state_string(const std::string& text);

}  // namespace relex
