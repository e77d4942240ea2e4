#pragma once

#include <cstdint>
#include <initializer_list>

namespace gpdrf::rng {

// Stateless counter-based random stream. Every draw is a pure function of
// (seed, stream tag, indices), so any value can be regenerated in isolation
// and in any order. All sampling in the library goes through this so that
// runs are reproducible bit-for-bit given a seed.

// Stream tags. Each distinct consumer gets its own tag so index tuples from
// different call sites can never collide.
enum class Stream : std::uint64_t {
  spectra = 1,        // sample_spectra(lambda, M, seed)
  weight_noise = 2,   // e_{lij} in the weight reparameterization
  spectra_noise = 3,  // tau_{lij} in the spectra reparameterization
  latent_noise = 4,   // eps_{nj} in the GP-layer reparameterization
  batch = 5,          // mini-batch index draws
  split = 6,          // train/test permutation
  inducing = 7,       // inducing-point selection
  init = 8,           // parameter initialization
  predict_weights = 9,
  predict_spectra = 10,
  predict_latent = 11,
  predict_pick = 12,  // mixture-component choice per posterior draw
  predict_target = 13,
  data_synth = 14,    // synthetic dataset generation (tools/tests)
};

constexpr std::uint64_t word(Stream s) { return static_cast<std::uint64_t>(s); }

std::uint64_t splitmix64(std::uint64_t x);

// Hash of (seed, words...) with a bijective absorption step per word.
std::uint64_t hash_key(std::uint64_t seed, std::initializer_list<std::uint64_t> words);

// Uniform in the open interval (0, 1).
double uniform01(std::uint64_t seed, std::initializer_list<std::uint64_t> words);

// Standard normal via the inverse CDF (Wichura's PPND16), full double accuracy.
double inverse_normal_cdf(double p);
double normal(std::uint64_t seed, std::initializer_list<std::uint64_t> words);

// Uniform integer in [0, n).
std::uint64_t uniform_index(std::uint64_t seed, std::initializer_list<std::uint64_t> words,
                            std::uint64_t n);

// Derives an independent child seed (used to give each test point its own
// prediction stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace gpdrf::rng
