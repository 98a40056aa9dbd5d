#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>

namespace gestimate {

std::uint64_t splitmix64(std::uint64_t x);

// seed of the substream reached from root by following path (replication, subject, ...)
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng_); }
  double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(eng_); }
  double exponential(double rate) { return std::exponential_distribution<double>(rate)(eng_); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(eng_); }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

int default_jobs();

// runs body(i) for i in [0, n) on up to jobs threads; the exception of the lowest failing index is rethrown
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body);

}  // namespace gestimate
