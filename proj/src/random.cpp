#include "invdist/random.hpp"

#include <cmath>

namespace invdist {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return splitmix64(master ^ splitmix64(index));
}

double RandomStream::uniform_open() {
  double u = uniform();
  while (u == 0.0) u = uniform();
  return u;
}

double RandomStream::exponential(double rate) {
  return -std::log(uniform_open()) / rate;
}

}  // namespace invdist
