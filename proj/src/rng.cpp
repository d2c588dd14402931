#include "metastack/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace metastack {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

double RngStream::uniform() {
  return double(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
  double u1 = uniform();
  double u2 = uniform();
  // guard against log(0)
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RngStream::index(std::size_t n) {
  return std::size_t(uniform() * double(n)) % n;
}

std::string RngStream::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

RngStream RngStream::deserialize(const std::string& state) {
  RngStream s;
  std::istringstream is(state);
  is >> s.engine_;
  if (is.fail()) throw std::invalid_argument("RngStream: bad serialized state");
  return s;
}

RngStream RootRng::stream(const std::string& label) const {
  return RngStream(splitmix64(seed_ ^ splitmix64(fnv1a64(label))));
}

}  // namespace metastack
