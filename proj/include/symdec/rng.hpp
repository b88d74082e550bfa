#ifndef SYMDEC_RNG_HPP
#define SYMDEC_RNG_HPP

#include <cstdint>
#include <initializer_list>

namespace symdec {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Independent stream seed for a position (e.g. seed, epoch, item) in a run.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ull;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

}  // namespace symdec

#endif  // SYMDEC_RNG_HPP
