#include "arrowbf/common.hpp"

namespace arrowbf {

uint64_t derive_seed(uint64_t master, uint64_t stream) {
  // splitmix64 finalizer over the combined state
  uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int VadMask::present_count() const {
  int n = 0;
  for (uint8_t a : active) n += (a != 0);
  return n;
}

}  // namespace arrowbf
