#include "destnet/rng.hpp"

#include <sstream>

namespace destnet {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void Rng::save_state(std::ostream& os) const { os << engine_; }

void Rng::load_state(std::istream& is) { is >> engine_; }

std::string Rng::state_string() const {
  std::ostringstream os;
  save_state(os);
  return os.str();
}

void Rng::set_state_string(const std::string& s) {
  std::istringstream is(s);
  load_state(is);
}

}  // namespace destnet
