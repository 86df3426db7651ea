#pragma once

#include "semcur/scene.hpp"

namespace semcur::testing {

// Walled border around an empty interior.
inline Scene open_room(int w, int h, std::uint64_t seed = 0) {
  Scene s(w, h, seed);
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) s.at({x, y}) = CellKind::free();
  return s;
}

}  // namespace semcur::testing
