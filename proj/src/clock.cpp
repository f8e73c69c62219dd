#include "ecoforge/clock.hpp"

namespace ecoforge {

SteadyClock& steady_clock() {
  static SteadyClock instance;
  return instance;
}

}  // namespace ecoforge
