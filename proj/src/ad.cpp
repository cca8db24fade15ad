#include "unite/ad.hpp"

namespace unite::ad {

Tape& tape() {
  thread_local Tape t;
  return t;
}

void reset_tape() { tape().clear(); }

}  // namespace unite::ad
