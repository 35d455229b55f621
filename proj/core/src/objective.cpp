#include "eos/objective.hpp"

// Interface-only translation unit; keeps the vtable anchored here.

namespace eos {}
