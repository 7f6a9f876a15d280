#include "nmtk/version.hpp"

namespace nmtk {

const char* version_string() { return "0.1.0"; }

}  // namespace nmtk
