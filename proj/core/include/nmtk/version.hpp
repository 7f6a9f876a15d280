#pragma once

namespace nmtk {

const char* version_string();

}  // namespace nmtk
