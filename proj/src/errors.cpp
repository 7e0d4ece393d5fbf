#include "fedids/errors.hpp"

namespace fedids {

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace fedids
