#include "dialoflow/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dialoflow::nn {

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_finite(const Tensor& t, const std::string& where) {
  if (!t.all_finite()) {
    throw std::runtime_error("non-finite values after op: " + where);
  }
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

}  // namespace dialoflow::nn
