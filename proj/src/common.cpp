#include "starris/common.hpp"

#include <algorithm>

namespace starris {

Real sorted_sum(std::vector<Real>& buf) {
    std::sort(buf.begin(), buf.end());
    Real acc = 0.0;
    for (Real v : buf) acc += v;
    return acc;
}

}  // namespace starris
