#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace starris {

using Real = double;
using Complex = std::complex<Real>;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

inline constexpr Real kPi = 3.14159265358979323846;

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline Real db_to_linear(Real db) { return std::pow(10.0, db / 10.0); }
inline Real dbm_to_watt(Real dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

// Order-invariant sum: accumulates the addends in ascending value order so the
// result depends only on the multiset of inputs, not on their arrangement.
// Graph aggregations and norm reductions use this so permuting vertices yields
// bit-identical outputs.
Real sorted_sum(std::vector<Real>& buf);

}  // namespace starris
