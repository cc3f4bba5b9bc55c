#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace bastext {

using ProductId = std::int32_t;
using TokenId = std::int32_t;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Every fatal condition in the library surfaces as this type. The message is
// a single line so the CLI can forward it verbatim.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace bastext
