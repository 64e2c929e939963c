#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace flowcast {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;

/// Undirected mesh edge, stored with the smaller index first.
struct Edge {
    uint32_t a = 0;
    uint32_t b = 0;

    Edge() = default;
    Edge(uint32_t i, uint32_t j) : a(i < j ? i : j), b(i < j ? j : i) {}

    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Malformed or truncated on-disk data (wrong magic, bad version, short read).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Input data violates a documented precondition (invalid mesh, empty split, ...).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure at runtime (NaN loss, diverging controller, ...).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace flowcast
