#ifndef CORRIDOR_TYPES_HPP
#define CORRIDOR_TYPES_HPP

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

namespace corridor {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Forward-mode scalar carrying the full derivative vector w.r.t. the decision vector.
using AutoDiff = Eigen::AutoDiffScalar<Eigen::VectorXd>;

inline double value_of(double v) { return v; }
inline double value_of(const AutoDiff& v) { return v.value(); }

// Branch-selecting min/max: the derivative follows the active argument.
template <typename Scalar>
Scalar smin(const Scalar& a, const Scalar& b) {
  return value_of(a) <= value_of(b) ? a : b;
}
template <typename Scalar>
Scalar smax(const Scalar& a, const Scalar& b) {
  return value_of(a) >= value_of(b) ? a : b;
}
template <typename Scalar>
  requires(!std::is_same_v<Scalar, double>)
Scalar smin(const Scalar& a, double b) {
  return value_of(a) <= b ? a : Scalar(b);
}
template <typename Scalar>
  requires(!std::is_same_v<Scalar, double>)
Scalar smax(const Scalar& a, double b) {
  return value_of(a) >= b ? a : Scalar(b);
}

enum class Mode { Car = 0, Bus = 1, Dras = 2 };

inline constexpr std::array<Mode, 3> kModes{Mode::Car, Mode::Bus, Mode::Dras};

inline constexpr int index_of(Mode m) { return static_cast<int>(m); }

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Car: return "car";
    case Mode::Bus: return "bus";
    case Mode::Dras: return "dras";
  }
  return "?";
}

/// Raised for malformed inputs; the message carries the offending field path.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an internal model invariant is broken (e.g. non-monotone curves).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kSecondsPerHour = 3600.0;

inline double kmh_to_ms(double v) { return v / 3.6; }

}  // namespace corridor

#endif  // CORRIDOR_TYPES_HPP
