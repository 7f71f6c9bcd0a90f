#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace dpm {

/// Row-major dense matrix. Experts (or data points) are rows, dimensions are
/// columns, so one expert template or one observation is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class ObservationModel : std::uint8_t { Bernoulli = 0, Gaussian = 1 };
enum class DataKind : std::uint8_t { Binary = 0, Continuous = 1 };
enum class Composition : std::uint8_t { Hard = 0, Soft = 1 };

enum class ErrorCode {
  InvalidArgument,
  EmptyLatentState,
  Domain,
  Io,
  Format,
  Truncated,
};

/// Single exception type thrown across the library. The code lets the C API
/// map failures onto status values without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Numerical guard rails that keep likelihoods and derivatives finite.
struct Clamps {
  double mu_lo = 1e-4;                 // Bernoulli opinions live in [mu_lo, 1 - mu_lo]
  double var_lo = 1e-6;                // Gaussian variance floor
  double e_min = std::ldexp(1.0, -30);  // expertise range
  double e_max = std::ldexp(1.0, 30);
};

inline const char* to_string(ObservationModel m) {
  return m == ObservationModel::Bernoulli ? "bernoulli" : "gaussian";
}

inline DataKind data_kind_for(ObservationModel m) {
  return m == ObservationModel::Bernoulli ? DataKind::Binary : DataKind::Continuous;
}

}  // namespace dpm
