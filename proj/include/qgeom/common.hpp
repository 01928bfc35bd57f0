#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace qgeom {

inline constexpr std::string_view kVersion = "1.0.0";

using dvec = Eigen::VectorXd;
using dmat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Error taxonomy
// ---------------------------------------------------------------------------
//
// ValidationError: the caller handed us something malformed (shape mismatch,
// non-symmetric matrix where symmetry is required, nonpositive scale, ...).
// NumericalError: inputs were well-formed but the computation cannot proceed
// (singular restricted metric, non-finite loss, rank collapse, ...).
// TrainingError:  a training loop failed to reach its target; carries the
// final loss so drivers can report how far it got.

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public NumericalError {
 public:
  TrainingError(const std::string& what, double final_loss)
      : NumericalError(what), final_loss(final_loss) {}
  double final_loss;
};

}  // namespace qgeom
