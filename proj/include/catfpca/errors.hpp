#ifndef CATFPCA_ERRORS_HPP
#define CATFPCA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace catfpca {

// Malformed input: bad labels, broken invariants, protocol violations.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the domain of an operation (time outside [0,T], k > R).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Eigensolver or estimator produced something that cannot be trusted.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace catfpca

#endif  // CATFPCA_ERRORS_HPP
