#pragma once

#include <stdexcept>
#include <string>

namespace autogcn {

/// Malformed or inconsistent input: bad shapes, out-of-range indices, unreadable files.
class input_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filter or model parameters outside their admissible domain.
class parameter_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-convergence, non-finite values, training divergence.
class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace autogcn
