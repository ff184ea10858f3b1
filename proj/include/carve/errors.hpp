#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace carve {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid, inconsistent or degenerate inputs (CLI exit code 2).
class DataError : public Error {
public:
    using Error::Error;
};

// A site holding only exported summaries cannot honor the request.
class CapabilityError : public DataError {
public:
    using DataError::DataError;
};

// Iterative solve did not reach its tolerance (CLI exit code 3).
class SolverError : public Error {
public:
    explicit SolverError(const std::string& message) : Error(message) {}
    SolverError(const std::string& message, Eigen::VectorXd iterate)
        : Error(message), last_iterate(std::move(iterate)) {}

    Eigen::VectorXd last_iterate;
};

}  // namespace carve
