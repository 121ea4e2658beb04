#pragma once

#include <stdexcept>
#include <string>

namespace sonarfleet {

// CFAR window does not fit into the range dimension.
struct WindowError : std::invalid_argument {
    explicit WindowError(const std::string& m) : std::invalid_argument(m) {}
};

// Voxel index fell outside the 8-bit grid; compression resolution too small.
struct OverflowError : std::runtime_error {
    explicit OverflowError(const std::string& m) : std::runtime_error(m) {}
};

// Fewer than three matched pairs; no rigid transform can be estimated.
struct DegenerateError : std::runtime_error {
    explicit DegenerateError(const std::string& m) : std::runtime_error(m) {}
};

struct ShapeMismatchError : std::invalid_argument {
    explicit ShapeMismatchError(const std::string& m) : std::invalid_argument(m) {}
};

struct NonSpdError : std::runtime_error {
    explicit NonSpdError(const std::string& m) : std::runtime_error(m) {}
};

struct DuplicateFactorError : std::runtime_error {
    explicit DuplicateFactorError(const std::string& m) : std::runtime_error(m) {}
};

// Normal equations not solvable: gauge unfixed or graph disconnected from the prior.
struct SingularSystemError : std::runtime_error {
    explicit SingularSystemError(const std::string& m) : std::runtime_error(m) {}
};

// A wire field was asked to carry a value wider than its layout allows.
struct EncodeOverflowError : std::runtime_error {
    explicit EncodeOverflowError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace sonarfleet
