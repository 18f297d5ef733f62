#pragma once
#include <stdexcept>

namespace aptm {

// Error taxonomy shared by all modules. Shape/contract/config errors are
// programming or input mistakes; numeric errors are runtime value failures.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace aptm
