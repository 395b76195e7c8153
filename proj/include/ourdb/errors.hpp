#pragma once

#include <stdexcept>
#include <string>

namespace ourdb {

// Error taxonomy mirrored by the CLI exit codes: ConfigError -> 1,
// DataError -> 2, NumericError -> 3. Contract violations inside the
// library throw std::invalid_argument and map to exit code 1 as well.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ourdb
