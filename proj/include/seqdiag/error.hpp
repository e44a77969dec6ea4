#pragma once

#include <stdexcept>
#include <string>

namespace seqdiag {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid model construction, or a density evaluated outside its support.
class ModelError : public Error {
public:
    using Error::Error;
};

// Non-finite statistic or log-likelihood ratio encountered while running.
class DataError : public Error {
public:
    using Error::Error;
};

// Configuration that cannot be run (bad field, missing section, bad range).
class ConfigError : public Error {
public:
    using Error::Error;
};

// No threshold on the grid satisfies the calibration target.
class GridExhausted : public Error {
public:
    GridExhausted(const std::string& what, double best_attained)
        : Error(what), best_attained_(best_attained) {}

    double best_attained() const noexcept { return best_attained_; }

private:
    double best_attained_;
};

} // namespace seqdiag
