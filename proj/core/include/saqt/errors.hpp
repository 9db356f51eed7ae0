// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace saqt {

// Unusable input data: malformed container bytes, schema mismatches, token
// ids outside the model vocabulary, streams longer than the context window.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// A numeric invariant broke mid-run, e.g. a non-finite value appeared where
// the pipeline guarantees finite ones.
class InvariantError : public std::runtime_error {
public:
    explicit InvariantError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace saqt
