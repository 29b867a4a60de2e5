// Copyright 2026 The samdeblur Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace samdeblur {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or mask dimensions do not line up.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error("shape error: " + what) {}
};

/// A file or serialized buffer is malformed.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("format error: " + what) {}
};

/// A caller-side precondition was violated.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error("contract error: " + what) {}
};

/// A numeric parameter is outside its legal range.
class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& what) : Error("parameter error: " + what) {}
};

/// Training diverged (non-finite loss).
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& what) : Error("divergence: " + what) {}
};

}  // namespace samdeblur
