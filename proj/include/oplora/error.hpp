// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <stdexcept>
#include <string>

namespace oplora {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Input data violates a value invariant (NaN/Inf where finite is required).
class DataError : public Error {
public:
    using Error::Error;
};

/// Matrix exceeds the configured cap for an exact decomposition.
class SizeCapError : public Error {
public:
    using Error::Error;
};

/// Requested rank is out of the valid range for the operand.
class RankError : public Error {
public:
    using Error::Error;
};

/// A scalar parameter is out of range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Metric has no defined value for this input (e.g. 0/0).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

/// A serialized file is malformed (bad magic, truncation, schema mismatch).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Filesystem read/write failure.
class IoError : public Error {
public:
    using Error::Error;
};

/// Projector/adapter state refers to a different frozen weight.
class FingerprintError : public Error {
public:
    using Error::Error;
};

} // namespace oplora
