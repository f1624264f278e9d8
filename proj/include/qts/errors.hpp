#pragma once

#include <stdexcept>
#include <string>

namespace qts {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A grid point outside the sampled window was requested.
class OutOfWindowError : public Error {
public:
    explicit OutOfWindowError(const std::string& what) : Error("OutOfWindow: " + what) {}
};

/// A limit or truncated series failed its stopping rule within the budget.
class NonConvergentError : public Error {
public:
    explicit NonConvergentError(const std::string& what) : Error("NonConvergent: " + what) {}
};

/// I + mu(t)A(t) is singular (or a scalar regressivity factor vanishes).
class NotRegressiveError : public Error {
public:
    explicit NotRegressiveError(const std::string& what) : Error("NotRegressive: " + what) {}
};

/// An exponent or product left the range representable in binary64.
class RangeError : public Error {
public:
    explicit RangeError(const std::string& what) : Error("Range: " + what) {}
};

/// No shift subsequence of the required length survived the tolerance.
class ExtractionFailedError : public Error {
public:
    explicit ExtractionFailedError(const std::string& what) : Error("ExtractionFailed: " + what) {}
};

/// A fundamental matrix slice could not be inverted.
class SingularMatrixError : public Error {
public:
    explicit SingularMatrixError(const std::string& what) : Error("SingularX: " + what) {}
};

/// Envelope fitting found no decay on one side of the splitting.
class NoDecayError : public Error {
public:
    explicit NoDecayError(const std::string& what) : Error("NoDecay: " + what) {}
};

/// The one-step matrix has an eigenvalue too close to the unit circle.
class UnitCircleError : public Error {
public:
    explicit UnitCircleError(const std::string& what) : Error("UnitCircleEigenvalue: " + what) {}
};

/// The dichotomy decay cannot certify the requested truncation tolerance.
class TailNotCertifiedError : public Error {
public:
    explicit TailNotCertifiedError(const std::string& what) : Error("TailNotCertified: " + what) {}
};

/// Picard iteration hit the iteration cap before the stopping rule.
class MaxIterError : public Error {
public:
    explicit MaxIterError(const std::string& what) : Error("MaxIterExceeded: " + what) {}
};

/// Successive-difference ratios exceeded 1 repeatedly.
class NonContractionError : public Error {
public:
    explicit NonContractionError(const std::string& what) : Error("NonContraction: " + what) {}
};

/// Invalid argument to a library operation (precondition violation).
class InvalidArgumentError : public Error {
public:
    explicit InvalidArgumentError(const std::string& what) : Error("InvalidArgument: " + what) {}
};

} // namespace qts
