#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace evsched {

/// Base for every error raised by the library. Precondition violations on
/// plain arguments use std::invalid_argument / std::domain_error instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data: session JSON, config files, timestamps.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A serialized model that cannot be loaded. The message names the field.
class ModelFormatError : public Error {
 public:
  using Error::Error;
};

/// An iterative method that ran out of iterations.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during training or inference.
class NumericalError : public Error {
 public:
  using Error::Error;
};

using DiagnosticSink = std::function<void(std::string_view)>;

/// Replaces the process-wide diagnostic sink and returns the previous one.
/// An empty sink silences diagnostics. The default sink writes to stderr.
DiagnosticSink set_diagnostic_sink(DiagnosticSink sink);

/// Emits one diagnostic line through the current sink.
void diagnostic(std::string_view message);

}  // namespace evsched
