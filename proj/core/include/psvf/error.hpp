#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace psvf {

// Base of every error raised by the library. The CLI maps these to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PSVF_DEFINE_ERROR(Name)          \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

PSVF_DEFINE_ERROR(UnknownLabel);
PSVF_DEFINE_ERROR(IntegrityError);
PSVF_DEFINE_ERROR(NoResponses);
PSVF_DEFINE_ERROR(EmptySubgroup);
PSVF_DEFINE_ERROR(UnsupportedFormat);
PSVF_DEFINE_ERROR(IoError);
PSVF_DEFINE_ERROR(OutOfRange);
PSVF_DEFINE_ERROR(TooShort);
PSVF_DEFINE_ERROR(MissingAudio);
PSVF_DEFINE_ERROR(TooFewFrames);
PSVF_DEFINE_ERROR(LengthMismatch);
PSVF_DEFINE_ERROR(MissingCache);
PSVF_DEFINE_ERROR(VersionMismatch);
PSVF_DEFINE_ERROR(ShapeMismatch);
PSVF_DEFINE_ERROR(TooFewSongs);
PSVF_DEFINE_ERROR(MissingFeatures);
PSVF_DEFINE_ERROR(NonFiniteLoss);
PSVF_DEFINE_ERROR(ConfigError);

#undef PSVF_DEFINE_ERROR

// Carries the offending file/row/column so diagnostics can point at the input.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t row, std::string column,
             std::string reason)
      : Error(file + ":" + std::to_string(row) + " [" + column + "] " + reason),
        file_(std::move(file)),
        row_(row),
        column_(std::move(column)),
        reason_(std::move(reason)) {}

  const std::string& file() const { return file_; }
  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string file_;
  std::size_t row_;
  std::string column_;
  std::string reason_;
};

}  // namespace psvf
