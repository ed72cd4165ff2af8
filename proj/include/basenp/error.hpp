#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace basenp {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line` is 1-based (0 when unknown); `offset` is a
/// 0-based byte offset within that line (or within the whole text for
/// single-line inputs such as patterns).
class ParseError : public Error
{
public:
  ParseError(const std::string& what, std::size_t line = 0, std::size_t offset = 0)
    : Error(format(what, line, offset)), line_(line), offset_(offset), message_(what)
  {}

  std::size_t line() const noexcept { return line_; }
  std::size_t offset() const noexcept { return offset_; }
  const std::string& message() const noexcept { return message_; }

private:
  static std::string format(const std::string& what, std::size_t line, std::size_t offset)
  {
    if (line == 0) return what + " (at offset " + std::to_string(offset) + ")";
    return "line " + std::to_string(line) + ": " + what;
  }

  std::size_t line_;
  std::size_t offset_;
  std::string message_;
};

/// IOB sequence that is not the image of any span annotation.
class InvalidSequenceError : public Error
{
public:
  InvalidSequenceError(const std::string& what, std::size_t index)
    : Error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

/// A word or tag that cannot be written in the requested encoding.
class EncodingError : public Error
{
public:
  using Error::Error;
};

/// Two corpora that were expected to carry the same token sequences do not.
class AlignmentError : public Error
{
public:
  using Error::Error;
};

/// A pattern construct that has no flat-text regular-expression equivalent.
class UnsupportedAtomError : public Error
{
public:
  using Error::Error;
};

} // namespace basenp
