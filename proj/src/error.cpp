#include "trialx/error.hpp"

#include <utility>

namespace trialx {

IngestError::IngestError(std::string file, std::size_t line, const std::string& what)
    : Error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
      file_(std::move(file)),
      line_(line) {}

SpecError::SpecError(const std::string& what, std::size_t line, std::size_t column)
    : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + what),
      message_(what),
      line_(line),
      column_(column) {}

GridTooLargeError::GridTooLargeError(std::size_t size, std::size_t limit)
    : Error("candidate grid has " + std::to_string(size) + " candidates, limit is " +
            std::to_string(limit)),
      size_(size),
      limit_(limit) {}

}  // namespace trialx
