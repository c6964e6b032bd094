#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace prepguard {

// Input violates an operation's contract (shape mismatch, bad label, bad config).
struct RejectedInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// The model cannot drive the algorithm, e.g. flat logits handed to DeepFool.
struct DegenerateInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimizationDiverged : std::runtime_error {
  int step;
  OptimizationDiverged(const std::string& what, int step_index)
      : std::runtime_error(what + " (step " + std::to_string(step_index) + ")"),
        step(step_index) {}
};

struct ParseError : std::runtime_error {
  std::size_t offset;
  ParseError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
};

struct DefenseExecutionError : std::runtime_error {
  int transform_index;
  DefenseExecutionError(const std::string& what, int index)
      : std::runtime_error(what + " (transform " + std::to_string(index) + ")"),
        transform_index(index) {}
};

struct IngestionError : std::runtime_error {
  int row;
  IngestionError(const std::string& what, int row_number)
      : std::runtime_error(what + " (row " + std::to_string(row_number) + ")"),
        row(row_number) {}
};

struct SelectionError : std::runtime_error {
  int available;
  SelectionError(const std::string& what, int available_count)
      : std::runtime_error(what + " (" + std::to_string(available_count) + " available)"),
        available(available_count) {}
};

}  // namespace prepguard
