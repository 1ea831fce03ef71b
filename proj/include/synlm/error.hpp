#pragma once

#include <stdexcept>
#include <string>

namespace synlm {

// Malformed textual input: corpus lines, variant names, action strings.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or incompatible arguments.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An action that the parser state machine cannot apply.
class IllegalAction : public std::runtime_error {
 public:
  IllegalAction(int step, const std::string& rule)
      : std::runtime_error("illegal action at step " + std::to_string(step) + ": " + rule),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

// Training diverged or another runtime failure.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace synlm
