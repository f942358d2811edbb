#pragma once

#include <stdexcept>
#include <string>

namespace dombert {

// Malformed input files (corpus, packed corpus, vocabulary).
class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration values (unknown target, tau <= 0, ...).
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Out-of-range ids or labels handed to the model or the losses.
class InputError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Zero-norm domain embeddings, non-finite gradients.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace dombert
