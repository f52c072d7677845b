#ifndef BPT_ERRORS_HPP
#define BPT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bpt {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInputError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct VocabError : Error {
  using Error::Error;
};

struct TrainingError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct UsageError : Error {
  using Error::Error;
};

}  // namespace bpt

#endif  // BPT_ERRORS_HPP
