#ifndef EXNER_ERRORS_H_
#define EXNER_ERRORS_H_

#include <stdexcept>
#include <string>

namespace exner {

// Malformed input: bad files, invalid examples, shape mismatches.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The request is valid but the current state cannot serve it.
class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace exner

#endif  // EXNER_ERRORS_H_
