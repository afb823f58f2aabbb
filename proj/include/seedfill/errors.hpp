#pragma once

#include <stdexcept>
#include <string>

namespace seedfill {

// Precondition violations on caller-supplied values.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An object is not in the state an operation requires (e.g. a view that has
// not been inpainted yet).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Point configurations for which a rigid fit is not unique.
class DegenerateConfiguration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingObjectMask : public InvalidState {
 public:
  explicit MissingObjectMask(int view_id)
      : InvalidState("view " + std::to_string(view_id) +
                     " has no object mask; run segmentation first"),
        view_id_(view_id) {}
  int view_id() const { return view_id_; }

 private:
  int view_id_;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace seedfill
