#pragma once

#include <stdexcept>
#include <string>

namespace coldetect {

/// Raised for every validation or runtime failure inside the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, const std::string& what)
      : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace coldetect
