#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tempid {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed model file, unknown key, bad reference.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// A density was requested for a node whose value or parents are unassigned.
class MissingAssignment : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the domain it was supposed to belong to.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A Gibbs local conditional came out all-zero: the node's Markov blanket
/// admits no value.
class BlanketInconsistency : public Error {
 public:
  explicit BlanketInconsistency(std::string node)
      : Error("blanket inconsistency: no value of '" + node +
              "' has positive mass given its Markov blanket"),
        node_(std::move(node)) {}
  const std::string& node() const noexcept { return node_; }

 private:
  std::string node_;
};

/// Evidence or domain restrictions leave no configuration of positive mass.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class RejectionBudgetExceeded : public Error {
 public:
  RejectionBudgetExceeded(std::uint64_t attempts, std::uint64_t rejections)
      : Error("rejection budget exhausted after " + std::to_string(attempts) +
              " forward attempts (rejection rate " +
              std::to_string(attempts == 0 ? 0.0
                                           : static_cast<double>(rejections) /
                                                 static_cast<double>(attempts)) +
              ")"),
        attempts_(attempts),
        rejections_(rejections) {}

  std::uint64_t attempts() const noexcept { return attempts_; }
  std::uint64_t rejections() const noexcept { return rejections_; }
  double rejection_rate() const noexcept {
    return attempts_ == 0 ? 0.0
                          : static_cast<double>(rejections_) /
                                static_cast<double>(attempts_);
  }

 private:
  std::uint64_t attempts_;
  std::uint64_t rejections_;
};

}  // namespace tempid
