#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace polymerlab {

enum class ErrorKind {
  InvalidVertex,
  BudgetExceeded,
  EmptyCluster,
  ExtinctTree,
  HorizonExceedsGraph,
  NumericalError,
  WrongFamily,
  InsufficientData,
  MissingHistory,
  ConfigError,
  IoError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidVertex: return "InvalidVertex";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::EmptyCluster: return "EmptyCluster";
    case ErrorKind::ExtinctTree: return "ExtinctTree";
    case ErrorKind::HorizonExceedsGraph: return "HorizonExceedsGraph";
    case ErrorKind::NumericalError: return "NumericalError";
    case ErrorKind::WrongFamily: return "WrongFamily";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::MissingHistory: return "MissingHistory";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace polymerlab
