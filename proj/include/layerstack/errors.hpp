#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace layerstack {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad geometry, material, bound or mesh input.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class AssemblyError : public Error {
 public:
  using Error::Error;
};

// Iterative method gave up; carries the residual trace it produced.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::vector<double> residuals)
      : Error(what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const { return residuals_; }

 private:
  std::vector<double> residuals_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& message)
      : Error(path + ": " + message), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace layerstack
