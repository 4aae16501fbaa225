#pragma once

#include <stdexcept>
#include <string>

namespace triplet {

struct InvalidInput : std::runtime_error {
  explicit InvalidInput(const std::string& msg) : std::runtime_error("InvalidInput: " + msg) {}
};

struct InvalidState : std::runtime_error {
  explicit InvalidState(const std::string& msg) : std::runtime_error("InvalidState: " + msg) {}
};

struct DegenerateFace : std::runtime_error {
  explicit DegenerateFace(const std::string& msg) : std::runtime_error("DegenerateFace: " + msg) {}
};

struct NonManifold : std::runtime_error {
  explicit NonManifold(const std::string& msg) : std::runtime_error("NonManifold: " + msg) {}
};

struct ExtractionFailed : std::runtime_error {
  explicit ExtractionFailed(const std::string& msg)
      : std::runtime_error("ExtractionFailed: " + msg) {}
};

struct InvalidKernel : std::runtime_error {
  explicit InvalidKernel(const std::string& msg) : std::runtime_error("InvalidKernel: " + msg) {}
};

struct DatasetError : std::runtime_error {
  explicit DatasetError(const std::string& msg) : std::runtime_error("DatasetError: " + msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("IoError: " + msg) {}
};

struct VersionError : std::runtime_error {
  explicit VersionError(const std::string& msg) : std::runtime_error("VersionError: " + msg) {}
};

struct LossDiverged : std::runtime_error {
  explicit LossDiverged(const std::string& msg) : std::runtime_error("LossDiverged: " + msg) {}
};

}  // namespace triplet
