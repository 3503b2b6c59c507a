#pragma once

#include <stdexcept>
#include <string>

namespace scnet {

// Bad CLI flags / malformed run configuration. CLI exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable/unwritable files, schema violations in datasets, checkpoints,
// vocabularies or word-vector files. CLI exit code 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A numeric check failed beyond its pinned tolerance (gradcheck, non-finite
// loss abort). CLI exit code 2.
struct ToleranceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace scnet
