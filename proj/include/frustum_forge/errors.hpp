#pragma once

#include <stdexcept>

namespace frustum_forge {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level failure: missing file, short read, failed rename.
struct IoError : Error {
  using Error::Error;
};

// Structurally invalid content: malformed JSON, out-of-range values,
// unknown config keys, violated type invariants.
struct FormatError : Error {
  using Error::Error;
};

// An identifier that nothing declares (camera_id, class_id).
struct ReferenceError : Error {
  using Error::Error;
};

// A detection class with no entry in the anchor table.
struct MissingAnchor : ReferenceError {
  using ReferenceError::ReferenceError;
};

// Rejection sampling ran out of placement attempts.
struct PlacementExhausted : Error {
  using Error::Error;
};

// Loss-normalizer denominator collapsed below 1e-12.
struct DegenerateEma : Error {
  using Error::Error;
};

// Cluster too thin to fit a box: fewer than 3 points or collinear in BEV.
struct DegenerateCluster : Error {
  using Error::Error;
};

// An aggregate metric was requested over an empty class set.
struct EmptyClassSet : Error {
  using Error::Error;
};

}  // namespace frustum_forge
