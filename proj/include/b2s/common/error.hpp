#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace b2s {

/// Categories surfaced by the CLI as `error[<category>]: ...`.
enum class ErrorKind {
  invalid_argument,
  shape_mismatch,
  spec_mismatch,
  bad_magic,
  version_mismatch,
  truncated,
  run_overflow,
  degenerate_scene,
  fingerprint_mismatch,
  label_out_of_range,
  non_finite,
  regime_mismatch,
  missing_gt_binary,
  dataset_empty,
  mode_mismatch,
  config,
  io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::spec_mismatch: return "spec_mismatch";
    case ErrorKind::bad_magic: return "bad_magic";
    case ErrorKind::version_mismatch: return "version_mismatch";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::run_overflow: return "run_overflow";
    case ErrorKind::degenerate_scene: return "degenerate_scene";
    case ErrorKind::fingerprint_mismatch: return "fingerprint_mismatch";
    case ErrorKind::label_out_of_range: return "label_out_of_range";
    case ErrorKind::non_finite: return "non_finite";
    case ErrorKind::regime_mismatch: return "regime_mismatch";
    case ErrorKind::missing_gt_binary: return "missing_gt_binary";
    case ErrorKind::dataset_empty: return "dataset_empty";
    case ErrorKind::mode_mismatch: return "mode_mismatch";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace b2s
