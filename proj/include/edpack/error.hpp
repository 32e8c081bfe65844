#pragma once

#include <stdexcept>
#include <string>

namespace edpack {

// Malformed or invalid input data (bad JSON line, corrupt shard, duplicate id).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem failure: open, read, write, rename.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration value or unknown config key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace edpack
