#pragma once

#include <stdexcept>
#include <string>

namespace mdil {

// Base of every error the library throws on a violated contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad experiment configuration (unknown key, missing key, invalid value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing data on disk: datasets, checkpoints, latent exports.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace mdil
