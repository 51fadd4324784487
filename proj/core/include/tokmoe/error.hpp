// Copyright 2026 The TokenMoE Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TOKMOE_ERROR_HPP_
#define TOKMOE_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace tokmoe {

// Every library failure derives from Error. code() is a short stable tag the
// command-line tool prints as a prefix on the error stream.
class Error : public std::runtime_error {
 public:
  Error(std::string_view code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("E_DIM", what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error("E_DOMAIN", what) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& what) : Error("E_INDEX", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("E_CONFIG", what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error("E_DATA", what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error("E_PARSE", what) {}
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what) : Error("E_INTEGRITY", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("E_IO", what) {}
};

}  // namespace tokmoe

#endif  // TOKMOE_ERROR_HPP_
