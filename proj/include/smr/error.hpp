/*
 * Copyright 2026 The smr-ir Authors
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace smr {

// Base of every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid input data: duplicate ids, malformed files, broken invariants.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A lookup for a doc_id or query_id that does not exist.
class NotFound : public Error {
 public:
  using Error::Error;
};

// Malformed model output. Recoverable by retrying at a higher temperature.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Network failure that survived the transport retries, or an unusable
// response envelope from the endpoint.
class TransportError : public Error {
 public:
  using Error::Error;
};

// The endpoint rejected the request (4xx): bad key, model name, URL.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A scripted backend was called more times than it has canned responses.
class ScriptExhausted : public Error {
 public:
  using Error::Error;
};

// A judge reply that never yielded a usable score.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

}  // namespace smr
