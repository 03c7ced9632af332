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

#include <string_view>

namespace smr {

// Built from assets/ at compile time. The policy prompt is sent as the system
// message on every decision call.
std::string_view default_policy_prompt() noexcept;

// Judge prompt with {query_original} and {query} placeholders.
std::string_view default_alignment_prompt() noexcept;

}  // namespace smr
