/* Copyright 2026 The StorInfer Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <string>
#include <string_view>

namespace storinfer::detail {

// "http://host:8080/api/" -> origin "http://host:8080", path "/api"
struct UrlParts {
  std::string origin;
  std::string path;
};

UrlParts split_url(std::string_view url);

std::string_view trim(std::string_view s) noexcept;

}  // namespace storinfer::detail
