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

#include "storinfer/error.hpp"

namespace storinfer {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kEmptyText: return "EmptyText";
    case Errc::kRemoteUnavailable: return "RemoteUnavailable";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kZeroVector: return "ZeroVector";
    case Errc::kDuplicateId: return "DuplicateId";
    case Errc::kEmptyIndex: return "EmptyIndex";
    case Errc::kIoFailure: return "IoFailure";
    case Errc::kCorruptFile: return "CorruptFile";
    case Errc::kChunkTooLarge: return "ChunkTooLarge";
    case Errc::kLlmUnavailable: return "LlmUnavailable";
    case Errc::kEmptyCompletion: return "EmptyCompletion";
    case Errc::kEmptyQuery: return "EmptyQuery";
    case Errc::kDomainError: return "DomainError";
    case Errc::kFileFormat: return "FileFormat";
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kBindFailure: return "BindFailure";
    case Errc::kArtifactLoadFailure: return "ArtifactLoadFailure";
  }
  return "Unknown";
}

}  // namespace storinfer
