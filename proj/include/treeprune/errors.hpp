/* Copyright 2026 The Treeprune Authors. All Rights Reserved.

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

#ifndef TREEPRUNE_ERRORS_HPP_
#define TREEPRUNE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace treeprune {

// Every failure raised by the library derives from Error. The kind() string
// is stable and used by the CLI when mapping failures to exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define TREEPRUNE_DEFINE_ERROR(Name)                                 \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(#Name, what) {}   \
  }

// model-io
TREEPRUNE_DEFINE_ERROR(IoError);
TREEPRUNE_DEFINE_ERROR(ParseError);
TREEPRUNE_DEFINE_ERROR(ValidationError);
TREEPRUNE_DEFINE_ERROR(UnsupportedDtype);
TREEPRUNE_DEFINE_ERROR(UnknownTemplate);
// graph-core
TREEPRUNE_DEFINE_ERROR(CycleError);
TREEPRUNE_DEFINE_ERROR(UnsupportedOpShape);
TREEPRUNE_DEFINE_ERROR(ShapeMismatch);
// op-attributes
TREEPRUNE_DEFINE_ERROR(UnknownOperator);
TREEPRUNE_DEFINE_ERROR(ConflictError);
// assoc-tree
TREEPRUNE_DEFINE_ERROR(UnboundedTree);
TREEPRUNE_DEFINE_ERROR(ChannelMismatch);
// scoring / rewriter
TREEPRUNE_DEFINE_ERROR(AxisError);
TREEPRUNE_DEFINE_ERROR(IndexError);
TREEPRUNE_DEFINE_ERROR(EmptyReference);
TREEPRUNE_DEFINE_ERROR(UnsupportedRewrite);
TREEPRUNE_DEFINE_ERROR(MaskConflict);
// interpreter
TREEPRUNE_DEFINE_ERROR(UnsupportedOp);

#undef TREEPRUNE_DEFINE_ERROR

}  // namespace treeprune

#endif  // TREEPRUNE_ERRORS_HPP_
