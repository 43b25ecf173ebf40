#pragma once

#include <stdexcept>
#include <string>

namespace domainbench {

/// Base for every error raised by the library. Each stage-level failure named
/// in the pipeline contract has its own subclass so callers can map them to
/// exit codes or skip decisions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DOMAINBENCH_ERROR(Name)          \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

DOMAINBENCH_ERROR(MissingMetadata);
DOMAINBENCH_ERROR(EmptyCorpus);
DOMAINBENCH_ERROR(EmbeddingUnavailable);
DOMAINBENCH_ERROR(DimensionMismatch);
DOMAINBENCH_ERROR(EmptyDocumentSet);
DOMAINBENCH_ERROR(EmptyWordList);
DOMAINBENCH_ERROR(NoSentences);
DOMAINBENCH_ERROR(TokenizerMismatch);
DOMAINBENCH_ERROR(ContextOverflow);
DOMAINBENCH_ERROR(ScorerUnavailable);
DOMAINBENCH_ERROR(InsufficientRecords);
DOMAINBENCH_ERROR(InsufficientTokens);
DOMAINBENCH_ERROR(LayerCountMismatch);
DOMAINBENCH_ERROR(MissingTargetFields);
DOMAINBENCH_ERROR(DegenerateSeries);
DOMAINBENCH_ERROR(SchemaError);
DOMAINBENCH_ERROR(StaleArtifact);
DOMAINBENCH_ERROR(ConfigInvalid);

#undef DOMAINBENCH_ERROR

}  // namespace domainbench
