#pragma once

#include <stdexcept>
#include <string>

namespace hearlink {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define HEARLINK_DEFINE_ERROR(Name)          \
    class Name : public Error {              \
    public:                                  \
        using Error::Error;                  \
    }

// audio-ingest
HEARLINK_DEFINE_ERROR(DecodeError);
HEARLINK_DEFINE_ERROR(UnsupportedFormat);

// feature-extraction / aggregation
HEARLINK_DEFINE_ERROR(InsufficientPeriods);
HEARLINK_DEFINE_ERROR(StreamOrderError);

// linkage-engine
HEARLINK_DEFINE_ERROR(ConfigError);
HEARLINK_DEFINE_ERROR(MissingBaseline);
HEARLINK_DEFINE_ERROR(ValidationError);

// persistence
HEARLINK_DEFINE_ERROR(WriterViolation);
HEARLINK_DEFINE_ERROR(DuplicateRecord);
HEARLINK_DEFINE_ERROR(NotFound);
HEARLINK_DEFINE_ERROR(IoError);

// stats-protocol
HEARLINK_DEFINE_ERROR(InsufficientData);
HEARLINK_DEFINE_ERROR(DegenerateInput);
HEARLINK_DEFINE_ERROR(ManifestError);

// runtime
HEARLINK_DEFINE_ERROR(NoData);
HEARLINK_DEFINE_ERROR(Conflict);

#undef HEARLINK_DEFINE_ERROR

}  // namespace hearlink
