#pragma once

#include <stdexcept>
#include <string>

namespace adstage {

// Base for every error raised by the library. Subclasses name the failing
// stage so callers (the CLI in particular) can map them to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define ADSTAGE_DEFINE_ERROR(Name)              \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

ADSTAGE_DEFINE_ERROR(ShapeError);
ADSTAGE_DEFINE_ERROR(DegenerateBatchError);
ADSTAGE_DEFINE_ERROR(LabelError);
ADSTAGE_DEFINE_ERROR(GradientError);
ADSTAGE_DEFINE_ERROR(ArchiveError);
ADSTAGE_DEFINE_ERROR(TransferError);
ADSTAGE_DEFINE_ERROR(NotFoundError);
ADSTAGE_DEFINE_ERROR(ConfigError);
ADSTAGE_DEFINE_ERROR(IngestionError);
ADSTAGE_DEFINE_ERROR(DataError);
ADSTAGE_DEFINE_ERROR(SplitError);
ADSTAGE_DEFINE_ERROR(SmoteError);
ADSTAGE_DEFINE_ERROR(TrainingError);
ADSTAGE_DEFINE_ERROR(CheckpointError);
ADSTAGE_DEFINE_ERROR(EnsembleError);
ADSTAGE_DEFINE_ERROR(EvaluationError);
ADSTAGE_DEFINE_ERROR(DegenerateTestError);
ADSTAGE_DEFINE_ERROR(IoError);

#undef ADSTAGE_DEFINE_ERROR

} // namespace adstage
