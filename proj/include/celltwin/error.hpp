#pragma once

#include <stdexcept>
#include <string>

namespace celltwin
{

/// Error category. The CLI maps each category onto a process exit code.
enum class ErrorCategory
{
    Config,  // exit 2
    Data,    // exit 3
    Runtime  // exit 4
};

class Error : public std::runtime_error
{
  public:
    Error(ErrorCategory category, std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), category_(category), code_(std::move(code))
    {
    }

    ErrorCategory category() const noexcept { return category_; }
    const std::string& code() const noexcept { return code_; }

  private:
    ErrorCategory category_;
    std::string code_;
};

class ConfigError : public Error
{
  public:
    explicit ConfigError(const std::string& message, std::string code = "ConfigError")
        : Error(ErrorCategory::Config, std::move(code), message)
    {
    }
};

class DataError : public Error
{
  public:
    DataError(std::string code, const std::string& message)
        : Error(ErrorCategory::Data, std::move(code), message)
    {
    }
};

class RuntimeError : public Error
{
  public:
    RuntimeError(std::string code, const std::string& message)
        : Error(ErrorCategory::Runtime, std::move(code), message)
    {
    }
};

#define CELLTWIN_DEFINE_ERROR(Name, Base)                                                          \
    class Name : public Base                                                                       \
    {                                                                                              \
      public:                                                                                      \
        explicit Name(const std::string& message) : Base(#Name, message) {}                        \
    };

// dataset
CELLTWIN_DEFINE_ERROR(MalformedRow, DataError)
CELLTWIN_DEFINE_ERROR(DuplicateCycle, DataError)
CELLTWIN_DEFINE_ERROR(UnknownCell, DataError)
CELLTWIN_DEFINE_ERROR(NonMonotoneCycles, DataError)
CELLTWIN_DEFINE_ERROR(InvalidRecord, DataError)
CELLTWIN_DEFINE_ERROR(NonDecreasingTail, DataError)
CELLTWIN_DEFINE_ERROR(AlreadyBelowFloor, DataError)
CELLTWIN_DEFINE_ERROR(ExtrapolationTooLong, DataError)

// model / filter / prognosis
CELLTWIN_DEFINE_ERROR(ZeroFadeCoefficient, RuntimeError)
CELLTWIN_DEFINE_ERROR(DegenerateWeights, RuntimeError)
CELLTWIN_DEFINE_ERROR(PreconditionViolation, RuntimeError)

// utility / retirement
CELLTWIN_DEFINE_ERROR(LengthMismatch, RuntimeError)
CELLTWIN_DEFINE_ERROR(IncompleteTrajectory, DataError)
CELLTWIN_DEFINE_ERROR(EmptyCandidateSet, RuntimeError)
CELLTWIN_DEFINE_ERROR(NotTriggered, RuntimeError)

// calibration / evaluation
CELLTWIN_DEFINE_ERROR(InsufficientFade, DataError)
CELLTWIN_DEFINE_ERROR(NoFitsSucceeded, DataError)
CELLTWIN_DEFINE_ERROR(NoTrueEol, DataError)

#undef CELLTWIN_DEFINE_ERROR

// Utility construction errors originate from the run configuration.
class DegenerateBounds : public ConfigError
{
  public:
    explicit DegenerateBounds(const std::string& message) : ConfigError(message, "DegenerateBounds") {}
};

class NonPositiveRisk : public ConfigError
{
  public:
    explicit NonPositiveRisk(const std::string& message) : ConfigError(message, "NonPositiveRisk") {}
};

class InvalidWeights : public ConfigError
{
  public:
    explicit InvalidWeights(const std::string& message) : ConfigError(message, "InvalidWeights") {}
};

inline void require(bool condition, const std::string& message)
{
    if (!condition)
        throw PreconditionViolation(message);
}

} // namespace celltwin
