#pragma once

#include <stdexcept>
#include <string>

namespace sitewatch {

// Base for every error the library raises. kind() is the stable name used in
// control-API replies and CLI diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define SITEWATCH_ERROR(Name)                                                  \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& message) : Error(#Name, message) {}   \
    }

SITEWATCH_ERROR(MissingFile);
SITEWATCH_ERROR(SchemaViolation);
SITEWATCH_ERROR(InvariantViolation);
SITEWATCH_ERROR(InvalidScenario);
SITEWATCH_ERROR(OutOfOrderFrame);
SITEWATCH_ERROR(ValidationError);
SITEWATCH_ERROR(Unreachable);
SITEWATCH_ERROR(DomainError);
SITEWATCH_ERROR(ClipMismatch);
SITEWATCH_ERROR(EmptyCell);
SITEWATCH_ERROR(RunActive);
SITEWATCH_ERROR(ClipLoadError);
SITEWATCH_ERROR(TopologyUnreachable);
SITEWATCH_ERROR(BufferOverrun);

#undef SITEWATCH_ERROR

}  // namespace sitewatch
