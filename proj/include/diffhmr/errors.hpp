#pragma once

#include <stdexcept>
#include <string>

namespace diffhmr {

// All library failures derive from Error; `kind()` is a stable machine name.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

#define DIFFHMR_DEFINE_ERROR(NAME)                                  \
    class NAME : public Error {                                     \
    public:                                                         \
        explicit NAME(const std::string& msg) : Error(#NAME, msg) {} \
    };

DIFFHMR_DEFINE_ERROR(DegenerateInput)
DIFFHMR_DEFINE_ERROR(OutOfRange)
DIFFHMR_DEFINE_ERROR(DimensionMismatch)
DIFFHMR_DEFINE_ERROR(InvalidSchedule)
DIFFHMR_DEFINE_ERROR(InvalidConfig)
DIFFHMR_DEFINE_ERROR(IoError)
DIFFHMR_DEFINE_ERROR(FormatError)
DIFFHMR_DEFINE_ERROR(EmptyInput)
DIFFHMR_DEFINE_ERROR(NonFiniteLoss)

#undef DIFFHMR_DEFINE_ERROR

}  // namespace diffhmr
