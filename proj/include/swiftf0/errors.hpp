#pragma once

#include <stdexcept>
#include <string>

namespace swiftf0 {

// Every failure raised by the library derives from Error so callers can catch
// one type; the subclasses name the contract that was broken.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SWIFTF0_DEFINE_ERROR(Name)                                  \
    class Name : public Error {                                     \
    public:                                                         \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    }

SWIFTF0_DEFINE_ERROR(FormatError);
SWIFTF0_DEFINE_ERROR(UnsupportedError);
SWIFTF0_DEFINE_ERROR(ArgumentError);
SWIFTF0_DEFINE_ERROR(ShapeError);
SWIFTF0_DEFINE_ERROR(DomainError);
SWIFTF0_DEFINE_ERROR(IndexError);
SWIFTF0_DEFINE_ERROR(InputTooShort);
SWIFTF0_DEFINE_ERROR(StateError);
SWIFTF0_DEFINE_ERROR(EmptyBatchError);
SWIFTF0_DEFINE_ERROR(UndefinedMetric);
SWIFTF0_DEFINE_ERROR(AlignmentError);
SWIFTF0_DEFINE_ERROR(DivergenceError);
SWIFTF0_DEFINE_ERROR(IoError);

// Raised by augmentation when a segment carries no signal energy; the
// training loop draws another segment instead of failing.
SWIFTF0_DEFINE_ERROR(SkipExample);

#undef SWIFTF0_DEFINE_ERROR

} // namespace swiftf0
