#ifndef LIFTKB_ERRORS_HPP
#define LIFTKB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace liftkb {

// Bad input file content. Carries the 1-based line number when one applies.
class ParseError : public std::runtime_error {
   public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
    explicit ParseError(const std::string& what) : std::runtime_error(what), line_(0) {}

    std::size_t line() const { return line_; }

   private:
    std::size_t line_;
};

// Inputs that parse fine but cannot be used (empty stores, vocabulary mismatches, ...).
class DataError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Invalid arguments or option combinations.
class UsageError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Non-finite losses or gradients during optimization.
class NumericalError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

}  // namespace liftkb

#endif  // LIFTKB_ERRORS_HPP
