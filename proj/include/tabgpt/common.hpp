#ifndef TABGPT_COMMON_HPP
#define TABGPT_COMMON_HPP

#include <stdexcept>
#include <string>

namespace tabgpt {

// All recoverable failures surface as Error with a human-readable message.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace tabgpt

#endif
