#include "dustnet/errors.hpp"

namespace dustnet {

ScheduleError::ScheduleError(std::string term, const std::string& message)
    : std::runtime_error(term + ": " + message), term_(std::move(term)) {}

}  // namespace dustnet
