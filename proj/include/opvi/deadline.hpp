#ifndef OPVI_DEADLINE_HPP
#define OPVI_DEADLINE_HPP

#include <chrono>
#include <optional>
#include <string>

#include "opvi/errors.hpp"

namespace opvi {

/// Cooperative wall-clock budget. Long loops call check() and unwind with
/// TimeoutError once the budget is spent. A zero budget expires at once.
class Deadline {
public:
    using clock = std::chrono::steady_clock;

    Deadline() = default;
    static Deadline after(double seconds)
    {
        Deadline d;
        d.at_ = clock::now() + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(seconds));
        d.zero_ = seconds <= 0.0;
        return d;
    }

    bool unlimited() const noexcept { return !at_.has_value(); }
    bool expired() const { return at_ && (zero_ || clock::now() >= *at_); }
    void check(const std::string& what) const
    {
        if (expired())
            throw TimeoutError(what + ": time limit exceeded");
    }

private:
    std::optional<clock::time_point> at_;
    bool zero_ = false;
};

} // namespace opvi

#endif // OPVI_DEADLINE_HPP
