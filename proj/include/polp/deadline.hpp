#pragma once

#include "polp/error.hpp"

#include <chrono>
#include <optional>
#include <string>

namespace polp {

/// Wall-clock budget for one pipeline phase. A default-constructed deadline
/// never expires.
class Deadline {
public:
    using clock = std::chrono::steady_clock;

    Deadline() = default;

    static Deadline after(std::chrono::duration<double> budget) {
        Deadline d;
        d.expiry_ = clock::now() + std::chrono::duration_cast<clock::duration>(budget);
        return d;
    }

    /// Deadline for a budget given in seconds; zero or negative means unlimited.
    static Deadline seconds(double budget) {
        if (budget <= 0.0) return {};
        return after(std::chrono::duration<double>(budget));
    }

    bool expired() const { return expiry_ && clock::now() >= *expiry_; }

    void check(const std::string& module, const std::string& phase) const {
        if (expired()) throw ResourceError(module, "timeout exceeded during " + phase);
    }

private:
    std::optional<clock::time_point> expiry_;
};

} // namespace polp
