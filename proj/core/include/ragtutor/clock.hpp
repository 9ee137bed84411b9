#pragma once

#include <chrono>
#include <mutex>

namespace ragtutor {

/// Monotonic time source. All timing math goes through this so tests and
/// replays can run on virtual time.
class Clock {
public:
    using duration = std::chrono::nanoseconds;
    using time_point = std::chrono::time_point<std::chrono::steady_clock, duration>;

    virtual ~Clock() = default;
    virtual time_point now() const = 0;
    virtual void sleep_until(time_point t) = 0;

    void sleep_for(duration d) { sleep_until(now() + d); }
};

/// std::chrono::steady_clock.
class SteadyClock final : public Clock {
public:
    time_point now() const override;
    void sleep_until(time_point t) override;

    static SteadyClock& instance();
};

/// Virtual clock: sleeping advances time instantly.
class ManualClock final : public Clock {
public:
    time_point now() const override;
    void sleep_until(time_point t) override;
    void advance(duration d);

private:
    mutable std::mutex mu_;
    time_point now_{};
};

inline double seconds_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

} // namespace ragtutor
