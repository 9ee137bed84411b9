#include "ragtutor/clock.hpp"

#include <thread>

namespace ragtutor {

Clock::time_point SteadyClock::now() const {
    return std::chrono::time_point_cast<duration>(std::chrono::steady_clock::now());
}

void SteadyClock::sleep_until(time_point t) {
    std::this_thread::sleep_until(t);
}

SteadyClock& SteadyClock::instance() {
    static SteadyClock clock;
    return clock;
}

Clock::time_point ManualClock::now() const {
    std::lock_guard lock(mu_);
    return now_;
}

void ManualClock::sleep_until(time_point t) {
    std::lock_guard lock(mu_);
    if (t > now_) now_ = t;
}

void ManualClock::advance(duration d) {
    std::lock_guard lock(mu_);
    if (d > duration::zero()) now_ += d;
}

} // namespace ragtutor
