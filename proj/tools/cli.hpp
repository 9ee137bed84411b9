#pragma once

#include "ragtutor/config.hpp"

#include <ostream>
#include <stop_token>
#include <string>
#include <vector>

namespace ragtutor::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point behind `ragtutor`. `args` excludes the program name.
/// Machine-readable output goes to `out`; logs, progress and diagnostics to `err`.
int run(const std::vector<std::string>& args, const EnvMap& env, std::ostream& out, std::ostream& err,
        std::stop_token stop = {});

} // namespace ragtutor::cli
