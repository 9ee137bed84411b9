#include "cli.hpp"

#include <csignal>
#include <iostream>
#include <pthread.h>
#include <thread>

extern char** environ;

int main(int argc, char** argv) {
    ragtutor::EnvMap env;
    for (char** e = environ; e && *e; ++e) {
        std::string_view kv(*e);
        const auto eq = kv.find('=');
        if (eq != std::string_view::npos) env.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
    }

    // SIGINT/SIGTERM request a graceful stop; a dedicated thread waits for them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    std::stop_source stop;
    std::thread([signals, stop]() mutable {
        int sig = 0;
        if (sigwait(&signals, &sig) == 0) {
            std::cerr << "signal " << sig << " received, shutting down\n";
            stop.request_stop();
        }
    }).detach();

    std::vector<std::string> args(argv + 1, argv + argc);
    return ragtutor::cli::run(args, env, std::cout, std::cerr, stop.get_token());
}
