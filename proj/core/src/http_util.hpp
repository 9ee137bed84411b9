#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <string_view>

namespace httplib {
class Client;
}

namespace ragtutor::detail {

/// "http://host:8080/v1/" -> origin "http://host:8080", base_path "/v1".
struct SplitUrl {
    std::string origin;
    std::string base_path;
};

SplitUrl split_url(std::string_view url);

/// Joins a base path and an endpoint path with exactly one slash.
std::string join_path(std::string_view base, std::string_view path);

std::unique_ptr<httplib::Client> make_client(const SplitUrl& url, std::chrono::seconds read_timeout);

} // namespace ragtutor::detail
