#include "http_util.hpp"

#include "ragtutor/error.hpp"

#include <httplib.h>

namespace ragtutor::detail {

SplitUrl split_url(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw ArgumentError("URL lacks a scheme: " + std::string(url));
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ArgumentError("unsupported URL scheme: " + std::string(scheme));

    const auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    out.origin = std::string(url.substr(0, path_start));
    if (path_start != std::string_view::npos) {
        auto path = url.substr(path_start);
        while (!path.empty() && path.back() == '/') path.remove_suffix(1);
        out.base_path = std::string(path);
    }
    if (out.origin.size() == scheme_end + 3) throw ArgumentError("URL lacks a host: " + std::string(url));
    return out;
}

std::string join_path(std::string_view base, std::string_view path) {
    std::string out(base);
    while (!out.empty() && out.back() == '/') out.pop_back();
    if (path.empty() || path.front() != '/') out += '/';
    out += path;
    return out;
}

std::unique_ptr<httplib::Client> make_client(const SplitUrl& url, std::chrono::seconds read_timeout) {
    auto client = std::make_unique<httplib::Client>(url.origin);
    client->set_connection_timeout(std::chrono::seconds(10));
    client->set_read_timeout(read_timeout);
    client->set_write_timeout(std::chrono::seconds(30));
    return client;
}

} // namespace ragtutor::detail
