// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace croprl::httputil {

struct ParsedUrl {
    std::string host;
    int port = 80;
    std::string path;  // always starts with '/'
};

/// Minimal http:// URL splitter; https needs TLS support this build does
/// not carry.
inline ParsedUrl parse_http_url(const std::string& url) {
    const std::string scheme = "http://";
    if (url.rfind(scheme, 0) != 0) {
        throw std::invalid_argument("endpoint must be an http:// URL: " + url);
    }
    std::string rest = url.substr(scheme.size());
    std::size_t slash = rest.find('/');
    std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
    ParsedUrl out;
    out.path = slash == std::string::npos ? "/" : rest.substr(slash);
    std::size_t colon = hostport.find(':');
    if (colon == std::string::npos) {
        out.host = hostport;
    } else {
        out.host = hostport.substr(0, colon);
        out.port = std::stoi(hostport.substr(colon + 1));
    }
    if (out.host.empty()) throw std::invalid_argument("endpoint URL has no host: " + url);
    return out;
}

}  // namespace croprl::httputil
