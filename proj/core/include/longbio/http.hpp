#pragma once

#include <string>
#include <utility>
#include <vector>

namespace longbio {

struct HttpReply {
  int status = 0;       // 0 means transport-level failure
  std::string body;
  std::string error;    // non-empty on transport failure
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

// Split "http://host:port/some/path" into base ("http://host:port") and path
// ("/some/path", "/" when absent). Throws on unsupported schemes.
void split_url(const std::string& url, std::string& base, std::string& path);

HttpReply http_post(const std::string& url, const std::string& body,
                    const std::string& content_type, int timeout_sec = 120);
HttpReply http_post(const std::string& url, const std::string& body,
                    const std::string& content_type, const HttpHeaders& headers,
                    int timeout_sec = 120);

}  // namespace longbio
