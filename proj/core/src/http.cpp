#include "longbio/http.hpp"

#include <httplib.h>

#include "longbio/util.hpp"

namespace longbio {

void split_url(const std::string& url, std::string& base, std::string& path) {
  size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error("URL lacks a scheme: \"" + url + "\"");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https")
    throw Error("unsupported URL scheme \"" + scheme + "\"");
  const size_t path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    base = url;
    path = "/";
  } else {
    base = url.substr(0, path_start);
    path = url.substr(path_start);
  }
}

HttpReply http_post(const std::string& url, const std::string& body,
                    const std::string& content_type, int timeout_sec) {
  return http_post(url, body, content_type, {}, timeout_sec);
}

HttpReply http_post(const std::string& url, const std::string& body,
                    const std::string& content_type, const HttpHeaders& headers,
                    int timeout_sec) {
  std::string base, path;
  split_url(url, base, path);
  httplib::Client client(base);
  client.set_connection_timeout(timeout_sec, 0);
  client.set_read_timeout(timeout_sec, 0);
  client.set_write_timeout(timeout_sec, 0);
  httplib::Headers extra;
  for (const auto& [key, value] : headers) extra.emplace(key, value);
  auto res = client.Post(path, extra, body, content_type);
  HttpReply reply;
  if (!res) {
    reply.error = httplib::to_string(res.error());
    return reply;
  }
  reply.status = res->status;
  reply.body = res->body;
  return reply;
}

}  // namespace longbio
