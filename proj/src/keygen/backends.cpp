#include <cstdlib>
#include <regex>

#include "httplib.h"
#include "semstego/core/array_io.hpp"
#include "semstego/core/error.hpp"
#include "semstego/keygen/keygen.hpp"

namespace semstego::keygen {

namespace {

struct ParsedUrl {
  std::string origin;
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) throw TransportError("invalid endpoint URL '" + url + "'");
  if (url.rfind("https://", 0) == 0) {
    throw TransportError("https endpoints are not supported in this build");
  }
  return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

nlohmann::json post_json(const RemoteEndpoint& endpoint, const nlohmann::json& request) {
  const ParsedUrl url = parse_url(endpoint.url);
  httplib::Client client(url.origin);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());
  httplib::Headers headers;
  if (endpoint.credentials) headers.emplace("Authorization", "Bearer " + *endpoint.credentials);

  auto result = client.Post(url.path, headers, request.dump(), "application/json");
  if (!result) {
    throw TransportError("request to " + endpoint.url + " failed: " +
                         httplib::to_string(result.error()));
  }
  if (result->status < 200 || result->status >= 300) {
    throw TransportError("endpoint " + endpoint.url + " returned HTTP " +
                             std::to_string(result->status),
                         result->status);
  }
  try {
    return nlohmann::json::parse(result->body);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed response from " + endpoint.url + ": " + e.what());
  }
}

std::string string_field(const nlohmann::json& doc, const char* field, const std::string& url) {
  if (!doc.is_object() || !doc.contains(field) || !doc[field].is_string()) {
    throw ParseError("response from " + url + " lacks a string '" + field + "' field");
  }
  return doc[field].get<std::string>();
}

}  // namespace

std::string remote_caption(const ImageTensor& image, const RemoteEndpoint& endpoint) {
  const nlohmann::json request{{"image", base64_encode(encode_array(image.pixels))}};
  return string_field(post_json(endpoint, request), "caption", endpoint.url);
}

std::string remote_paraphrase(const std::string& private_text, const RemoteEndpoint& endpoint) {
  const nlohmann::json request{{"private_key", private_text}};
  return string_field(post_json(endpoint, request), "public_key", endpoint.url);
}

std::optional<std::string> credentials_from_env(const std::string& variable) {
  if (variable.empty()) return std::nullopt;
  const char* value = std::getenv(variable.c_str());
  if (!value || !*value) return std::nullopt;
  return std::string(value);
}

}  // namespace semstego::keygen
