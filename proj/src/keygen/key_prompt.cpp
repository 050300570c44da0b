#include <algorithm>
#include <sstream>

#include "semstego/core/error.hpp"
#include "semstego/keygen/keygen.hpp"

namespace semstego::keygen {

KeyPrompt KeyPrompt::from_text(const std::string& text) {
  KeyPrompt key;
  std::istringstream in(text);
  for (std::string token; in >> token;) key.tokens.push_back(token);
  if (key.tokens.empty()) throw InvalidKeyError("key prompt is empty");
  for (std::size_t i = 0; i < key.tokens.size(); ++i) {
    if (i) key.text += ' ';
    key.text += key.tokens[i];
  }
  return key;
}

KeyPair KeyPair::make(KeyPrompt private_key, KeyPrompt public_key, std::string session_id) {
  if (private_key.text == public_key.text) {
    throw InvalidKeyError("public key must differ from the private key");
  }
  return KeyPair{std::move(private_key), std::move(public_key), std::move(session_id)};
}

std::string TemplateCaptioner::caption(const ImageTensor& image) {
  if (!image.label) throw InvalidKeyError("template captioner needs a labelled image");
  auto it = captions_.find(*image.label);
  if (it == captions_.end()) {
    throw InvalidKeyError("no caption template for label '" + *image.label + "'");
  }
  return it->second;
}

std::string TemplateParaphraser::paraphrase(const std::string& private_text) {
  auto it = decoys_.find(private_text);
  if (it == decoys_.end()) {
    throw InvalidKeyError("no decoy configured for '" + private_text + "'");
  }
  return it->second;
}

std::unique_ptr<Captioner> make_captioner(const RunConfig& config) {
  if (config.captioner_backend == "template") {
    return std::make_unique<TemplateCaptioner>(config.caption_table);
  }
  if (config.captioner_backend == "remote") {
    return std::make_unique<RemoteCaptioner>(
        RemoteEndpoint{config.captioner_endpoint, credentials_from_env(config.credentials_env),
                       std::chrono::milliseconds(
                           static_cast<long>(config.remote_timeout_s * 1000.0))});
  }
  throw RangeError("unknown captioner backend '" + config.captioner_backend + "'");
}

std::unique_ptr<Paraphraser> make_paraphraser(const RunConfig& config) {
  if (config.paraphraser_backend == "template") {
    return std::make_unique<TemplateParaphraser>(config.decoy_table);
  }
  if (config.paraphraser_backend == "remote") {
    return std::make_unique<RemoteParaphraser>(
        RemoteEndpoint{config.paraphraser_endpoint, credentials_from_env(config.credentials_env),
                       std::chrono::milliseconds(
                           static_cast<long>(config.remote_timeout_s * 1000.0))});
  }
  throw RangeError("unknown paraphraser backend '" + config.paraphraser_backend + "'");
}

KeyPrompt extract_private_key(const ImageTensor& image, Captioner& backend) {
  const std::string caption = backend.caption(image);
  return KeyPrompt::from_text(caption);
}

KeyPrompt generate_public_key(const KeyPrompt& private_key, Paraphraser& backend) {
  if (private_key.tokens.empty()) throw InvalidKeyError("private key is empty");
  for (int attempt = 0; attempt < 2; ++attempt) {
    KeyPrompt candidate = KeyPrompt::from_text(backend.paraphrase(private_key.text));
    if (candidate.text != private_key.text) return candidate;
  }
  throw InvalidKeyError("paraphraser returned the private key twice");
}

KeyPrompt sample_decoy_key(const std::map<std::string, std::string>& decoy_table,
                           const KeyPrompt& true_private, SeededRng& rng) {
  std::vector<std::string> candidates;
  for (const auto& [key, _] : decoy_table) {
    if (key != true_private.text) candidates.push_back(key);
  }
  if (candidates.empty()) throw InvalidKeyError("decoy table has no alternative private key");
  return KeyPrompt::from_text(candidates[rng.uniform_index(candidates.size())]);
}

std::map<std::string, std::string> load_decoy_table(const std::filesystem::path& path) {
  const nlohmann::json doc = read_json_file(path);
  if (!doc.is_object()) throw ParseError("decoy table must be a JSON object");
  std::map<std::string, std::string> table;
  for (const auto& [key, value] : doc.items()) {
    if (!value.is_string()) throw ParseError("decoy for '" + key + "' is not a string");
    table.emplace(key, value.get<std::string>());
  }
  return table;
}

Role parse_role(const std::string& name) {
  if (name == "legitimate") return Role::legitimate;
  if (name == "eve1") return Role::eve1;
  if (name == "eve2") return Role::eve2;
  if (name == "eve3") return Role::eve3;
  throw AccessError("unknown role '" + name + "'");
}

std::string role_name(Role role) {
  switch (role) {
    case Role::legitimate: return "legitimate";
    case Role::eve1: return "eve1";
    case Role::eve2: return "eve2";
    case Role::eve3: return "eve3";
  }
  return "unknown";
}

Access access_policy(Role role) {
  switch (role) {
    case Role::legitimate: return Access::both;
    case Role::eve1: return Access::none;
    case Role::eve2:
    case Role::eve3: return Access::public_only;
  }
  return Access::none;
}

}  // namespace semstego::keygen
