#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "semstego/core/config.hpp"
#include "semstego/core/rng.hpp"
#include "semstego/core/tensor.hpp"

namespace semstego::keygen {

struct KeyPrompt {
  std::string text;
  std::vector<std::string> tokens;

  std::size_t token_count() const noexcept { return tokens.size(); }
  // Splits on whitespace; throws InvalidKeyError when no token remains.
  static KeyPrompt from_text(const std::string& text);
  bool operator==(const KeyPrompt& other) const = default;
};

struct KeyPair {
  KeyPrompt private_key;
  KeyPrompt public_key;
  std::string session_id;

  // Throws InvalidKeyError when the two texts coincide.
  static KeyPair make(KeyPrompt private_key, KeyPrompt public_key, std::string session_id = {});
};

class Captioner {
 public:
  virtual ~Captioner() = default;
  virtual std::string caption(const ImageTensor& image) = 0;
};

class Paraphraser {
 public:
  virtual ~Paraphraser() = default;
  virtual std::string paraphrase(const std::string& private_text) = 0;
};

// Class label -> fixed caption.
class TemplateCaptioner : public Captioner {
 public:
  explicit TemplateCaptioner(std::map<std::string, std::string> captions)
      : captions_(std::move(captions)) {}
  std::string caption(const ImageTensor& image) override;

 private:
  std::map<std::string, std::string> captions_;
};

// Private caption -> configured same-category decoy.
class TemplateParaphraser : public Paraphraser {
 public:
  explicit TemplateParaphraser(std::map<std::string, std::string> decoys)
      : decoys_(std::move(decoys)) {}
  std::string paraphrase(const std::string& private_text) override;

 private:
  std::map<std::string, std::string> decoys_;
};

struct RemoteEndpoint {
  std::string url;  // http://host[:port]/path
  std::optional<std::string> credentials;
  std::chrono::milliseconds timeout{10000};
};

// POST {"image": base64(array file)} -> {"caption": ...}.
std::string remote_caption(const ImageTensor& image, const RemoteEndpoint& endpoint);
// POST {"private_key": ...} -> {"public_key": ...}.
std::string remote_paraphrase(const std::string& private_text, const RemoteEndpoint& endpoint);

class RemoteCaptioner : public Captioner {
 public:
  explicit RemoteCaptioner(RemoteEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  std::string caption(const ImageTensor& image) override {
    return remote_caption(image, endpoint_);
  }

 private:
  RemoteEndpoint endpoint_;
};

class RemoteParaphraser : public Paraphraser {
 public:
  explicit RemoteParaphraser(RemoteEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  std::string paraphrase(const std::string& private_text) override {
    return remote_paraphrase(private_text, endpoint_);
  }

 private:
  RemoteEndpoint endpoint_;
};

// Reads the credential from the named environment variable, if set.
std::optional<std::string> credentials_from_env(const std::string& variable);

std::unique_ptr<Captioner> make_captioner(const RunConfig& config);
std::unique_ptr<Paraphraser> make_paraphraser(const RunConfig& config);

KeyPrompt extract_private_key(const ImageTensor& image, Captioner& backend);
// Regenerates once when the paraphrase repeats the private key.
KeyPrompt generate_public_key(const KeyPrompt& private_key, Paraphraser& backend);

// Uniform draw from the decoy-table keys other than the true private key.
KeyPrompt sample_decoy_key(const std::map<std::string, std::string>& decoy_table,
                           const KeyPrompt& true_private, SeededRng& rng);

std::map<std::string, std::string> load_decoy_table(const std::filesystem::path& path);

enum class Role { legitimate, eve1, eve2, eve3 };
enum class Access { both, public_only, none };

Role parse_role(const std::string& name);
std::string role_name(Role role);
Access access_policy(Role role);
inline constexpr Role kAllRoles[] = {Role::legitimate, Role::eve1, Role::eve2, Role::eve3};

struct KeyGrant {
  std::optional<KeyPrompt> private_key;
  std::optional<KeyPrompt> public_key;
};

// In-process key agreement center. Reads may run concurrently.
class KeyRegistry {
 public:
  // Assigns a session id when the pair has none; returns the id.
  std::string register_pair(KeyPair pair);
  KeyGrant get(const std::string& session_id, Role role) const;
  KeyGrant get(const std::string& session_id, const std::string& role) const;
  // Throws AccessError when `decoy` equals the session's private key.
  void check_decoy(const std::string& session_id, const KeyPrompt& decoy) const;
  std::size_t size() const;

 private:
  const KeyPair& find(const std::string& session_id) const;

  mutable std::shared_mutex mutex_;
  std::map<std::string, KeyPair> sessions_;
  std::size_t next_id_ = 0;
};

}  // namespace semstego::keygen
