#include <mutex>

#include "semstego/core/error.hpp"
#include "semstego/keygen/keygen.hpp"

namespace semstego::keygen {

std::string KeyRegistry::register_pair(KeyPair pair) {
  if (pair.private_key.text == pair.public_key.text) {
    throw InvalidKeyError("public key must differ from the private key");
  }
  std::unique_lock lock(mutex_);
  if (pair.session_id.empty()) {
    pair.session_id = "session-" + std::to_string(next_id_++);
  }
  std::string id = pair.session_id;
  sessions_.insert_or_assign(id, std::move(pair));
  return id;
}

const KeyPair& KeyRegistry::find(const std::string& session_id) const {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("unknown session '" + session_id + "'");
  return it->second;
}

KeyGrant KeyRegistry::get(const std::string& session_id, Role role) const {
  std::shared_lock lock(mutex_);
  const KeyPair& pair = find(session_id);
  KeyGrant grant;
  switch (access_policy(role)) {
    case Access::both:
      grant.private_key = pair.private_key;
      grant.public_key = pair.public_key;
      break;
    case Access::public_only:
      grant.public_key = pair.public_key;
      break;
    case Access::none:
      break;
  }
  return grant;
}

KeyGrant KeyRegistry::get(const std::string& session_id, const std::string& role) const {
  return get(session_id, parse_role(role));
}

void KeyRegistry::check_decoy(const std::string& session_id, const KeyPrompt& decoy) const {
  std::shared_lock lock(mutex_);
  if (find(session_id).private_key.text == decoy.text) {
    throw AccessError("decoy key equals the session's private key");
  }
}

std::size_t KeyRegistry::size() const {
  std::shared_lock lock(mutex_);
  return sessions_.size();
}

}  // namespace semstego::keygen
