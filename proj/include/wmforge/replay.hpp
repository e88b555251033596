#pragma once

#include <map>
#include <optional>
#include <string>

#include "wmforge/lm_backend.hpp"

namespace wmforge {

/// Append-only keyed store of (request fingerprint -> response), persisted as
/// JSON Lines. Single writer, many readers; replay never touches the network.
class ReplayStore {
 public:
  explicit ReplayStore(std::string path);

  std::optional<ChatResponse> lookup(const std::string& fingerprint) const;
  void append(const ChatRequest& request, const ChatResponse& response);
  std::size_t size() const { return entries_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::map<std::string, ChatResponse> entries_;
};

/// Record mode: forwards to the configured source backend and persists the
/// response. Replay mode: returns the stored response or throws CacheMiss.
ChatResponse record_replay(const ChatRequest& request, const BackendConfig& config,
                           ReplayStore& store);

}  // namespace wmforge
