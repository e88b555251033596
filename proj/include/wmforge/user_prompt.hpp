#pragma once

#include <string>
#include <vector>

namespace wmforge {

/// A rendered user query X, drawn from the topic registry.
struct UserPrompt {
  std::string id;
  std::string category;
  std::vector<std::string> topics;
  std::string template_id;
  std::string text;
};

}  // namespace wmforge
