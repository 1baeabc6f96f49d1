#pragma once
// Config handling: JSON files with nested sections, dotted-path overrides,
// and strict key checking. Every key a parser reads is recorded; after
// parsing, any key present in the file but never read is an error naming its
// dotted path, so typos fail loudly instead of silently using defaults.

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "varcurv/io.hpp"

namespace varcurv {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& err) {
    throw ConfigError("config parse failure in " + path.string() + ": " +
                      err.what());
  }
}

// Applies one "a.b.c=value" override. The value is parsed as JSON when
// possible (numbers, booleans, arrays), otherwise taken as a bare string.
inline void apply_set_override(nlohmann::json& root,
                               const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like path.to.key=value: '" +
                      assignment + "'");
  const std::string dotted = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }

  nlohmann::json* node = &root;
  std::size_t start = 0;
  std::string walked;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot - start);
    if (key.empty())
      throw ConfigError("override has an empty path segment: '" + dotted +
                        "'");
    walked = walked.empty() ? key : walked + "." + key;
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    nlohmann::json& next = (*node)[key];
    if (!next.is_object() && !next.is_null())
      throw ConfigError("override path crosses a non-section value at '" +
                        walked + "'");
    if (next.is_null()) next = nlohmann::json::object();
    node = &next;
    start = dot + 1;
  }
}

// Cursor over a JSON object that records every key it reads into a shared
// set of dotted paths. unknown_keys() then reports unread leaves.
class KeyCursor {
 public:
  explicit KeyCursor(const nlohmann::json& root)
      : node_(&root),
        consumed_(std::make_shared<std::set<std::string>>()) {
    if (!root.is_object())
      throw ConfigError("config root must be a JSON object");
  }

  const std::shared_ptr<std::set<std::string>>& consumed() const {
    return consumed_;
  }

  bool has(const std::string& key) const { return node_->contains(key); }

  KeyCursor child(const std::string& key) const {
    static const nlohmann::json empty = nlohmann::json::object();
    if (!has(key)) return KeyCursor(&empty, dotted(key), consumed_);
    const nlohmann::json& sub = node_->at(key);
    if (!sub.is_object())
      throw ConfigError("expected a section at '" + dotted(key) + "'");
    return KeyCursor(&sub, dotted(key), consumed_);
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const nlohmann::json& v = take(key);
    if (!v.is_number())
      throw ConfigError("expected a number at '" + dotted(key) + "'");
    return v.get<double>();
  }

  int integer(const std::string& key, int fallback) const {
    if (!has(key)) return fallback;
    const nlohmann::json& v = take(key);
    if (!v.is_number_integer())
      throw ConfigError("expected an integer at '" + dotted(key) + "'");
    return v.get<int>();
  }

  long long integer64(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    const nlohmann::json& v = take(key);
    if (!v.is_number_integer())
      throw ConfigError("expected an integer at '" + dotted(key) + "'");
    return v.get<long long>();
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const nlohmann::json& v = take(key);
    if (!v.is_boolean())
      throw ConfigError("expected a boolean at '" + dotted(key) + "'");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const nlohmann::json& v = take(key);
    if (!v.is_string())
      throw ConfigError("expected a string at '" + dotted(key) + "'");
    return v.get<std::string>();
  }

  std::vector<double> number_list(const std::string& key,
                                  std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    const nlohmann::json& v = take(key);
    if (!v.is_array())
      throw ConfigError("expected an array at '" + dotted(key) + "'");
    std::vector<double> out;
    for (const auto& item : v) {
      if (!item.is_number())
        throw ConfigError("expected numbers in '" + dotted(key) + "'");
      out.push_back(item.get<double>());
    }
    return out;
  }

  std::vector<int> integer_list(const std::string& key,
                                std::vector<int> fallback) const {
    if (!has(key)) return fallback;
    const nlohmann::json& v = take(key);
    if (!v.is_array())
      throw ConfigError("expected an array at '" + dotted(key) + "'");
    std::vector<int> out;
    for (const auto& item : v) {
      if (!item.is_number_integer())
        throw ConfigError("expected integers in '" + dotted(key) + "'");
      out.push_back(item.get<int>());
    }
    return out;
  }

  std::string dotted(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  KeyCursor(const nlohmann::json* node, std::string path,
            std::shared_ptr<std::set<std::string>> consumed)
      : node_(node), path_(std::move(path)), consumed_(std::move(consumed)) {}

  const nlohmann::json& take(const std::string& key) const {
    consumed_->insert(dotted(key));
    return node_->at(key);
  }

  const nlohmann::json* node_;
  std::string path_;
  std::shared_ptr<std::set<std::string>> consumed_;
};

namespace detail {

inline void collect_unknown(const nlohmann::json& node,
                            const std::string& path,
                            const std::set<std::string>& consumed,
                            std::vector<std::string>& unknown) {
  for (const auto& [key, value] : node.items()) {
    const std::string dotted = path.empty() ? key : path + "." + key;
    if (value.is_object()) {
      collect_unknown(value, dotted, consumed, unknown);
    } else if (!consumed.count(dotted)) {
      unknown.push_back(dotted);
    }
  }
}

}  // namespace detail

inline std::vector<std::string> unknown_keys(const nlohmann::json& root,
                                             const KeyCursor& cursor) {
  std::vector<std::string> unknown;
  detail::collect_unknown(root, "", *cursor.consumed(), unknown);
  return unknown;
}

inline void reject_unknown_keys(const nlohmann::json& root,
                                const KeyCursor& cursor) {
  const std::vector<std::string> unknown = unknown_keys(root, cursor);
  if (unknown.empty()) return;
  std::string msg = "unrecognized config key";
  if (unknown.size() > 1) msg += "s";
  msg += ":";
  for (const std::string& path : unknown) msg += " '" + path + "'";
  throw ConfigError(msg);
}

// Content digest of a config with output paths stripped, so the same
// science settings hash identically wherever the artifacts land.
inline std::string config_digest(nlohmann::json config) {
  config.erase("output");
  return fnv1a64_hex(config.dump());
}

// Precedence: explicit CLI value, then VARCURV_OUTPUT_ROOT, then cwd.
inline std::filesystem::path resolve_output_root(
    const std::optional<std::string>& cli_root) {
  if (cli_root && !cli_root->empty()) return *cli_root;
  if (const char* env = std::getenv("VARCURV_OUTPUT_ROOT");
      env != nullptr && *env != '\0')
    return env;
  return std::filesystem::current_path();
}

}  // namespace varcurv
