#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace velo {

// Small nested-block configuration text, used for task configs and run
// configs. Grammar:
//
//   file  := (entry | block)*
//   block := ident [ quoted-string ] '{' (entry | block)* '}'
//   entry := ident '=' value
//   value := integer | float | quoted-string | true | false
//
// '#' starts a comment running to end of line. Canonical emission sorts
// entries by key within a block, keeps blocks in written order, indents by
// two spaces, and prints floats in shortest round-trip form (always with a
// '.' or exponent so the integer/float distinction survives).

struct ParseError : std::runtime_error {
  int line, col;
  ParseError(int line_, int col_, const std::string& msg)
      : std::runtime_error("parse error at " + std::to_string(line_) + ":" +
                           std::to_string(col_) + ": " + msg),
        line(line_),
        col(col_) {}
};

class ConfigValue {
 public:
  enum class Kind { kInt, kFloat, kString, kBool };

  ConfigValue() : kind_(Kind::kInt), i_(0) {}
  static ConfigValue of_int(std::int64_t v);
  static ConfigValue of_float(double v);
  static ConfigValue of_string(std::string v);
  static ConfigValue of_bool(bool v);

  Kind kind() const { return kind_; }
  std::int64_t as_int() const;
  // Accepts both int and float entries (ints widen).
  double as_double() const;
  const std::string& as_string() const;
  bool as_bool() const;

  bool operator==(const ConfigValue& o) const;
  bool operator!=(const ConfigValue& o) const { return !(*this == o); }

  std::string render() const;

 private:
  Kind kind_;
  std::int64_t i_ = 0;
  double f_ = 0.0;
  bool b_ = false;
  std::string s_;
};

struct ConfigNode {
  std::string name;   // block keyword ("family", "static", "augment", ...)
  std::string label;  // optional quoted label after the keyword
  std::map<std::string, ConfigValue> entries;
  std::vector<ConfigNode> blocks;

  bool operator==(const ConfigNode& o) const;
  bool operator!=(const ConfigNode& o) const { return !(*this == o); }

  bool has(const std::string& key) const { return entries.count(key) != 0; }
  const ConfigValue& at(const std::string& key) const;  // throws listing the key
  const ConfigNode* find_block(const std::string& name) const;  // first match or null

  void set(const std::string& key, ConfigValue v) { entries[key] = std::move(v); }
};

// Parses a whole file into a root node (name empty). Throws ParseError.
ConfigNode parse_config_text(const std::string& text);
// Canonical emission of the root's children.
std::string emit_config_text(const ConfigNode& root);

}  // namespace velo
