#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "promptopt/util.hpp"

namespace promptopt {

class TemplateError : public Error {
 public:
  using Error::Error;
};

struct MetaTemplate {
  std::string name;
  std::string body;
  std::set<std::string> required_slots;  // every {{slot}} occurring in body
};

// Placeholders use {{name}} syntax. Substitution is a single pass, so slot
// values are never re-scanned for placeholders.
std::set<std::string> scan_slots(const std::string& body);
std::string render(const MetaTemplate& tpl, const std::map<std::string, std::string>& bindings);

// The seven meta-prompts. Built-in bodies are the committed transcriptions;
// a directory of <name>.txt files can override them per run.
class TemplateRegistry {
 public:
  static const std::vector<std::string>& names();
  static TemplateRegistry builtin();
  static TemplateRegistry from_directory(const std::filesystem::path& dir);

  const MetaTemplate& get(const std::string& name) const;

 private:
  std::map<std::string, MetaTemplate> templates_;
};

}  // namespace promptopt
