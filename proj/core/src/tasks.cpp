#include "promptopt/tasks.hpp"

#include <cctype>
#include <regex>
#include <set>

#include "json.hpp"

namespace promptopt {

namespace {

using json = nlohmann::json;

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

}  // namespace

void Dataset::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < examples.size(); ++i) index_[examples[i].id] = i;
}

const LabeledExample& Dataset::by_id(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("dataset '" + name + "': unknown example id '" + id + "'");
  return examples[it->second];
}

bool Dataset::has_example(const std::string& id) const {
  return index_.count(id) > 0;
}

const std::vector<std::string>& Dataset::split(const std::string& name_) const {
  auto it = splits.find(name_);
  if (it == splits.end()) throw DataError("dataset '" + name + "': unknown split '" + name_ + "'");
  return it->second;
}

Dataset load_dataset(const std::filesystem::path& path, const std::string& format) {
  if (format != "jsonl") throw ConfigError("unsupported dataset format: " + format);
  Dataset ds;
  ds.name = path.stem().string();
  std::string text = read_file(path);
  std::size_t line_no = 0;
  for (const auto& line : split_lines(text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const std::exception& e) {
      throw DataError("dataset " + path.string() + " line " + std::to_string(line_no) +
                      ": invalid JSON: " + e.what());
    }
    if (!rec.contains("id") || !rec["id"].is_string() || rec["id"].get<std::string>().empty()) {
      throw DataError("dataset " + path.string() + " line " + std::to_string(line_no) +
                      ": missing id");
    }
    LabeledExample ex;
    ex.id = rec["id"].get<std::string>();
    if (!rec.contains("input") || !rec["input"].is_string()) {
      throw DataError("record '" + ex.id + "': missing input");
    }
    ex.input = rec["input"].get<std::string>();
    if (!rec.contains("gold") || !rec["gold"].is_string() || rec["gold"].get<std::string>().empty()) {
      throw DataError("record '" + ex.id + "': missing gold");
    }
    ex.gold = rec["gold"].get<std::string>();
    if (rec.contains("options")) {
      if (!rec["options"].is_array()) throw DataError("record '" + ex.id + "': options not a list");
      for (const auto& opt : rec["options"]) ex.options.push_back(opt.get<std::string>());
    }
    if (!ex.options.empty()) {
      bool key_ok = ex.gold.size() == 1 && ex.gold[0] >= 'A' &&
                    ex.gold[0] < static_cast<char>('A' + ex.options.size());
      if (!key_ok) {
        throw DataError("record '" + ex.id + "': gold '" + ex.gold +
                        "' does not match an option key");
      }
    }
    if (ds.index_.count(ex.id)) throw DataError("duplicate example id '" + ex.id + "'");
    ds.index_[ex.id] = ds.examples.size();
    ds.examples.push_back(std::move(ex));
  }
  ds.rebuild_index();

  std::filesystem::path split_file = path;
  split_file.replace_extension(".splits.json");
  if (std::filesystem::exists(split_file)) {
    json manifest;
    try {
      manifest = json::parse(read_file(split_file));
    } catch (const std::exception& e) {
      throw DataError("split manifest " + split_file.string() + ": invalid JSON: " + e.what());
    }
    std::set<std::string> seen;
    for (auto it = manifest.begin(); it != manifest.end(); ++it) {
      std::vector<std::string> ids;
      for (const auto& id : it.value()) {
        std::string s = id.get<std::string>();
        if (!ds.has_example(s)) {
          throw DataError("split '" + it.key() + "' references unknown id '" + s + "'");
        }
        if (!seen.insert(s).second) {
          throw DataError("splits must be disjoint; id '" + s + "' appears twice");
        }
        ids.push_back(std::move(s));
      }
      ds.splits[it.key()] = std::move(ids);
    }
  } else {
    std::vector<std::string> all;
    for (const auto& ex : ds.examples) all.push_back(ex.id);
    ds.splits["all"] = std::move(all);
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::string out;
  for (const auto& ex : dataset.examples) {
    json rec;
    rec["id"] = ex.id;
    rec["input"] = ex.input;
    rec["gold"] = ex.gold;
    if (!ex.options.empty()) rec["options"] = ex.options;
    out += rec.dump() + "\n";
  }
  write_file(path, out);
}

std::string render_question(const LabeledExample& example) {
  std::string out = example.input;
  if (!example.options.empty()) {
    out += "\nOptions:";
    for (std::size_t i = 0; i < example.options.size(); ++i) {
      out += "\n(";
      out += static_cast<char>('A' + i);
      out += ") " + example.options[i];
    }
  }
  return out;
}

std::string assemble_query(const std::string& prompt, const LabeledExample& example) {
  return render_question(example) + "\n" + prompt;
}

std::string normalize_text(const std::string& text, const AnswerRule& rule) {
  std::string staged;
  staged.reserve(text.size());
  for (char c : text) {
    unsigned char uc = static_cast<unsigned char>(c);
    if (rule.strip_punct && std::ispunct(uc)) {
      staged += ' ';
      continue;
    }
    staged += rule.case_fold ? static_cast<char>(std::tolower(uc)) : c;
  }
  // Whitespace always collapses to single spaces.
  std::string out;
  out.reserve(staged.size());
  bool in_space = true;
  for (char c : staged) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty()) in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out += ' ';
    in_space = false;
    out += c;
  }
  return out;
}

std::optional<std::string> extract_answer(const std::string& raw, const AnswerRule& rule,
                                          const std::vector<std::string>* options) {
  if (rule.kind == AnswerKind::option_letter) {
    int key_count = options && !options->empty() ? static_cast<int>(options->size()) : 26;
    std::optional<std::string> found;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      char c = raw[i];
      if (c < 'A' || c >= static_cast<char>('A' + key_count)) continue;
      bool left_ok = i == 0 || !is_word_char(raw[i - 1]);
      bool right_ok = i + 1 == raw.size() || !is_word_char(raw[i + 1]);
      if (left_ok && right_ok) found = std::string(1, c);  // last match wins
    }
    return found;
  }

  if (rule.kind == AnswerKind::exact_match) {
    std::string norm = normalize_text(raw, rule);
    if (options && !options->empty()) {
      for (std::size_t i = 0; i < options->size(); ++i) {
        if (norm == normalize_text((*options)[i], rule)) {
          return std::string(1, static_cast<char>('A' + i));
        }
      }
      return std::nullopt;
    }
    if (norm.empty()) return std::nullopt;
    return norm;
  }

  // pattern
  std::regex re;
  try {
    re.assign(rule.pattern);
  } catch (const std::regex_error& e) {
    throw ConfigError(std::string("answer pattern does not compile: ") + e.what());
  }
  std::optional<std::string> found;
  for (auto it = std::sregex_iterator(raw.begin(), raw.end(), re); it != std::sregex_iterator();
       ++it) {
    const std::smatch& m = *it;
    found = re.mark_count() >= 1 && m[1].matched ? m[1].str() : m[0].str();
  }
  if (!found) return std::nullopt;
  std::string norm = normalize_text(*found, rule);
  if (norm.empty()) return std::nullopt;
  return norm;
}

bool is_correct(const std::optional<std::string>& predicted, const LabeledExample& example,
                const AnswerRule& rule) {
  if (!predicted) return false;
  if (rule.kind == AnswerKind::option_letter) return *predicted == example.gold;
  if (rule.kind == AnswerKind::exact_match && !example.options.empty()) {
    return *predicted == example.gold;
  }
  return *predicted == normalize_text(example.gold, rule);
}

}  // namespace promptopt
