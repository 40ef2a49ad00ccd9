#include "exner/corpus.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "exner/errors.h"
#include "exner/log.h"
#include "json.hpp"

namespace exner {

using json = nlohmann::json;

bool is_reserved_token(const std::string& token) {
  return token == kStartMarker || token == kEndMarker ||
         token == kSentinelToken;
}

std::vector<std::string> SupportExample::plain_tokens() const {
  std::vector<std::string> out;
  out.reserve(tokens.size() - 2);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i != start_marker_pos && i != end_marker_pos) out.push_back(tokens[i]);
  }
  return out;
}

SupportExample make_support_example(std::vector<std::string> tokens,
                                    std::size_t entity_start,
                                    std::size_t entity_end,
                                    std::string entity_type, std::string id) {
  if (tokens.empty()) throw InputError("support example has no tokens");
  if (entity_start > entity_end || entity_end >= tokens.size()) {
    throw InputError("entity range [" + std::to_string(entity_start) + ", " +
                     std::to_string(entity_end) + "] outside sentence of " +
                     std::to_string(tokens.size()) + " tokens");
  }
  if (entity_type.empty()) throw InputError("support example has no type");
  for (const auto& t : tokens) {
    if (t.empty()) throw InputError("empty token in support example");
    if (is_reserved_token(t)) {
      throw InputError("reserved token '" + t + "' in support example text");
    }
  }
  SupportExample ex;
  ex.id = std::move(id);
  ex.entity_type = std::move(entity_type);
  ex.tokens.reserve(tokens.size() + 2);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i == entity_start) ex.tokens.push_back(kStartMarker);
    ex.tokens.push_back(std::move(tokens[i]));
    if (i == entity_end) ex.tokens.push_back(kEndMarker);
  }
  ex.start_marker_pos = entity_start;
  ex.end_marker_pos = entity_end + 2;
  return ex;
}

void validate_support_example(const SupportExample& ex) {
  if (ex.entity_type.empty()) throw InputError("support example has no type");
  std::size_t opens = 0, closes = 0;
  for (const auto& t : ex.tokens) {
    if (t == kStartMarker) ++opens;
    if (t == kEndMarker) ++closes;
    if (t == kSentinelToken) throw InputError("sentinel inside support text");
  }
  if (opens != 1 || closes != 1) {
    throw InputError("support example must contain exactly one marked entity");
  }
  if (ex.end_marker_pos >= ex.tokens.size() ||
      ex.tokens[ex.start_marker_pos] != kStartMarker ||
      ex.tokens[ex.end_marker_pos] != kEndMarker) {
    throw InputError("support marker positions do not match marker tokens");
  }
  if (ex.end_marker_pos < ex.start_marker_pos + 2) {
    throw InputError("support example marks an empty entity");
  }
}

SupportExample fit_support_example(const SupportExample& ex,
                                   std::size_t max_length) {
  if (ex.tokens.size() <= max_length) return ex;
  const std::size_t marked = ex.end_marker_pos - ex.start_marker_pos + 1;
  if (marked > max_length) {
    throw InputError("marked entity of " + std::to_string(marked) +
                     " tokens exceeds max length " + std::to_string(max_length));
  }
  std::size_t left = ex.start_marker_pos;
  std::size_t right = ex.tokens.size() - ex.end_marker_pos - 1;
  std::size_t excess = ex.tokens.size() - max_length;
  const std::size_t drop_right = std::min(excess, right);
  excess -= drop_right;
  const std::size_t drop_left = std::min(excess, left);
  SupportExample out = ex;
  out.tokens.assign(ex.tokens.begin() + drop_left,
                    ex.tokens.end() - drop_right);
  out.start_marker_pos -= drop_left;
  out.end_marker_pos -= drop_left;
  warn("support example ", ex.id.empty() ? ex.entity_type : ex.id,
       " truncated to ", max_length, " tokens");
  return out;
}

void SupportSet::add(SupportExample ex) {
  auto& list = entries_[ex.entity_type];
  list.push_back(std::move(ex));
}

std::size_t SupportSet::count(const std::string& type) const {
  auto it = entries_.find(type);
  return it == entries_.end() ? 0 : it->second.size();
}

std::size_t SupportSet::total() const {
  std::size_t n = 0;
  for (const auto& [type, list] : entries_) n += list.size();
  return n;
}

std::vector<std::string> SupportSet::types() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [type, list] : entries_) out.push_back(type);
  return out;
}

const std::vector<SupportExample>& SupportSet::examples(
    const std::string& type) const {
  auto it = entries_.find(type);
  if (it == entries_.end()) throw NotFoundError("no entity type '" + type + "'");
  return it->second;
}

std::vector<SupportExample> SupportSet::flatten() const {
  std::vector<SupportExample> out;
  out.reserve(total());
  for (const auto& [type, list] : entries_) {
    out.insert(out.end(), list.begin(), list.end());
  }
  return out;
}

SupportSet build_support_set(const std::vector<SupportExample>& examples) {
  SupportSet set;
  for (const auto& ex : examples) set.add(ex);
  return set;
}

std::vector<SupportExample> explode_to_support_examples(
    const LabeledSentence& ls) {
  std::vector<SupportExample> out;
  out.reserve(ls.spans.size());
  for (std::size_t k = 0; k < ls.spans.size(); ++k) {
    const auto& span = ls.spans[k];
    std::string id = ls.sentence.source_id.empty()
                         ? std::string{}
                         : ls.sentence.source_id + "#" + std::to_string(k);
    out.push_back(make_support_example(ls.sentence.tokens, span.start, span.end,
                                       span.entity_type, std::move(id)));
    out.back().source_id = ls.sentence.source_id;
  }
  return out;
}

void validate_labeled_sentence(const LabeledSentence& ls) {
  const std::size_t n = ls.sentence.size();
  if (n == 0) throw InputError("empty sentence");
  for (std::size_t k = 0; k < ls.spans.size(); ++k) {
    const auto& s = ls.spans[k];
    if (s.start > s.end || s.end >= n) throw InputError("span out of range");
    if (k > 0 && ls.spans[k - 1].end >= s.start) {
      throw InputError("spans overlap or are unsorted");
    }
  }
}

namespace {

void finish_sentence(std::vector<std::string>& tokens,
                     std::vector<std::string>& tags,
                     const std::string& source_name,
                     std::vector<LabeledSentence>& out) {
  if (tokens.empty()) return;
  LabeledSentence ls;
  ls.sentence.source_id = source_name + ":" + std::to_string(out.size());
  ls.sentence.tokens = std::move(tokens);
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (tag == "O") {
      open = false;
      continue;
    }
    if (tag.size() < 3 || tag[1] != '-' || (tag[0] != 'B' && tag[0] != 'I')) {
      throw InputError(ls.sentence.source_id + ": malformed tag '" + tag + "'");
    }
    const std::string type = tag.substr(2);
    const bool continues = tag[0] == 'I' && open &&
                           ls.spans.back().entity_type == type &&
                           ls.spans.back().end + 1 == i;
    if (continues) {
      ls.spans.back().end = i;
    } else {
      if (tag[0] == 'I') {
        warn(ls.sentence.source_id, ": ", tag, " at token ", i,
             " does not continue an entity; treating as B-", type);
      }
      ls.spans.push_back({i, i, type});
      open = true;
    }
  }
  out.push_back(std::move(ls));
  tokens.clear();
  tags.clear();
}

}  // namespace

std::vector<LabeledSentence> parse_bio(std::istream& in,
                                       const std::string& source_name) {
  std::vector<LabeledSentence> out;
  std::vector<std::string> tokens, tags;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) {
      finish_sentence(tokens, tags, source_name, out);
      continue;
    }
    const auto last = line.find_last_not_of(" \t");
    const auto sep = line.find_last_of(" \t", last);
    if (sep == std::string::npos || sep < first) {
      throw InputError(source_name + ":" + std::to_string(line_no) +
                       ": expected 'token<TAB>tag'");
    }
    std::string token = line.substr(first, line.find_last_not_of(" \t", sep) - first + 1);
    std::string tag = line.substr(sep + 1, last - sep);
    if (is_reserved_token(token)) {
      throw InputError(source_name + ":" + std::to_string(line_no) +
                       ": reserved token in corpus text");
    }
    tokens.push_back(std::move(token));
    tags.push_back(std::move(tag));
  }
  finish_sentence(tokens, tags, source_name, out);
  return out;
}

std::vector<LabeledSentence> read_bio_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus '" + path.string() + "'");
  auto corpus = parse_bio(in, path.filename().string());
  if (corpus.empty()) throw InputError("corpus '" + path.string() + "' is empty");
  return corpus;
}

void write_bio(std::ostream& out, const std::vector<LabeledSentence>& corpus) {
  for (const auto& ls : corpus) {
    std::vector<std::string> tags(ls.sentence.size(), "O");
    for (const auto& span : ls.spans) {
      tags[span.start] = "B-" + span.entity_type;
      for (std::size_t i = span.start + 1; i <= span.end; ++i) {
        tags[i] = "I-" + span.entity_type;
      }
    }
    for (std::size_t i = 0; i < ls.sentence.size(); ++i) {
      out << ls.sentence.tokens[i] << '\t' << tags[i] << '\n';
    }
    out << '\n';
  }
}

void write_bio_file(const std::filesystem::path& path,
                    const std::vector<LabeledSentence>& corpus) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  write_bio(out, corpus);
}

std::vector<SupportExample> parse_support_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("support JSON: ") + e.what());
  }
  if (!doc.is_array()) throw InputError("support JSON must be an array");
  std::vector<SupportExample> out;
  out.reserve(doc.size());
  for (std::size_t k = 0; k < doc.size(); ++k) {
    const auto& rec = doc[k];
    try {
      std::string id = rec.contains("id") ? rec.at("id").get<std::string>()
                                          : "s" + std::to_string(k + 1);
      out.push_back(make_support_example(
          rec.at("tokens").get<std::vector<std::string>>(),
          rec.at("entity_start").get<std::size_t>(),
          rec.at("entity_end").get<std::size_t>(),
          rec.at("entity_type").get<std::string>(), std::move(id)));
    } catch (const json::exception& e) {
      throw InputError("support record " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

std::vector<SupportExample> read_support_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open support file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_support_json(ss.str());
}

std::string support_json(const std::vector<SupportExample>& examples) {
  json doc = json::array();
  for (const auto& ex : examples) {
    json rec;
    if (!ex.id.empty()) rec["id"] = ex.id;
    rec["entity_type"] = ex.entity_type;
    rec["tokens"] = ex.plain_tokens();
    rec["entity_start"] = ex.entity_start();
    rec["entity_end"] = ex.entity_end();
    doc.push_back(std::move(rec));
  }
  return doc.dump(1);
}

void write_support_json(const std::filesystem::path& path,
                        const std::vector<SupportExample>& examples) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << support_json(examples) << '\n';
}

}  // namespace exner
