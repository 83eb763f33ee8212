#include "kcprobe/simulated.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <set>

#include "kcprobe/error.h"
#include "kcprobe/io.h"
#include "kcprobe/rng.h"
#include "kcprobe/text.h"

namespace kcp {

using nlohmann::json;

double SusceptibilityProfile::confidence_for(const std::string& rule_id) const {
  auto it = rule_confidence.find(rule_id);
  return it == rule_confidence.end() ? default_confidence : it->second;
}

void SusceptibilityProfile::validate() const {
  auto prob = [](double v, const std::string& name) {
    if (!(v > 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, name + " must be in (0, 1], got " + std::to_string(v));
    }
  };
  auto unit = [](double v, const std::string& name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, name + " must be in [0, 1], got " + std::to_string(v));
    }
  };
  prob(default_confidence, "default_confidence");
  for (const auto& [rule, c] : rule_confidence) prob(c, "rule_confidence[" + rule + "]");
  unit(direct_threshold, "direct_threshold");
  unit(indirect_threshold, "indirect_threshold");
  unit(shift_accept_below, "shift_accept_below");
  unit(abstain_below, "abstain_below");
  unit(attention_decay, "attention_decay");
  unit(unstable_below, "unstable_below");
  if (length_boost < 0.0) throw Error(ErrorCode::kInvalidArgument, "length_boost must be >= 0");
}

void to_json(json& j, const SusceptibilityProfile& p) {
  j = json{{"model_id", p.model_id},
           {"ground_truth", p.ground_truth.to_json()},
           {"rule_confidence", p.rule_confidence},
           {"default_confidence", p.default_confidence},
           {"direct_threshold", p.direct_threshold},
           {"indirect_threshold", p.indirect_threshold},
           {"shift_accept_below", p.shift_accept_below},
           {"abstain_below", p.abstain_below},
           {"attention_decay", p.attention_decay},
           {"length_boost", p.length_boost},
           {"unstable_below", p.unstable_below},
           {"deviated_confidence_boost", p.deviated_confidence_boost},
           {"conforming_confidence_shift", p.conforming_confidence_shift},
           {"extra_entities", p.extra_entities}};
}

SusceptibilityProfile profile_from_json(const json& j, const std::string& base_dir) {
  SusceptibilityProfile p;
  try {
    p.model_id = j.value("model_id", p.model_id);
    if (j.contains("ground_truth")) {
      p.ground_truth = Pkg::from_json(j.at("ground_truth"));
    } else if (j.contains("ground_truth_path")) {
      std::filesystem::path path = j.at("ground_truth_path").get<std::string>();
      if (path.is_relative()) path = std::filesystem::path(base_dir) / path;
      p.ground_truth = load_pkg(path.string());
    } else {
      throw Error(ErrorCode::kConfigError, "profile needs ground_truth or ground_truth_path");
    }
    p.rule_confidence = j.value("rule_confidence", p.rule_confidence);
    p.default_confidence = j.value("default_confidence", p.default_confidence);
    p.direct_threshold = j.value("direct_threshold", p.direct_threshold);
    p.indirect_threshold = j.value("indirect_threshold", p.indirect_threshold);
    p.shift_accept_below = j.value("shift_accept_below", p.shift_accept_below);
    p.abstain_below = j.value("abstain_below", p.abstain_below);
    p.attention_decay = j.value("attention_decay", p.attention_decay);
    p.length_boost = j.value("length_boost", p.length_boost);
    p.unstable_below = j.value("unstable_below", p.unstable_below);
    p.deviated_confidence_boost = j.value("deviated_confidence_boost", p.deviated_confidence_boost);
    p.conforming_confidence_shift =
        j.value("conforming_confidence_shift", p.conforming_confidence_shift);
    if (j.contains("extra_entities")) p.extra_entities = j.at("extra_entities").get<std::vector<Entity>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("malformed profile: ") + e.what());
  }
  p.validate();
  return p;
}

SusceptibilityProfile load_profile(const std::string& path) {
  const auto dir = std::filesystem::path(path).parent_path().string();
  return profile_from_json(parse_json(read_file(path), path), dir.empty() ? "." : dir);
}

std::regex template_regex(std::string_view tmpl, std::vector<int>* slots) {
  static const std::string kSpecial = R"(\^$.|?*+()[]{}/)";
  std::string pattern;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const std::size_t close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const std::string_view name = tmpl.substr(i + 1, close - i - 1);
        const bool is_object = name == "object";
        const bool is_subject =
            !name.empty() && name.find_first_not_of("0123456789") == std::string_view::npos;
        if (is_object || is_subject) {
          pattern += "(.+?)";
          if (slots) slots->push_back(is_object ? -1 : std::stoi(std::string(name)));
          i = close + 1;
          continue;
        }
      }
    }
    if (kSpecial.find(tmpl[i]) != std::string::npos) pattern.push_back('\\');
    pattern.push_back(tmpl[i]);
    ++i;
  }
  // Statements may be rendered without their final period.
  if (!pattern.empty() && pattern.back() == '.' && pattern.size() >= 2 &&
      pattern[pattern.size() - 2] == '\\') {
    pattern += "?";
  }
  return std::regex(pattern, std::regex::ECMAScript | std::regex::icase);
}

SimulatedBackend::SimulatedBackend(RuleSet rules, SusceptibilityProfile profile)
    : rules_(std::move(rules)), profile_(std::move(profile)) {
  profile_.validate();
  for (const auto& rule : rules_.rules()) {
    Patterns p{&rule, template_regex(rule.question_template), std::nullopt, {}};
    if (!rule.statement_template.empty()) {
      p.statement = template_regex(rule.statement_template, &p.statement_slots);
    }
    patterns_.push_back(std::move(p));
  }
  auto learn = [&](const Entity& e) {
    auto& types = lexicon_types_[e.key];
    if (std::find(types.begin(), types.end(), e.type) == types.end()) {
      types.push_back(e.type);
      lexicon_by_type_[e.type].push_back(e);
    }
  };
  for (const auto& e : profile_.ground_truth.nodes()) learn(e);
  for (const auto& e : profile_.extra_entities) learn(e);
}

std::optional<SimulatedBackend::Query> SimulatedBackend::parse_query(std::string_view text) const {
  for (const auto& sentence : split_sentences(text)) {
    std::vector<std::string> candidates{sentence};
    if (const auto colon = sentence.rfind(": "); colon != std::string::npos) {
      candidates.push_back(trim(sentence.substr(colon + 2)));
    }
    for (const auto& candidate : candidates) {
      for (const auto& p : patterns_) {
        std::smatch m;
        if (!std::regex_match(candidate, m, p.question)) continue;
        Query q;
        q.rule = p.rule;
        for (std::size_t g = 1; g < m.size(); ++g) q.subject_surfaces.push_back(m[g].str());
        return q;
      }
    }
  }
  return std::nullopt;
}

std::vector<SimulatedBackend::Statement> SimulatedBackend::parse_statements(
    std::string_view text) const {
  std::vector<Statement> out;
  auto sentences = split_sentences(text);
  for (auto sentence : sentences) {
    if (const auto colon = sentence.rfind(": "); colon != std::string::npos) {
      sentence = trim(sentence.substr(colon + 2));
    }
    for (const auto& p : patterns_) {
      if (!p.statement) continue;
      std::smatch m;
      if (!std::regex_match(sentence, m, *p.statement)) continue;
      Statement s;
      s.rule = p.rule;
      s.subject_keys.resize(p.rule->arity());
      s.context_sentences = sentences.size();
      bool ok = true;
      for (std::size_t g = 1; g < m.size() && ok; ++g) {
        const int slot = p.statement_slots[g - 1];
        try {
          if (slot < 0) {
            s.object_surface = clean_surface(m[g].str());
            s.object_key = canonical_key(s.object_surface);
          } else if (static_cast<std::size_t>(slot) < s.subject_keys.size()) {
            s.subject_keys[slot] = canonical_key(m[g].str());
          }
        } catch (const Error&) {
          ok = false;
        }
      }
      if (ok) {
        out.push_back(std::move(s));
        break;
      }
    }
  }
  return out;
}

bool SimulatedBackend::shifted(const std::string& key, const std::string& target_type) const {
  auto it = lexicon_types_.find(key);
  if (it == lexicon_types_.end()) return false;
  return std::find(it->second.begin(), it->second.end(), target_type) == it->second.end();
}

Completion SimulatedBackend::make_completion(std::string text, double confidence) const {
  Completion c;
  c.model_id = profile_.model_id;
  const auto words = split_words(text);
  // Tokens: each word with its leading separator; trailing punctuation is
  // its own token. The first word carries the whole answer logprob.
  std::size_t pos = 0;
  bool first = true;
  for (const auto& w : words) {
    TokenLogprob tok;
    tok.text = text.substr(pos, w.end - pos);
    tok.logprob = first ? std::log(confidence) : 0.0;
    first = false;
    c.tokens.push_back(std::move(tok));
    pos = w.end;
  }
  if (pos < text.size()) c.tokens.push_back({text.substr(pos), 0.0});
  c.text = std::move(text);
  c.usage.completion_tokens = static_cast<std::int64_t>(c.tokens.size());
  return c;
}

Completion SimulatedBackend::chat(std::span<const ChatTurn> history, const GenerationParams& params) {
  check_history(history);
  const auto query = parse_query(history.back().content);
  if (!query) return make_completion(std::string(kRefusal), 1.0);

  const RelationRule& rule = *query->rule;
  std::vector<NodeRef> subjects;
  std::vector<std::string> subject_keys;
  for (std::size_t i = 0; i < query->subject_surfaces.size(); ++i) {
    std::string key;
    try {
      key = canonical_key(query->subject_surfaces[i]);
    } catch (const Error&) {
      return make_completion(std::string(kRefusal), 1.0);
    }
    subject_keys.push_back(key);
    subjects.push_back({key, rule.source_types[i]});
  }
  const Edge* truth = profile_.ground_truth.find_edge(subjects, rule.id);
  const double confidence = profile_.confidence_for(rule.id);
  if (!truth || confidence < profile_.abstain_below) {
    return make_completion(std::string(kRefusal), 1.0);
  }

  // Statements from earlier user turns (the distractor is presented before
  // any query).
  std::size_t assistant_turns = 0;
  std::vector<Statement> statements;
  for (std::size_t i = 0; i + 1 < history.size(); ++i) {
    if (history[i].role == Role::kAssistant) {
      ++assistant_turns;
      continue;
    }
    if (history[i].role != Role::kUser) continue;
    auto found = parse_statements(history[i].content);
    statements.insert(statements.end(), found.begin(), found.end());
  }
  const double decay = std::pow(profile_.attention_decay, static_cast<double>(assistant_turns));

  const Statement* follow = nullptr;
  for (int pass = 0; pass < 2 && !follow; ++pass) {
    const bool want_direct = pass == 0;
    for (const auto& s : statements) {
      if (s.rule != query->rule) continue;
      const bool direct = s.subject_keys == subject_keys;
      if (direct != want_direct) continue;
      double threshold = direct ? profile_.direct_threshold : profile_.indirect_threshold;
      if (shifted(s.object_key, rule.target_type)) {
        threshold = std::min(threshold, profile_.shift_accept_below);
      }
      threshold *= decay;
      if (s.context_sentences >= 3) threshold *= 1.0 + profile_.length_boost;
      if (confidence < threshold) {
        follow = &s;
        break;
      }
    }
  }

  std::vector<std::string> truth_surfaces;
  bool follows_truth = false;
  for (const auto& o : truth->objects) {
    truth_surfaces.push_back(profile_.ground_truth.node(o).surface);
    if (follow && o.key == follow->object_key) follows_truth = true;
  }
  auto clamp = [](double v) { return std::clamp(v, 1e-6, 1.0); };

  if (follow && !follows_truth) {
    return make_completion(follow->object_surface,
                           clamp(confidence + profile_.deviated_confidence_boost));
  }
  const double answer_conf =
      statements.empty() ? confidence : clamp(confidence + profile_.conforming_confidence_shift);

  if (confidence < profile_.unstable_below && params.temperature > 0.3 + 1e-9) {
    auto it = lexicon_by_type_.find(rule.target_type);
    if (it != lexicon_by_type_.end() && it->second.size() > 1) {
      std::string material;
      for (const auto& t : history) material += t.content + '\x1f';
      material += std::to_string(params.temperature);
      Rng rng(mix_seed(fnv1a64(material), params.seed));
      const auto& pick = it->second[rng.below(it->second.size())];
      return make_completion(pick.surface, answer_conf);
    }
  }
  return make_completion(join(truth_surfaces, "; "), answer_conf);
}

// --- synthetic worlds -------------------------------------------------------

namespace {

std::string make_name(Rng& rng) {
  static const char* kOnsets[] = {"b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p",
                                  "r", "s", "t", "v", "z", "br", "dr", "kl", "st", "tr"};
  static const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  static const char* kCodas[] = {"", "", "n", "r", "l", "s", "th", "m"};
  const std::size_t syllables = 2 + rng.below(2);
  std::string name;
  for (std::size_t i = 0; i < syllables; ++i) {
    name += kOnsets[rng.below(std::size(kOnsets))];
    name += kVowels[rng.below(std::size(kVowels))];
    if (i + 1 == syllables) name += kCodas[rng.below(std::size(kCodas))];
  }
  name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
  return name;
}

}  // namespace

Pkg make_synthetic_world(const RuleSet& rules, const WorldParams& params) {
  if (rules.types().empty()) throw Error(ErrorCode::kInvalidArgument, "rule set has no types");
  Rng rng(params.seed);
  std::set<std::string> used;
  std::map<std::string, std::vector<Entity>> by_type;
  for (const auto& t : rules.types()) {
    auto& pool = by_type[t.name];
    for (std::size_t i = 0; i < params.entities_per_type; ++i) {
      std::string surface;
      if (t.name == "Year") {
        surface = std::to_string(1850 + pool.size() * 7 + rng.below(7));
      } else {
        do {
          surface = make_name(rng);
        } while (used.count(to_lower_ascii(surface)));
      }
      if (!used.insert(to_lower_ascii(surface)).second) {
        --i;
        continue;
      }
      pool.push_back(Entity::make(surface, t.name));
    }
  }

  Pkg world(rules.id(), by_type.at(rules.types().front().name).front());
  for (const auto& [type, pool] : by_type) {
    for (const auto& e : pool) world.add_node(rules, e);
  }
  auto pick_objects = [&](const RelationRule& rule) {
    const auto& targets = by_type.at(rule.target_type);
    std::vector<Entity> objects{targets[rng.below(targets.size())]};
    if (rule.multi_valued && targets.size() > 1 && rng.below(1000) < params.multi_child_probability * 1000) {
      Entity second;
      do {
        second = targets[rng.below(targets.size())];
      } while (second.key == objects.front().key);
      objects.push_back(second);
    }
    return objects;
  };
  for (const auto& rule : rules.rules()) {
    if (!rule.multi_dependent()) {
      for (const auto& subject : by_type.at(rule.source_types[0])) {
        if (rng.below(1000) >= params.fact_probability * 1000) continue;
        const auto objects = pick_objects(rule);
        world.add_edge(rules, std::span(&subject, 1), rule.id, objects);
      }
      continue;
    }
    const auto& first = by_type.at(rule.source_types[0]);
    const auto& second = by_type.at(rule.source_types[1]);
    for (std::size_t n = 0; n < params.pair_facts_per_rule; ++n) {
      std::vector<Entity> subjects{first[rng.below(first.size())], second[rng.below(second.size())]};
      if (subjects[0].ref() == subjects[1].ref()) continue;
      if (world.find_edge(std::vector<NodeRef>{subjects[0].ref(), subjects[1].ref()}, rule.id)) {
        continue;
      }
      const auto objects = pick_objects(rule);
      world.add_edge(rules, subjects, rule.id, objects);
    }
  }
  return world;
}

}  // namespace kcp
