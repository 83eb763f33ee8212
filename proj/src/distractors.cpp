#include "kcprobe/distractors.h"

#include <algorithm>
#include <mutex>

#include "kcprobe/error.h"
#include "kcprobe/io.h"
#include "kcprobe/judge.h"
#include "kcprobe/rng.h"
#include "kcprobe/simulated.h"
#include "kcprobe/text.h"

namespace kcp {

std::string to_string(Method m) {
  switch (m) {
    case Method::kObject: return "Object";
    case Method::kSubject: return "Subject";
    case Method::kIndirect: return "Indirect";
  }
  return "?";
}

std::string to_string(Degree d) { return d == Degree::kTypeMatch ? "TypeMatch" : "TypeShift"; }
std::string to_string(Format f) { return f == Format::kSingleSentence ? "SingleSentence" : "Paragraph"; }
std::string to_string(Provenance p) { return p == Provenance::kDeterministic ? "deterministic" : "llm"; }

Method parse_method(const std::string& s) {
  for (const auto m : kMethods) {
    if (to_lower_ascii(to_string(m)) == to_lower_ascii(s)) return m;
  }
  throw Error(ErrorCode::kParseError, "unknown method '" + s + "'");
}

Degree parse_degree(const std::string& s) {
  for (const auto d : kDegrees) {
    if (to_lower_ascii(to_string(d)) == to_lower_ascii(s)) return d;
  }
  throw Error(ErrorCode::kParseError, "unknown degree '" + s + "'");
}

Format parse_format(const std::string& s) {
  const auto l = to_lower_ascii(s);
  if (l == "singlesentence" || l == "sentence") return Format::kSingleSentence;
  if (l == "paragraph") return Format::kParagraph;
  throw Error(ErrorCode::kParseError, "unknown format '" + s + "'");
}

std::vector<Entity> Distractor::replaced_entities() const {
  std::vector<Entity> out;
  for (std::size_t i = 0; i < edited.subjects.size() && i < original.subjects.size(); ++i) {
    if (edited.subjects[i].key != original.subjects[i].key) out.push_back(edited.subjects[i]);
  }
  if (edited.object.key != original.object.key) out.push_back(edited.object);
  return out;
}

// --- pool -------------------------------------------------------------------

EntityPool EntityPool::from_pkg(const Pkg& graph) {
  EntityPool pool;
  for (const auto& n : graph.nodes()) pool.add(n);
  return pool;
}

void EntityPool::add(const Entity& e) {
  auto& list = by_type_[e.type];
  const bool present =
      std::any_of(list.begin(), list.end(), [&](const Entity& x) { return x.key == e.key; });
  if (!present) list.push_back(e);
}

void EntityPool::add_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "entity pool must map type names to lists");
  for (const auto& [type, names] : j.items()) {
    for (const auto& n : names) add(Entity::make(n.get<std::string>(), type));
  }
}

std::vector<Entity> EntityPool::matching(const Entity& original) const {
  std::vector<Entity> out;
  auto it = by_type_.find(original.type);
  if (it == by_type_.end()) return out;
  for (const auto& e : it->second) {
    if (e.key != original.key) out.push_back(e);
  }
  return out;
}

std::vector<Entity> EntityPool::shifted(const Entity& original) const {
  std::vector<Entity> out;
  for (const auto& [type, list] : by_type_) {
    if (type == original.type) continue;
    for (const auto& e : list) {
      if (e.key != original.key) out.push_back(e);
    }
  }
  return out;
}

// --- planning and checks -----------------------------------------------------

std::vector<DistractorSpec> plan_distractor_set(const DataChain& chain) {
  std::vector<DistractorSpec> specs;
  for (std::size_t h = 0; h < chain.hop_count(); ++h) {
    for (const auto m : kMethods) {
      for (const auto d : kDegrees) {
        specs.push_back({chain.id, static_cast<int>(h), chain.labels.at(h), m, d});
      }
    }
  }
  return specs;
}

std::optional<std::string> check_distractor(const Distractor& d) {
  const auto& o = d.original;
  const auto& e = d.edited;
  if (o.rule_id != e.rule_id) return "rule changed";
  if (o.subjects.size() != e.subjects.size()) return "subject arity changed";
  bool subject_changed = false;
  for (std::size_t i = 0; i < o.subjects.size(); ++i) {
    const bool key_diff = o.subjects[i].key != e.subjects[i].key;
    if (!key_diff && o.subjects[i].type != e.subjects[i].type) return "subject retyped without replacement";
    subject_changed = subject_changed || key_diff;
  }
  const bool object_key_diff = o.object.key != e.object.key;
  if (!object_key_diff && o.object.type != e.object.type) return "object retyped without replacement";
  switch (d.method) {
    case Method::kObject:
      if (subject_changed) return "object method changed a subject";
      if (!object_key_diff) return "object method kept the object";
      break;
    case Method::kSubject:
      if (!subject_changed) return "subject method kept the subjects";
      if (object_key_diff) return "subject method changed the object";
      break;
    case Method::kIndirect:
      if (!subject_changed || !object_key_diff) return "indirect method must change subject and object";
      break;
  }
  bool any_shift = false;
  bool any_kept = false;
  auto visit = [&](const Entity& before, const Entity& after) {
    if (before.key == after.key) return;
    if (before.type == after.type) {
      any_kept = true;
    } else {
      any_shift = true;
    }
  };
  for (std::size_t i = 0; i < o.subjects.size(); ++i) visit(o.subjects[i], e.subjects[i]);
  visit(o.object, e.object);
  if (d.degree == Degree::kTypeMatch && any_shift) return "type match replaced an entity with another type";
  if (d.degree == Degree::kTypeShift && !any_shift) return "type shift kept every type";
  if (d.degree == Degree::kTypeShift && any_kept) return "type shift kept the type of a replaced entity";
  if (trim(d.text).empty()) return "empty text";
  if (d.format == Format::kParagraph) {
    const auto n = split_sentences(d.text).size();
    if (n < 3 || n > 5) return "paragraph has " + std::to_string(n) + " sentences";
    if (!judge_equivalence(d.text, e.object.surface)) return "paragraph does not mention the edited object";
  }
  return std::nullopt;
}

std::string render_text(const Triplet& triplet, const RuleSet& rules) {
  const auto& rule = rules.rule(triplet.rule_id);
  if (trim(rule.statement_template).empty()) {
    throw Error(ErrorCode::kTemplateMissing, "rule '" + rule.id + "' has no statement template");
  }
  std::vector<std::string> subjects;
  for (const auto& s : triplet.subjects) subjects.push_back(s.surface);
  return fill_template(rule.statement_template, subjects, triplet.object.surface);
}

std::string render_text(const Distractor& d, const RuleSet& rules) { return render_text(d.edited, rules); }

namespace {

std::string distractor_id(const std::string& chain_id, int hop, Method m, Degree dg, Format f) {
  return hex64(fnv1a64(chain_id + '|' + std::to_string(hop) + '|' + to_string(m) + '|' +
                       to_string(dg) + '|' + to_string(f)));
}

std::uint64_t distractor_seed(std::uint64_t seed, const std::string& chain_id, int hop, Method m,
                              Degree dg) {
  return mix_seed(seed, fnv1a64(chain_id + '|' + std::to_string(hop) + '|' + to_string(m) + '|' +
                                to_string(dg)));
}

Entity draw(const EntityPool& pool, const Entity& original, Degree degree, Rng& rng) {
  const auto candidates = degree == Degree::kTypeMatch ? pool.matching(original) : pool.shifted(original);
  if (candidates.empty()) {
    throw Error(ErrorCode::kPoolExhausted, "no " + to_string(degree) + " replacement for '" +
                                               original.surface + "' (" + original.type + ")");
  }
  return candidates[rng.below(candidates.size())];
}

std::string type_list(const RuleSet& rules, const std::string& exclude) {
  std::vector<std::string> names;
  for (const auto& t : rules.types()) {
    if (t.name != exclude) names.push_back(t.name);
  }
  return join(names, ", ");
}

std::string prompt_key(Method m, Degree d) {
  return to_lower_ascii(to_string(m)) + (d == Degree::kTypeMatch ? "_match" : "_shift");
}

Entity llm_entity(const std::string& surface, const nlohmann::json* type_hint, const Entity& original,
                  Degree degree, const RuleSet& rules, const EntityPool& pool) {
  if (type_hint && type_hint->is_string() && rules.has_type(type_hint->get<std::string>())) {
    return Entity::make(surface, type_hint->get<std::string>());
  }
  const auto key = canonical_key(surface);
  if (degree == Degree::kTypeShift) {
    for (const auto& e : pool.shifted(original)) {
      if (e.key == key) return e;
    }
  }
  return Entity::make(surface, original.type);
}

Distractor llm_edit(Distractor d, const RuleSet& rules, const EntityPool& pool, std::uint64_t seed,
                    const LlmDistractorOptions& llm) {
  const auto& o = d.original;
  const auto& rule = rules.rule(o.rule_id);
  std::vector<std::string> subject_surfaces, subject_types;
  for (const auto& s : o.subjects) {
    subject_surfaces.push_back(s.surface);
    subject_types.push_back(s.type);
  }
  const auto prompt = render_prompt(
      llm.prompts.distractor_prompt(prompt_key(d.method, d.degree)),
      {{"statement", render_text(o, rules)},
       {"relation", rule.relation_phrase},
       {"subjects", join(subject_surfaces, "; ")},
       {"object", o.object.surface},
       {"subject_types", join(subject_types, ", ")},
       {"object_type", o.object.type},
       {"shift_types", type_list(rules, d.method == Method::kSubject ? o.subjects[0].type : o.object.type)}});
  std::string last_reason;
  for (int attempt = 0; attempt <= llm.max_retries; ++attempt) {
    const ChatTurn turn{Role::kUser, prompt};
    GenerationParams params;
    params.temperature = 0.7;
    params.seed = mix_seed(seed, static_cast<std::uint64_t>(attempt));
    const auto reply = llm.backend->chat(std::span(&turn, 1), params).text;
    try {
      const auto open = reply.find('{');
      const auto close = reply.rfind('}');
      if (open == std::string::npos || close == std::string::npos || close < open) {
        throw Error(ErrorCode::kParseError, "no JSON object in reply");
      }
      const auto j = nlohmann::json::parse(reply.substr(open, close - open + 1));
      const auto& subjects = j.at("subjects");
      if (!subjects.is_array() || subjects.size() != o.subjects.size()) {
        throw Error(ErrorCode::kParseError, "subject count differs from the rule arity");
      }
      Triplet edited{{}, o.rule_id, {}};
      for (std::size_t i = 0; i < subjects.size(); ++i) {
        const nlohmann::json* hint = nullptr;
        if (j.contains("subject_types") && j["subject_types"].is_array() && i < j["subject_types"].size()) {
          hint = &j["subject_types"][i];
        }
        const auto surface = clean_surface(subjects[i].get<std::string>());
        const bool same = canonical_key(surface) == o.subjects[i].key;
        edited.subjects.push_back(same ? o.subjects[i]
                                       : llm_entity(surface, hint, o.subjects[i], d.degree, rules, pool));
      }
      const auto obj_surface = clean_surface(j.at("object").get<std::string>());
      const nlohmann::json* obj_hint = j.contains("object_type") ? &j["object_type"] : nullptr;
      edited.object = canonical_key(obj_surface) == o.object.key
                          ? o.object
                          : llm_entity(obj_surface, obj_hint, o.object, d.degree, rules, pool);
      d.edited = std::move(edited);
      d.statement = render_text(d.edited, rules);
      d.text = d.statement;
      d.provenance = Provenance::kLlm;
      if (auto why = check_distractor(d)) throw Error(ErrorCode::kGenerationRejected, *why);
      return d;
    } catch (const std::exception& e) {
      last_reason = e.what();
    }
  }
  throw Error(ErrorCode::kGenerationRejected,
              "distractor for chain " + d.chain_id + " rejected after retries: " + last_reason);
}

struct Filler {
  const char* type;  // nullptr = any type
  const char* text;
};

// {subject} and {object} refer to the edited triplet.
constexpr Filler kFillers[] = {
    {nullptr, "Historical records mention {object} in several contexts."},
    {nullptr, "As documented in many reference works, {subject} has a long and varied history."},
    {nullptr, "Scholars have written extensively about {subject}."},
    {nullptr, "{object} often comes up in discussions of this topic."},
    {nullptr, "Many sources agree on this point."},
    {nullptr, "This detail appears in a number of encyclopedias."},
    {nullptr, "Textbooks and guides frequently cite it."},
    {nullptr, "Observers regard {object} as well known among experts."},
    {"City", "{object} is known for its busy streets and old neighbourhoods."},
    {"Country", "{object} has a rich cultural heritage."},
    {"Person", "{object} is remembered by many for a long public career."},
    {"Company", "{object} employs thousands of people."},
    {"Year", "Much changed in the years around {object}."},
    {"Building", "Visitors often photograph {object}."},
    {"Language", "{object} is spoken by millions of people."},
    {"University", "{object} attracts students from around the world."},
    {"Animal", "{object} appears on many local emblems."},
    {"Sport", "{object} draws large crowds every season."},
};

const std::regex& cached_regex(const std::string& tmpl) {
  static std::mutex mutex;
  static std::map<std::string, std::regex> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(tmpl);
  if (it == cache.end()) it = cache.emplace(tmpl, template_regex(tmpl)).first;
  return it->second;
}

bool reads_as_rule_sentence(const std::string& sentence, const RuleSet& rules) {
  for (const auto& r : rules.rules()) {
    if (!trim(r.statement_template).empty() && std::regex_match(sentence, cached_regex(r.statement_template))) {
      return true;
    }
    if (std::regex_match(sentence, cached_regex(r.question_template))) return true;
  }
  return false;
}

Distractor paragraph_deterministic(Distractor d, const RuleSet& rules, std::uint64_t seed) {
  std::vector<std::string> subjects;
  for (const auto& s : d.edited.subjects) subjects.push_back(s.surface);
  const auto subject = join(subjects, " and ");
  std::vector<std::string> bank;
  for (const auto& f : kFillers) {
    if (f.type && d.edited.object.type != f.type) continue;
    auto s = replace_all(replace_all(f.text, "{subject}", subject), "{object}", d.edited.object.surface);
    if (split_sentences(s).size() != 1 || reads_as_rule_sentence(s, rules)) continue;
    bank.push_back(std::move(s));
  }
  Rng rng(mix_seed(seed, fnv1a64(d.id + "|paragraph")));
  const std::size_t total = 3 + rng.below(3);
  if (bank.size() + 1 < total) {
    throw Error(ErrorCode::kGenerationRejected, "filler bank too small for a paragraph");
  }
  rng.shuffle(bank);
  bank.resize(total - 1);
  const std::size_t at = rng.below(2);
  bank.insert(bank.begin() + static_cast<std::ptrdiff_t>(at), d.statement);
  d.text = join(bank, " ");
  d.format = Format::kParagraph;
  return d;
}

Distractor paragraph_llm(Distractor d, std::uint64_t seed, const LlmDistractorOptions& llm) {
  const auto prompt = render_prompt(llm.prompts.paragraph, {{"statement", d.statement}});
  std::string last_reason;
  for (int attempt = 0; attempt <= llm.max_retries; ++attempt) {
    const ChatTurn turn{Role::kUser, prompt};
    GenerationParams params;
    params.temperature = 0.7;
    params.seed = mix_seed(seed, static_cast<std::uint64_t>(attempt));
    Distractor candidate = d;
    candidate.text = trim(llm.backend->chat(std::span(&turn, 1), params).text);
    candidate.format = Format::kParagraph;
    candidate.provenance = Provenance::kLlm;
    if (auto why = check_distractor(candidate)) {
      last_reason = *why;
      continue;
    }
    return candidate;
  }
  throw Error(ErrorCode::kGenerationRejected, "paragraph rejected after retries: " + last_reason);
}

}  // namespace

Distractor make_distractor(const DataChain& chain, int hop_index, Method method, Degree degree,
                           const EntityPool& pool, const RuleSet& rules, std::uint64_t seed,
                           const LlmDistractorOptions* llm) {
  if (hop_index < 0 || static_cast<std::size_t>(hop_index) >= chain.hop_count()) {
    throw Error(ErrorCode::kInvalidArgument, "hop index out of range for chain " + chain.id);
  }
  Distractor d;
  d.chain_id = chain.id;
  d.hop_index = hop_index;
  d.position = chain.labels.at(hop_index);
  d.method = method;
  d.degree = degree;
  d.format = Format::kSingleSentence;
  d.id = distractor_id(chain.id, hop_index, method, degree, d.format);
  d.original = chain.triplets.at(hop_index);
  d.edited = d.original;
  const auto s = distractor_seed(seed, chain.id, hop_index, method, degree);

  if (llm && llm->backend) return llm_edit(std::move(d), rules, pool, s, *llm);

  Rng rng(s);
  // Two-subject hops get one subject replaced, chosen by the seed.
  const std::size_t slot = d.original.subjects.size() > 1 ? rng.below(d.original.subjects.size()) : 0;
  if (method == Method::kSubject || method == Method::kIndirect) {
    d.edited.subjects[slot] = draw(pool, d.original.subjects[slot], degree, rng);
  }
  if (method == Method::kObject || method == Method::kIndirect) {
    d.edited.object = draw(pool, d.original.object, degree, rng);
  }
  d.statement = render_text(d.edited, rules);
  d.text = d.statement;
  d.provenance = Provenance::kDeterministic;
  return d;
}

Distractor to_paragraph(const Distractor& d, const RuleSet& rules, std::uint64_t seed,
                        const LlmDistractorOptions* llm) {
  if (d.format != Format::kSingleSentence) {
    throw Error(ErrorCode::kInvalidArgument, "distractor " + d.id + " is already a paragraph");
  }
  Distractor base = d;
  base.id = distractor_id(d.chain_id, d.hop_index, d.method, d.degree, Format::kParagraph);
  if (llm && llm->backend) return paragraph_llm(std::move(base), seed, *llm);
  return paragraph_deterministic(std::move(base), rules, seed);
}

void to_json(nlohmann::json& j, const Distractor& d) {
  j = nlohmann::json{{"id", d.id},
                     {"chain_id", d.chain_id},
                     {"hop_index", d.hop_index},
                     {"position", d.position.str()},
                     {"method", to_string(d.method)},
                     {"degree", to_string(d.degree)},
                     {"format", to_string(d.format)},
                     {"original", d.original},
                     {"edited", d.edited},
                     {"statement", d.statement},
                     {"text", d.text},
                     {"provenance", to_string(d.provenance)}};
}

void from_json(const nlohmann::json& j, Distractor& d) {
  j.at("id").get_to(d.id);
  j.at("chain_id").get_to(d.chain_id);
  j.at("hop_index").get_to(d.hop_index);
  d.position = PositionLabel::parse(j.at("position").get<std::string>());
  d.method = parse_method(j.at("method").get<std::string>());
  d.degree = parse_degree(j.at("degree").get<std::string>());
  d.format = parse_format(j.at("format").get<std::string>());
  j.at("original").get_to(d.original);
  j.at("edited").get_to(d.edited);
  j.at("statement").get_to(d.statement);
  j.at("text").get_to(d.text);
  d.provenance = j.at("provenance").get<std::string>() == "llm" ? Provenance::kLlm : Provenance::kDeterministic;
}

std::vector<Distractor> load_distractors(const std::string& path) {
  std::vector<Distractor> out;
  for (const auto& row : read_jsonl(path)) {
    try {
      out.push_back(row.get<Distractor>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, path + ": " + e.what());
    }
  }
  return out;
}

void save_distractors(const std::vector<Distractor>& ds, const std::string& path) {
  std::vector<nlohmann::json> rows;
  for (const auto& d : ds) rows.push_back(d);
  write_jsonl(path, rows);
}

}  // namespace kcp
