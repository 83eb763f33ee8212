#include "kcprobe/graph_builder.h"

#include <cmath>
#include <functional>

#include "kcprobe/error.h"
#include "kcprobe/text.h"

namespace kcp {

void BuildLimits::validate() const {
  if (max_depth < 0 || max_nodes == 0 || max_edges == 0 || per_rule_fanout_cap == 0 ||
      request_budget == 0) {
    throw Error(ErrorCode::kInvalidArgument, "build limits must be positive");
  }
}

ElicitationRecord consistent_answer(Backend& backend, const std::string& question,
                                    const Judge& judge, const PromptSet& prompts,
                                    std::uint64_t seed) {
  const ChatTurn turn{Role::kUser, render_prompt(prompts.answer, {{"question", question}})};
  ElicitationRecord record;
  std::optional<Completion> first;
  for (const double t : kElicitationTemperatures) {
    GenerationParams params;
    params.temperature = t;
    params.seed = seed;
    auto c = backend.chat(std::span(&turn, 1), params);
    record.answers.push_back(trim(c.text));
    record.temperatures.push_back(t);
    if (!first) first = std::move(c);
  }
  if (!judge.agree(question, record.answers)) return record;
  record.verdict = clean_surface(record.answers.front());
  if (const auto lp = span_logprob(*first, 0, first->text.size())) record.confidence = std::exp(*lp);
  return record;
}

namespace {

std::vector<Entity> objects_from_verdict(const std::string& verdict, const std::string& type) {
  std::vector<Entity> out;
  for (const auto& part : split(verdict, ';')) {
    const auto surface = clean_surface(part);
    if (surface.empty()) continue;
    try {
      auto e = Entity::make(surface, type);
      bool dup = false;
      for (const auto& o : out) dup = dup || o.key == e.key;
      if (!dup) out.push_back(std::move(e));
    } catch (const Error&) {
    }
  }
  return out;
}

}  // namespace

std::vector<Edge> expand_node(Pkg& graph, const Entity& entity_in, const BuildContext& ctx,
                              BuildState& state) {
  // Copy: `entity_in` may live in graph.nodes(), which grows below.
  const Entity entity = entity_in;
  std::vector<Edge> added;
  if (!graph.contains(entity.ref())) throw Error(ErrorCode::kNotFound, "entity " + entity.key);

  auto elicit = [&](const RelationRule& rule, std::vector<Entity> subjects) -> bool {
    std::vector<NodeRef> refs;
    std::vector<std::string> surfaces;
    for (const auto& s : subjects) {
      refs.push_back(s.ref());
      surfaces.push_back(s.surface);
    }
    if (!state.asked.insert({refs, rule.id}).second) return true;
    if (graph.find_edge(refs, rule.id)) return true;
    if (state.requests + kElicitationTemperatures.size() > ctx.limits.request_budget ||
        graph.edges().size() >= ctx.limits.max_edges) {
      state.exhausted = true;
      return false;
    }
    const auto question = fill_template(rule.question_template, surfaces);
    state.requests += kElicitationTemperatures.size();
    auto record = consistent_answer(ctx.backend, question, ctx.judge, ctx.prompts, ctx.seed);
    if (!record.verdict) return true;
    const auto objects = objects_from_verdict(*record.verdict, rule.target_type);
    if (objects.empty()) return true;
    std::size_t fresh = 0;
    for (const auto& o : objects) fresh += graph.contains(o.ref()) ? 0 : 1;
    if (graph.nodes().size() + fresh > ctx.limits.max_nodes) {
      state.exhausted = true;
      return false;
    }
    graph.add_edge(ctx.rules, subjects, rule.id, objects, std::move(record));
    added.push_back(*graph.find_edge(refs, rule.id));
    return true;
  };

  for (const auto& rule : ctx.rules.rules()) {
    if (!rule.multi_dependent()) {
      if (rule.source_types[0] != entity.type) continue;
      if (!elicit(rule, {entity})) return added;
      continue;
    }
    for (std::size_t slot = 0; slot < 2; ++slot) {
      if (rule.source_types[slot] != entity.type) continue;
      const auto& partner_type = rule.source_types[1 - slot];
      std::size_t tried = 0;
      // Snapshot: partners discovered by this very loop wait for their own
      // expansion.
      const auto known = graph.nodes();
      for (const auto& partner : known) {
        if (tried >= ctx.limits.per_rule_fanout_cap) break;
        if (partner.type != partner_type || partner.ref() == entity.ref()) continue;
        ++tried;
        std::vector<Entity> subjects = slot == 0 ? std::vector<Entity>{entity, partner}
                                                 : std::vector<Entity>{partner, entity};
        if (!elicit(rule, std::move(subjects))) return added;
      }
    }
  }
  return added;
}

BuildResult build_pkg(const Entity& root, const RuleSet& rules, Backend& backend,
                      const BuildLimits& limits, const Judge& judge, const PromptSet& prompts,
                      std::uint64_t seed) {
  return build_pkg(std::span(&root, 1), rules, backend, limits, judge, prompts, seed);
}

BuildResult build_pkg(std::span<const Entity> roots, const RuleSet& rules, Backend& backend,
                      const BuildLimits& limits, const Judge& judge, const PromptSet& prompts,
                      std::uint64_t seed) {
  limits.validate();
  if (roots.empty()) throw Error(ErrorCode::kInvalidArgument, "no root entity");
  for (const auto& root : roots) {
    if (!rules.has_type(root.type)) {
      throw Error(ErrorCode::kRuleViolation, "root type '" + root.type + "' is not in the rule set");
    }
  }
  BuildResult result{Pkg(rules.id(), roots.front()), false, 0};
  BuildState state;
  const BuildContext ctx{rules, backend, judge, limits, prompts, seed};
  std::set<NodeRef> visited;

  std::function<void(const Entity&, int)> visit = [&](const Entity& e, int depth) {
    if (state.exhausted || depth >= limits.max_depth) return;
    if (!visited.insert(e.ref()).second) return;
    const auto edges = expand_node(result.pkg, e, ctx, state);
    for (const auto& edge : edges) {
      for (const auto& o : edge.objects) {
        if (visited.count(o)) continue;
        const Entity child = result.pkg.node(o);
        visit(child, depth + 1);
        if (state.exhausted) return;
      }
    }
  };
  for (const auto& root : roots) {
    result.pkg.add_node(rules, root);
    const Entity stored = result.pkg.node(root.ref());
    visit(stored, 0);
  }
  result.exhausted = state.exhausted;
  result.requests = state.requests;
  return result;
}

}  // namespace kcp
