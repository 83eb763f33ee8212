#include "kcprobe/cache.h"

#include <fstream>
#include <iostream>
#include <sstream>

#include "kcprobe/error.h"
#include "kcprobe/io.h"
#include "kcprobe/text.h"

namespace kcp {

using nlohmann::json;

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

json ResponseCache::request_json(const std::string& model_id, std::span<const ChatTurn> history,
                                 const GenerationParams& params) {
  json messages = json::array();
  for (const auto& t : history) messages.push_back(t);
  return json{{"model", model_id}, {"messages", messages}, {"params", params}};
}

std::string ResponseCache::key(const std::string& model_id, std::span<const ChatTurn> history,
                               const GenerationParams& params) {
  return hex64(fnv1a64(request_json(model_id, history, params).dump()));
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<Completion> ResponseCache::get(const std::string& model_id,
                                             std::span<const ChatTurn> history,
                                             const GenerationParams& params) const {
  const json request = request_json(model_id, history, params);
  const auto path = path_for(hex64(fnv1a64(request.dump())));
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    const json entry = json::parse(ss.str());
    if (entry.at("request") != request) return std::nullopt;
    return entry.at("completion").get<Completion>();
  } catch (const std::exception& e) {
    ++corrupted_;
    std::cerr << "warning: ignoring corrupted cache entry " << path.string() << ": " << e.what()
              << "\n";
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& model_id, std::span<const ChatTurn> history,
                        const GenerationParams& params, const Completion& completion) {
  const json request = request_json(model_id, history, params);
  const json entry{{"request", request}, {"completion", completion}};
  const auto path = path_for(hex64(fnv1a64(request.dump())));
  std::lock_guard lock(write_mutex_);
  write_file(path.string(), entry.dump(1) + "\n");
}

Completion cached_chat(ResponseCache& cache, Backend* backend, const std::string& model_id,
                       std::span<const ChatTurn> history, const GenerationParams& params) {
  if (auto hit = cache.get(model_id, history, params)) return *hit;
  if (!backend) {
    throw Error(ErrorCode::kBackendError,
                "replay cache miss for model '" + model_id + "' (no live backend)");
  }
  Completion c = backend->chat(history, params);
  cache.put(model_id, history, params, c);
  return c;
}

CachedBackend::CachedBackend(ResponseCache& cache, Backend* inner, std::string model_id)
    : cache_(cache), inner_(inner), model_id_(std::move(model_id)) {
  if (model_id_.empty()) {
    if (!inner_) throw Error(ErrorCode::kInvalidArgument, "replay-only cache needs a model id");
    model_id_ = inner_->model_id();
  }
}

Completion CachedBackend::chat(std::span<const ChatTurn> history, const GenerationParams& params) {
  check_history(history);
  if (auto hit = cache_.get(model_id_, history, params)) {
    ++hits_;
    return *hit;
  }
  ++misses_;
  if (!inner_) {
    throw Error(ErrorCode::kBackendError,
                "replay cache miss for model '" + model_id_ + "' (no live backend)");
  }
  Completion c = inner_->chat(history, params);
  cache_.put(model_id_, history, params, c);
  return c;
}

}  // namespace kcp
