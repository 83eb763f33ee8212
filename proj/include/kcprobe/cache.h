#pragma once

#include <atomic>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>

#include "kcprobe/model.h"

namespace kcp {

/// On-disk response cache: one JSON file per request, named by the hash of
/// (model id, history, params). Each file also stores the request so a
/// hash collision is detected and treated as a miss.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  static nlohmann::json request_json(const std::string& model_id, std::span<const ChatTurn> history,
                                     const GenerationParams& params);
  static std::string key(const std::string& model_id, std::span<const ChatTurn> history,
                         const GenerationParams& params);

  /// Unreadable or corrupted entries are skipped with a warning on stderr.
  std::optional<Completion> get(const std::string& model_id, std::span<const ChatTurn> history,
                                const GenerationParams& params) const;
  void put(const std::string& model_id, std::span<const ChatTurn> history,
           const GenerationParams& params, const Completion& completion);

  const std::filesystem::path& dir() const { return dir_; }
  std::uint64_t corrupted() const { return corrupted_.load(); }

 private:
  std::filesystem::path path_for(const std::string& key) const;

  std::filesystem::path dir_;
  std::mutex write_mutex_;
  mutable std::atomic<std::uint64_t> corrupted_{0};
};

/// Looks up the cache first; on a miss calls `backend` and stores the
/// result. A null backend means replay-only: misses throw kBackendError.
Completion cached_chat(ResponseCache& cache, Backend* backend, const std::string& model_id,
                       std::span<const ChatTurn> history, const GenerationParams& params);

class CachedBackend : public Backend {
 public:
  /// `inner` may be null for replay-only use; `model_id` then names the
  /// recorded model.
  CachedBackend(ResponseCache& cache, Backend* inner, std::string model_id = {});

  std::string model_id() const override { return model_id_; }
  Completion chat(std::span<const ChatTurn> history, const GenerationParams& params) override;

  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }

 private:
  ResponseCache& cache_;
  Backend* inner_;
  std::string model_id_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

}  // namespace kcp
