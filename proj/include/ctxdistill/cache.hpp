#pragma once

#include <condition_variable>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include "json.hpp"

#include "ctxdistill/backend.hpp"

namespace ctxdistill::gen {

nlohmann::json reply_to_json(const BackendReply& reply);
BackendReply reply_from_json(const nlohmann::json& j);

/// Disk cache of backend replies, keyed by (role, full prompt, sampling
/// params). Entries are write-once files named by a hash of the canonical
/// key; the stored key is verified on every hit, and hash collisions fall
/// through to probe suffixes. Safe for concurrent readers and writers.
class RequestCache {
 public:
  explicit RequestCache(std::filesystem::path dir);

  static nlohmann::json make_key(Role role, const std::string& prompt,
                                 const SamplingParams& params);

  std::optional<BackendReply> lookup(const nlohmann::json& key) const;
  void store(const nlohmann::json& key, const BackendReply& reply);

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path slot_path(const std::string& hash_hex, int probe) const;

  std::filesystem::path dir_;
};

/// Backend wrapper that consults the cache before delegating. A fully warm
/// cache replays a run without a single request to the inner backend.
/// Concurrent identical requests are deduplicated: one caller issues the
/// request, the rest wait for its stored reply. Distinct requests proceed in
/// parallel.
class CachingBackend final : public GenerationBackend {
 public:
  CachingBackend(std::shared_ptr<GenerationBackend> inner, std::filesystem::path cache_dir);

  BackendReply complete(Role role, const std::string& prompt,
                        const SamplingParams& params) override;

  int hit_count() const { return hits_.load(); }
  int miss_count() const { return misses_.load(); }

 private:
  std::shared_ptr<GenerationBackend> inner_;
  RequestCache cache_;
  mutable std::mutex mutex_;  ///< guards cache file probe/store + in-flight set
  std::condition_variable in_flight_done_;
  std::set<std::string> in_flight_;  ///< canonical keys currently being fetched
  std::atomic<int> hits_{0};
  std::atomic<int> misses_{0};
};

}  // namespace ctxdistill::gen
