#include "ctxdistill/cache.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "ctxdistill/errors.hpp"
#include "ctxdistill/jsonl.hpp"
#include "ctxdistill/rng.hpp"

namespace ctxdistill::gen {

nlohmann::json reply_to_json(const BackendReply& reply) {
  nlohmann::json j;
  j["text"] = reply.text;
  nlohmann::json lp = nlohmann::json::array();
  for (const auto& tok : reply.logprobs) {
    nlohmann::json jt;
    jt["token"] = tok.token;
    nlohmann::json top = nlohmann::json::array();
    for (const auto& [t, p] : tok.top) top.push_back({t, p});
    jt["top"] = std::move(top);
    lp.push_back(std::move(jt));
  }
  j["logprobs"] = std::move(lp);
  return j;
}

BackendReply reply_from_json(const nlohmann::json& j) {
  BackendReply reply;
  reply.text = j.at("text").get<std::string>();
  for (const auto& jt : j.at("logprobs")) {
    TokenTopLogprobs tok;
    tok.token = jt.at("token").get<std::string>();
    for (const auto& pair : jt.at("top")) {
      tok.top.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<double>());
    }
    reply.logprobs.push_back(std::move(tok));
  }
  return reply;
}

RequestCache::RequestCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw InputError("cannot create cache directory: " + dir_.string());
}

nlohmann::json RequestCache::make_key(Role role, const std::string& prompt,
                                      const SamplingParams& params) {
  nlohmann::json key;  // plain json: keys serialize sorted, canonically
  key["role"] = role_name(role);
  key["prompt"] = prompt;
  key["temperature"] = params.temperature;
  key["max_tokens"] = params.max_tokens;
  key["seed"] = params.seed;
  key["stop"] = params.stop;
  key["top_logprobs"] = params.top_logprobs;
  return key;
}

std::filesystem::path RequestCache::slot_path(const std::string& hash_hex, int probe) const {
  std::string name = hash_hex;
  if (probe > 0) name += "-" + std::to_string(probe);
  return dir_ / (name + ".json");
}

namespace {

std::string key_hash_hex(const nlohmann::json& key) {
  const std::uint64_t h = fnv1a64(key.dump());
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace

std::optional<BackendReply> RequestCache::lookup(const nlohmann::json& key) const {
  const std::string hash = key_hash_hex(key);
  for (int probe = 0; probe < 64; ++probe) {
    const auto path = slot_path(hash, probe);
    if (!std::filesystem::exists(path)) return std::nullopt;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(read_text_file(path.string()));
    } catch (const std::exception&) {
      return std::nullopt;  // torn entry: treat as a miss, store will re-probe
    }
    if (doc.contains("key") && doc.at("key") == key) {
      return reply_from_json(doc.at("reply"));
    }
  }
  throw PipelineError("request cache probe chain exhausted for hash " + hash);
}

void RequestCache::store(const nlohmann::json& key, const BackendReply& reply) {
  const std::string hash = key_hash_hex(key);
  for (int probe = 0; probe < 64; ++probe) {
    const auto path = slot_path(hash, probe);
    if (std::filesystem::exists(path)) {
      try {
        const nlohmann::json doc = nlohmann::json::parse(read_text_file(path.string()));
        if (doc.contains("key") && doc.at("key") == key) return;  // already cached
        continue;  // genuine hash collision: probe the next slot
      } catch (const std::exception&) {
        // torn entry: overwrite it below
      }
    }
    nlohmann::json doc;
    doc["key"] = key;
    doc["reply"] = reply_to_json(reply);
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw InputError("cannot write cache entry: " + tmp);
      out << doc.dump() << '\n';
    }
    std::filesystem::rename(tmp, path);
    return;
  }
  throw PipelineError("request cache probe chain exhausted for hash " + hash);
}

CachingBackend::CachingBackend(std::shared_ptr<GenerationBackend> inner,
                               std::filesystem::path cache_dir)
    : inner_(std::move(inner)), cache_(std::move(cache_dir)) {}

BackendReply CachingBackend::complete(Role role, const std::string& prompt,
                                      const SamplingParams& params) {
  const nlohmann::json key = RequestCache::make_key(role, prompt, params);
  const std::string key_str = key.dump();
  {
    std::unique_lock<std::mutex> lock(mutex_);
    for (;;) {
      if (auto hit = cache_.lookup(key)) {
        ++hits_;
        return *hit;
      }
      if (in_flight_.count(key_str) == 0) break;
      // Another thread is already fetching exactly this request; wait for
      // its stored reply instead of issuing a duplicate.
      in_flight_done_.wait(lock);
    }
    in_flight_.insert(key_str);
  }
  ++misses_;
  BackendReply reply;
  try {
    reply = inner_->complete(role, prompt, params);
  } catch (...) {
    std::lock_guard<std::mutex> lock(mutex_);
    in_flight_.erase(key_str);
    in_flight_done_.notify_all();
    throw;
  }
  {
    std::lock_guard<std::mutex> lock(mutex_);
    cache_.store(key, reply);
    in_flight_.erase(key_str);
    in_flight_done_.notify_all();
  }
  return reply;
}

}  // namespace ctxdistill::gen
