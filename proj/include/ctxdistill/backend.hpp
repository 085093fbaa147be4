#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace ctxdistill::gen {

/// Which model role a request targets. Base completions continue raw text;
/// instruct requests expect an instruction-following reply. The distinction
/// matters for sampling defaults and for cache keying.
enum class Role { kBase, kInstruct };

inline const char* role_name(Role r) { return r == Role::kBase ? "base" : "instruct"; }

struct SamplingParams {
  double temperature = 1.0;
  int max_tokens = 512;
  std::vector<std::string> stop;
  std::uint64_t seed = 0;
  int top_logprobs = 0;  ///< 0 disables the per-token logprob channel.
};

/// Per-generated-token alternatives from the backend's top-logprobs channel.
struct TokenTopLogprobs {
  std::string token;
  std::vector<std::pair<std::string, double>> top;
};

struct BackendReply {
  std::string text;
  std::vector<TokenTopLogprobs> logprobs;  ///< empty when the channel is off
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual BackendReply complete(Role role, const std::string& prompt,
                                const SamplingParams& params) = 0;
};

/// Backend driven by a deterministic function. Counts requests so tests can
/// assert cache behavior.
class ScriptedBackend final : public GenerationBackend {
 public:
  using Fn = std::function<BackendReply(Role, const std::string&, const SamplingParams&)>;

  explicit ScriptedBackend(Fn fn) : fn_(std::move(fn)) {}

  BackendReply complete(Role role, const std::string& prompt,
                        const SamplingParams& params) override {
    ++requests_;
    return fn_(role, prompt, params);
  }

  int request_count() const { return requests_.load(); }

 private:
  Fn fn_;
  std::atomic<int> requests_{0};
};

/// The built-in deterministic mock model. It recognizes each pipeline prompt
/// template and produces plausible structured replies:
///   - decomposition: splits the content block into per-line items
///   - seed selection: picks 3-5 listed guidelines by prompt/seed hash
///   - query generation: emits a distinct question derived from the selection
///   - verification: yes iff the unit shares a content word (4+ chars,
///     excluding a small stopword list) with the question; the batched
///     variant applies the same predicate per numbered unit
///   - anything else: a short deterministic answer derived from the prompt
///
/// When the material is the retail discount domain the mock understands it
/// for real: queries are well-formed purchase scenarios consistent with the
/// selected rules, verification applies the exact rule condition, and
/// answers are priced worked solutions whose quality degrades when many
/// inapplicable rules crowd the prompt.
ScriptedBackend::Fn generic_scripted_model();

}  // namespace ctxdistill::gen
