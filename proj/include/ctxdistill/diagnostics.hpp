#pragma once

#include <atomic>
#include <cstdio>
#include <string>

namespace ctxdistill {

/// Sink for pipeline diagnostics. Messages go to standard error so machine
/// readable outputs stay clean; tests construct a quiet sink and assert on
/// the counters.
class Diagnostics {
 public:
  explicit Diagnostics(bool quiet = false) : quiet_(quiet) {}

  void warn(const std::string& msg) {
    ++warnings_;
    if (!quiet_) std::fprintf(stderr, "[warn] %s\n", msg.c_str());
  }

  void info(const std::string& msg) {
    if (!quiet_) std::fprintf(stderr, "[info] %s\n", msg.c_str());
  }

  int warnings() const { return warnings_.load(); }

 private:
  bool quiet_;
  std::atomic<int> warnings_{0};
};

}  // namespace ctxdistill
