#pragma once

#include <fstream>
#include <functional>
#include <string>

#include "json.hpp"

#include "ctxdistill/errors.hpp"
#include "ctxdistill/version.hpp"

namespace ctxdistill {

/// Line-delimited JSON writer. Records are appended one per line; the file
/// begins with a provenance header record.
class JsonlWriter {
 public:
  JsonlWriter(const std::string& path, const nlohmann::json& config)
      : out_(path, std::ios::trunc) {
    if (!out_) throw InputError("cannot open for writing: " + path);
    write(file_header(config));
  }

  template <class Json>
  void write(const Json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

/// Reads every non-header record of a line-delimited JSON file.
inline void read_jsonl(const std::string& path,
                       const std::function<void(const nlohmann::json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open: " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json record = nlohmann::json::parse(line);
    if (is_file_header(record)) continue;
    fn(record);
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << text;
}

}  // namespace ctxdistill
