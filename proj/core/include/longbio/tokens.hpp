#pragma once

#include <cstdint>
#include <memory>
#include <string>

namespace longbio {

// Token counting behind a small handle. Counter specs:
//   "chars"        bytes/4, rounded up
//   "words"        whitespace words x1.3, rounded up
//   "cmd:CMDLINE"  run CMDLINE via the shell, text on stdin, integer on stdout
//   "svc:URL"      HTTP POST text to URL, body is the integer (or {"tokens":n})
// The built-ins compose additively over blank-line-joined blocks, which the
// packer exploits; external counters are treated as opaque.
class TokenCounter {
 public:
  static TokenCounter make(const std::string& spec);

  int64_t count(const std::string& text) const;
  const std::string& spec() const { return spec_; }
  // true when counts can be tracked incrementally without re-counting
  bool exact_incremental() const { return kind_ == Kind::chars || kind_ == Kind::words; }

  // building blocks for incremental tracking (valid for built-ins)
  static int64_t words_in(const std::string& text);
  static int64_t chars_tokens(int64_t bytes) { return (bytes + 3) / 4; }
  static int64_t words_tokens(int64_t words) { return (words * 13 + 9) / 10; }

  int64_t tokens_from_parts(int64_t bytes, int64_t words) const;

 private:
  enum class Kind { chars, words, cmd, svc };
  Kind kind_ = Kind::chars;
  std::string spec_;
  std::string target_;  // command line or URL
};

}  // namespace longbio
